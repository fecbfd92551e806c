"""Optimal quality allocation and joint (batch, quality, horizon) schedules."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import zeta

from .optim import bisect, golden_section
from .schedule import JointSchedule, NoiseModel, sigma_eff, sqrt_kernel_batch
from .spectrum import (KernelForm, KernelSpec, ProblemInstance, Regime, UnsupportedRegimeError,
                       kernel, kernel_function, sqrt_kernel_integral)
from .theory import objective

HORIZON_RTOL = 1e-4


class Family(str, enum.Enum):
    CONSTANT_UNIFORM = "ConstantUniform"
    SQRTK_UNIFORM = "SqrtKUniform"
    JOINT_NOISE_LIMITED = "JointNoiseLimited"


class InfeasibleBudgetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ScheduleSolution:
    regime: Regime
    T_star: float
    constants: dict
    schedule: JointSchedule
    predicted_risk: float
    notes: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Quality allocation for a fixed batch profile


def quality_scores(schedule: JointSchedule, kernel_fn: Callable) -> np.ndarray:
    """``S_b(k) = K(T - k eta) / B_k^2``."""
    T = schedule.horizon
    return np.asarray(kernel_fn(T - schedule.times), dtype=np.float64) / schedule.batch ** 2


def allocate_quality(schedule: JointSchedule, noise: NoiseModel, kernel_fn: Callable,
                     tie_rtol: float = 1e-9) -> JointSchedule:
    """Continuous-knapsack allocation of the high-quality budget.

    Steps are filled with ``p = 1`` in decreasing score order until
    ``rho * total_data`` is placed; the step that straddles the budget gets a
    fractional ``p``.  Scores equal to within ``tie_rtol`` count as ties and are
    broken towards later steps.
    """
    S = quality_scores(schedule, kernel_fn)
    key = np.round(S / S.max() / tie_rtol)
    order = np.lexsort((-np.arange(S.size), -key))
    mass = schedule.batch * schedule.eta
    remaining = noise.rho * float(mass.sum())
    # cumulative subtraction leaves round-off; treat it as spent
    eps = 1e-12 * float(mass.sum())
    p = np.zeros(S.size)
    for k in order:
        if remaining <= eps:
            break
        take = min(1.0, remaining / mass[k])
        p[k] = take
        remaining -= take * mass[k]
    return schedule.with_quality(p)


def noise_integral(schedule: JointSchedule, noise: NoiseModel, kernel_fn: Callable) -> float:
    """Discretised ``int_0^T K(T-t) sigma_eff^2(t) / b(t) dt`` on the schedule's steps."""
    w = np.asarray(kernel_fn(schedule.horizon - schedule.times), dtype=np.float64)
    return float(np.sum(w * sigma_eff(noise, schedule.quality) / schedule.batch) * schedule.eta)


# ---------------------------------------------------------------------------
# Horizon optimisation


def _power_kernel_sum(instance: ProblemInstance, eta: float, K: int) -> float:
    # sum_{d=1}^{K} (1 + d eta)^-gamma via Hurwitz zeta
    g = instance.gamma
    q = 1.0 + 1.0 / eta
    return eta ** (-g) * float(zeta(g, q) - zeta(g, q + K))


def family_objective(instance: ProblemInstance, noise: NoiseModel, D: float, family: Family,
                     eta: float, B_min: float = 1.0,
                     kernel_spec: Optional[KernelSpec] = None) -> Callable[[float], float]:
    spec = kernel_spec or KernelSpec.power()
    family = Family(family)
    s = instance.s
    if family is Family.JOINT_NOISE_LIMITED:
        kap = noise.kappa
        return lambda T: T ** (-s) + eta * kap * sqrt_kernel_integral(spec, instance, T) ** 2 / D
    if family is Family.CONSTANT_UNIFORM:
        sig = noise.mean_sigma_sq

        def f(T):
            K = max(1, int(round(T / eta)))
            Tm = K * eta
            if KernelForm(spec.form) is KernelForm.POWER:
                ksum = _power_kernel_sum(instance, eta, K)
            else:
                ksum = float(np.sum(kernel(spec, instance, eta * np.arange(1, K + 1))))
            return Tm ** (-s) + eta * eta * sig * (Tm / D) * ksum
        return f
    kfn = kernel_function(spec, instance)

    def f(T):
        sch, _ = sqrt_kernel_batch(D, T, eta, kfn, B_floor=B_min, rho=noise.rho)
        return objective(instance, noise, sch, spec)
    return f


def optimize_horizon(instance: ProblemInstance, noise: NoiseModel, D: float, family: Family,
                     eta: float, B_min: float = 1.0, kernel_spec: Optional[KernelSpec] = None,
                     rtol: float = HORIZON_RTOL) -> float:
    """Minimise a schedule family's objective over ``T in [1, D/B_min]`` (golden section)."""
    family = Family(family)
    if family is Family.JOINT_NOISE_LIMITED and instance.regime is not Regime.NOISE_LIMITED:
        raise UnsupportedRegimeError(f"{family.value} needs a noise-limited instance, got {instance.regime.value}")
    hi = D / B_min
    if hi <= 1.0:
        raise InfeasibleBudgetError(f"D/B_min = {hi:g} leaves no room for a horizon above 1")
    f = family_objective(instance, noise, D, family, eta, B_min, kernel_spec)
    return golden_section(f, 1.0, hi, rtol=rtol).x


# ---------------------------------------------------------------------------
# Noise-limited joint optimum


def _require(instance: ProblemInstance, regime: Regime):
    if instance.regime is Regime.CRITICAL:
        raise UnsupportedRegimeError(
            f"critical regime unsupported: s = {instance.s:g} equals 1 - 1/beta = {instance.s_crit:g}")
    if instance.regime is not regime:
        raise UnsupportedRegimeError(
            f"instance is {instance.regime.value} (s={instance.s:g}, 1-1/beta={instance.s_crit:g}); "
            f"this planner handles {regime.value}")


def noise_limited_split(noise: NoiseModel, D: float, A: float) -> dict:
    """Optimal split of the sqrt-kernel mass between low- and high-quality regions."""
    g, b, rho = noise.sigma_good_sq, noise.sigma_bad_sq, noise.rho
    den = (1.0 - rho) * g + rho * b
    A1 = rho * b / den * A
    A0 = A - A1
    return {
        "A": A, "A0": A0, "A1": A1,
        "C0": (1.0 - rho) * D / A0, "C1": rho * D / A1,
        "C": D * b / (noise.kappa * A),
        "kappa": noise.kappa, "r": noise.r,
    }


def _materialize_noise_limited(T: float, eta: float, kernel_fn: Callable, noise: NoiseModel,
                               D: float) -> tuple[JointSchedule, dict]:
    K = max(1, int(round(T / eta)))
    Tm = K * eta
    w = np.sqrt(np.asarray(kernel_fn(Tm - np.arange(K) * eta), dtype=np.float64))
    r, rho = noise.r, noise.rho
    # boundary step j: steps < j off S, steps > j in S, step j split by q in [0, 1]
    below = np.concatenate([[0.0], np.cumsum(w)[:-1]])
    above = w.sum() - below - w
    q = (rho * (below + r * above + w) - r * above) / (w * (r + rho - rho * r))
    ok = np.flatnonzero((q >= 0) & (q <= 1))
    if ok.size == 0:
        raise InfeasibleBudgetError("no step boundary realises the high-quality budget")
    j = int(ok[-1])
    qj = float(q[j])
    mix = 1.0 - qj + qj * r
    C0 = D / (eta * (below[j] + r * above[j] + w[j] * mix))
    batch = np.where(np.arange(K) < j, C0 * w, r * C0 * w)
    batch[j] = C0 * w[j] * mix
    p = (np.arange(K) > j).astype(float)
    p[j] = qj * r / mix
    info = {"boundary_step": j, "boundary_fraction": qj, "C0_lattice": C0, "C1_lattice": r * C0,
            "T_lattice": Tm}
    return JointSchedule(eta, batch, p), info


def plan_noise_limited(instance: ProblemInstance, noise: NoiseModel, D: float, eta: float,
                       B_min: float = 1.0, kernel_spec: Optional[KernelSpec] = None) -> ScheduleSolution:
    """Joint optimum when noise accumulation is the bottleneck.

    The high-quality set is the terminal suffix of the degenerate optimal
    family.  On the step lattice the split constants are re-normalised so both
    budgets hold exactly while keeping ``C1 = r*C0``; the step containing the
    quality boundary carries a fractional quality.
    """
    _require(instance, Regime.NOISE_LIMITED)
    spec = kernel_spec or KernelSpec.power()
    T = optimize_horizon(instance, noise, D, Family.JOINT_NOISE_LIMITED, eta, B_min, spec)
    A = sqrt_kernel_integral(spec, instance, T)
    consts = noise_limited_split(noise, D, A)
    if KernelForm(spec.form) is KernelForm.POWER:
        delta = 1.0 / (2.0 * instance.beta)
        u_s = (1.0 + delta * consts["A1"]) ** (1.0 / delta) - 1.0
    else:
        u_s = bisect(lambda u: sqrt_kernel_integral(spec, instance, u) - consts["A1"], 0.0, T)
    consts.update(T_star=T, Ts=T - u_s, I_T=A,
                  T_closed=(instance.s * D / (4 * instance.beta * eta * noise.kappa))
                  ** (1.0 / (instance.s + 1.0 / instance.beta)))
    sch, info = _materialize_noise_limited(T, eta, kernel_function(spec, instance), noise, D)
    consts.update(info)
    notes = []
    if sch.batch.min() < B_min:
        raise InfeasibleBudgetError(
            f"minimum batch {sch.batch.min():.4g} falls below B_min={B_min}; "
            "budget too small for the floor to be inactive")
    return ScheduleSolution(Regime.NOISE_LIMITED, T, consts, sch,
                            objective(instance, noise, sch, spec), notes)


# ---------------------------------------------------------------------------
# Signal-limited joint optimum


def ramp_data(T4: float, B: float, delta: float) -> float:
    """Data consumed by the ramp phase: ``(B/delta) * [(T4+1) - (T4+1)^(1-delta)]``."""
    return B / delta * ((T4 + 1.0) - (T4 + 1.0) ** (1.0 - delta))


def ramp_batch(t, T_star: float, T4: float, B: float, delta: float):
    """Ramp-phase batch ``B * ((T* - t + 1)/(T4 + 1))^(delta - 1)``."""
    return B * ((T_star - np.asarray(t, dtype=np.float64) + 1.0) / (T4 + 1.0)) ** (delta - 1.0)


def signal_limited_T4(instance: ProblemInstance, noise: NoiseModel, D: float, B: float, eta: float) -> float:
    s, g = instance.s, instance.gamma
    return (eta * noise.sigma_good_sq / (s * B ** (s + 2.0))) ** (1.0 / g) * D ** ((s + 1.0) / g)


def _phase3_length(T4: float, rho: float, D: float, B: float, delta: float) -> float:
    return rho * D / B - ramp_data(T4, B, delta) / B


def _materialize_signal_limited(T4: float, noise: NoiseModel, D: float, B: float, eta: float,
                                delta: float) -> tuple[JointSchedule, dict]:
    rho = noise.rho
    n1 = int(round((1.0 - rho) * D / B / eta))
    n4 = int(round(T4 / eta))
    u = eta * np.arange(n4, 0, -1)
    ramp = B * ((u + 1.0) / (n4 * eta + 1.0)) ** (delta - 1.0)
    n3 = int(round((rho * D - float(ramp.sum()) * eta) / (B * eta)))
    if n3 < 0:
        raise InfeasibleBudgetError("ramp phase alone exceeds the high-quality budget")
    batch = np.concatenate([np.full(n1 + n3, B), ramp])
    p = np.concatenate([np.zeros(n1), np.ones(n3 + n4)])
    return JointSchedule(eta, batch, p), {"n1": n1, "n3": n3, "n4": n4}


def plan_signal_limited(instance: ProblemInstance, noise: NoiseModel, D: float, B_min: float,
                        eta: float, refine: bool = False,
                        kernel_spec: Optional[KernelSpec] = None) -> ScheduleSolution:
    """Three-phase schedule: low-quality flat, high-quality flat, high-quality ramp-up."""
    _require(instance, Regime.SIGNAL_LIMITED)
    if D < B_min:
        raise InfeasibleBudgetError(f"budget D={D} is below B_min={B_min}")
    spec = kernel_spec or KernelSpec.power()
    B, rho = float(B_min), noise.rho
    delta = 1.0 / (2.0 * instance.beta)
    T1 = (1.0 - rho) * D / B
    T4_closed = signal_limited_T4(instance, noise, D, B, eta)
    notes = []

    T4 = T4_closed
    if not refine and _phase3_length(T4, rho, D, B, delta) < 0:
        notes.append("closed-form ramp leaves negative phase-2 time; refined numerically")
        refine = True
    if refine:
        hq_steps = rho * D / B
        if hq_steps <= 1.0 or _phase3_length(1.0, rho, D, B, delta) < 0:
            raise InfeasibleBudgetError("budget below asymptotic validity")
        # the ramp carries at least B per unit time, so phase 2 vanishes before T4 = hq_steps
        T4_max = bisect(lambda x: _phase3_length(x, rho, D, B, delta), 1.0, hq_steps)

        def f(x):
            sch, _ = _materialize_signal_limited(x, noise, D, B, eta, delta)
            return objective(instance, noise, sch, spec)
        T4 = golden_section(f, 1.0, T4_max, rtol=HORIZON_RTOL).x

    T3 = _phase3_length(T4, rho, D, B, delta)
    T_star = T1 + T3 + T4
    sch, info = _materialize_signal_limited(T4, noise, D, B, eta, delta)
    consts = {
        "T1": T1, "T3": T3, "T4": T4, "T4_closed": T4_closed, "T_star": T_star,
        "delta": delta, "gamma": instance.gamma, "B_min": B,
        "r": noise.r, "kappa": noise.kappa,
        "ramp_data": ramp_data(T4, B, delta),
        "T_lattice": sch.horizon,
        "T_closed": D / B - (2.0 * instance.beta - 1.0) * T4_closed,
    }
    consts.update(info)
    return ScheduleSolution(Regime.SIGNAL_LIMITED, T_star, consts, sch,
                            objective(instance, noise, sch, spec), notes)


def plan(instance: ProblemInstance, noise: NoiseModel, D: float, eta: float, B_min: float = 1.0,
         refine: bool = False, regime: Optional[Regime] = None) -> ScheduleSolution:
    """Dispatch on the instance regime (or a forced one)."""
    regime = Regime(regime) if regime is not None else instance.regime
    if regime is Regime.NOISE_LIMITED:
        return plan_noise_limited(instance, noise, D, eta, B_min)
    if regime is Regime.SIGNAL_LIMITED:
        return plan_signal_limited(instance, noise, D, B_min, eta, refine)
    raise UnsupportedRegimeError(
        f"critical regime unsupported: s = {instance.s:g} equals 1 - 1/beta = {instance.s_crit:g}")
