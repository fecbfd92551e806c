"""Quality-aware scaling-law predictions for arbitrary joint schedules."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .schedule import JointSchedule, NoiseModel, sigma_eff
from .simulator import RiskTrajectory, Source, record_steps
from .spectrum import KernelSpec, ProblemInstance, bias_curve, kernel


@dataclass(frozen=True, eq=False)
class FslPrediction:
    trajectory: RiskTrajectory
    bias_term: np.ndarray
    noise_term: np.ndarray
    scale: float = 1.0

    @property
    def unscaled(self) -> np.ndarray:
        return self.bias_term + self.noise_term

    @property
    def times(self) -> np.ndarray:
        return self.trajectory.times


def kernel_lattice(spec: KernelSpec, instance: ProblemInstance, eta: float, K: int) -> np.ndarray:
    """``K(d*eta)`` for ``d = 1..K``."""
    return np.asarray(kernel(spec, instance, eta * np.arange(1, K + 1)), dtype=np.float64)


def noise_accumulation(lattice: np.ndarray, rates: np.ndarray, eta: float, ks) -> np.ndarray:
    """``eta^2 * sum_{m<k} K((k-m) eta) * rates_m`` at each step index in ``ks``.

    Left-Riemann at step ``eta``; the strict ``m < k`` excludes the self term.
    """
    ks = np.atleast_1d(ks)
    out = np.empty(ks.size)
    for i, k in enumerate(ks):
        k = int(k)
        out[i] = float(np.dot(lattice[:k][::-1], rates[:k])) if k > 0 else 0.0
    return eta * eta * out


def predict(instance: ProblemInstance, noise: NoiseModel, schedule: JointSchedule,
            kernel_spec: Optional[KernelSpec] = None, eval_stride: int = 1) -> FslPrediction:
    """Bias curve plus noise-accumulation integral on the simulator's record grid."""
    spec = kernel_spec or KernelSpec.exact()
    ks = record_steps(schedule.steps, eval_stride)
    t = ks * schedule.eta
    rates = sigma_eff(noise, schedule.quality) / schedule.batch
    lattice = kernel_lattice(spec, instance, schedule.eta, schedule.steps)
    bias = np.asarray(bias_curve(instance, t))
    nz = noise_accumulation(lattice, np.asarray(rates, dtype=np.float64), schedule.eta, ks)
    traj = RiskTrajectory(t, bias + nz, np.zeros(t.size), Source.THEORY)
    return FslPrediction(traj, bias, nz, 1.0)


def fit_scale(prediction: FslPrediction, measured: RiskTrajectory,
              t_min: Optional[float] = None) -> FslPrediction:
    """Single multiplicative constant: median of measured / predicted ratios.

    ``t_min`` restricts the fit to ``t >= t_min``; by default every point is used.
    """
    if (measured.times.shape != prediction.times.shape
            or not np.allclose(measured.times, prediction.times, rtol=1e-12, atol=0)):
        raise ValueError("prediction and measurement must share the same time grid")
    sel = np.ones(measured.times.size, dtype=bool) if t_min is None else measured.times >= t_min
    base = prediction.unscaled[sel]
    ok = base > 0
    if not np.any(ok):
        raise ValueError("no points with a positive prediction to fit against")
    scale = float(np.median(measured.mean_risk[sel][ok] / base[ok]))
    traj = replace(prediction.trajectory, mean_risk=scale * prediction.unscaled)
    return replace(prediction, trajectory=traj, scale=scale)


def max_relative_deviation(prediction: FslPrediction, measured: RiskTrajectory,
                           t_from: float) -> float:
    sel = measured.times >= t_from
    th = prediction.trajectory.mean_risk[sel]
    return float(np.max(np.abs(measured.mean_risk[sel] - th) / th))


def objective_from_rates(instance: ProblemInstance, eta: float, rates: np.ndarray,
                         kernel_spec: Optional[KernelSpec] = None) -> float:
    """``T^-s + eta * int_0^T K(T-t) rate(t) dt`` with ``T = len(rates)*eta``.

    ``rates`` holds ``sigma_eff^2 / b`` per step; zeros model an infinite batch.
    """
    spec = kernel_spec or KernelSpec.power()
    K = len(rates)
    T = K * eta
    lattice = kernel_lattice(spec, instance, eta, K)
    return T ** (-instance.s) + float(noise_accumulation(lattice, np.asarray(rates, float), eta, [K])[0])


def objective(instance: ProblemInstance, noise: NoiseModel, schedule: JointSchedule,
              kernel_spec: Optional[KernelSpec] = None) -> float:
    """Planner objective for a materialised schedule (power kernel by default)."""
    rates = sigma_eff(noise, schedule.quality) / schedule.batch
    return objective_from_rates(instance, schedule.eta, rates, kernel_spec)
