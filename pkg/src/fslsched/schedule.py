"""Joint batch-size / data-quality schedules on the SGD step lattice.

Step ``k`` covers continuous time ``[k*eta, (k+1)*eta)``; it consumes ``B_k``
samples of which a fraction ``p_k`` is high quality.  Budgets are accounted in
continuous-time units, so the total data is ``sum_k B_k * eta``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import InitVar, dataclass
from typing import Callable, Optional

import numpy as np

from .optim import bisect


class Placement(str, enum.Enum):
    EARLY = "Early"
    LATE = "Late"
    MIDDLE = "Middle"
    UNIFORM = "Uniform"


@dataclass(frozen=True)
class NoiseModel:
    sigma_good_sq: float
    sigma_bad_sq: float
    rho: float
    check: InitVar[bool] = True

    def __post_init__(self, check):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if check and not 0.0 < self.sigma_good_sq < self.sigma_bad_sq:
            raise ValueError("need 0 < sigma_good_sq < sigma_bad_sq "
                             f"(got {self.sigma_good_sq}, {self.sigma_bad_sq})")
        if self.sigma_good_sq < 0 or self.sigma_bad_sq < 0:
            raise ValueError("noise variances must be non-negative")

    @classmethod
    def unchecked(cls, sigma_good_sq: float, sigma_bad_sq: float, rho: float) -> "NoiseModel":
        """Degenerate models (equal or zero variances) for limiting-case experiments."""
        return cls(sigma_good_sq, sigma_bad_sq, rho, False)

    @property
    def r(self) -> float:
        return self.sigma_good_sq / self.sigma_bad_sq

    @property
    def kappa(self) -> float:
        g, b, rho = self.sigma_good_sq, self.sigma_bad_sq, self.rho
        den = (1.0 - rho) * g + rho * b
        return g * b / den if den > 0 else 0.0

    @property
    def mean_sigma_sq(self) -> float:
        return sigma_eff(self, self.rho)


def sigma_eff(noise: NoiseModel, p):
    """Effective label-noise variance ``p*sigma_good^2 + (1-p)*sigma_bad^2``."""
    arr = np.asarray(p, dtype=np.float64)
    if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
        raise ValueError("quality fraction p must lie in [0, 1]")
    out = arr * noise.sigma_good_sq + (1.0 - arr) * noise.sigma_bad_sq
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class JointSchedule:
    eta: float
    batch: np.ndarray
    quality: np.ndarray

    def __post_init__(self):
        b = np.array(self.batch, dtype=np.float64)
        p = np.array(self.quality, dtype=np.float64)
        if b.ndim != 1 or b.shape != p.shape or b.size == 0:
            raise ValueError("batch and quality must be equal-length non-empty 1-d arrays")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not np.all(np.isfinite(b)) or np.any(b < 1.0):
            raise ValueError("every batch size must be finite and >= 1")
        if np.any((p < 0) | (p > 1)):
            raise ValueError("every quality fraction must lie in [0, 1]")
        b.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "batch", b)
        object.__setattr__(self, "quality", p)

    @property
    def steps(self) -> int:
        return int(self.batch.size)

    @property
    def horizon(self) -> float:
        return self.steps * self.eta

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps) * self.eta

    @property
    def total_data(self) -> float:
        return float(np.sum(self.batch) * self.eta)

    @property
    def hq_data(self) -> float:
        return float(np.sum(self.quality * self.batch) * self.eta)

    @property
    def slack(self) -> float:
        """One-step quantisation tolerance for budget checks."""
        return float(self.eta * np.max(self.batch))

    def with_quality(self, quality) -> "JointSchedule":
        return JointSchedule(self.eta, self.batch, quality)

    def with_batch(self, batch) -> "JointSchedule":
        return JointSchedule(self.eta, batch, self.quality)

    def __eq__(self, other):
        if not isinstance(other, JointSchedule):
            return NotImplemented
        return (self.eta == other.eta and np.array_equal(self.batch, other.batch)
                and np.array_equal(self.quality, other.quality))

    __hash__ = None


def n_steps(T: float, eta: float) -> int:
    K = int(round(T / eta))
    if K < 1:
        raise ValueError(f"horizon T={T} is shorter than one step of eta={eta}")
    return K


def constant_uniform(D: float, eta: float, rho: float, T: Optional[float] = None,
                     batch: Optional[float] = None) -> JointSchedule:
    """Constant batch ``D/T`` and constant quality ``rho``.

    Give exactly one of ``T`` (horizon) or ``batch`` (forces ``T = D/batch``).
    """
    if (T is None) == (batch is None):
        raise ValueError("give exactly one of T or batch")
    if T is None:
        T = D / batch
    B = D / T
    if B < 1.0:
        raise ValueError(f"D/T = {B:g} is below the unit batch floor")
    K = n_steps(T, eta)
    return JointSchedule(eta, np.full(K, B), np.full(K, float(rho)))


def _block(K: int, n: int, placement: Placement) -> slice:
    placement = Placement(placement)
    if placement is Placement.EARLY:
        return slice(0, n)
    if placement is Placement.LATE:
        return slice(K - n, K)
    if placement is Placement.MIDDLE:
        left = (K - n) // 2
        return slice(left, left + n)
    raise ValueError(f"{placement} is not a block placement")


def bang_bang(B: float, K: int, eta: float, rho: float, placement: Placement) -> JointSchedule:
    """Constant batch with ``p = 1`` on a block of ``round(rho*K)`` steps."""
    placement = Placement(placement)
    batch = np.full(int(K), float(B))
    if placement is Placement.UNIFORM:
        return JointSchedule(eta, batch, np.full(int(K), float(rho)))
    n = int(math.floor(rho * K + 0.5))
    p = np.zeros(int(K))
    p[_block(int(K), n, placement)] = 1.0
    return JointSchedule(eta, batch, p)


def budget_aware_bang_bang(schedule: JointSchedule, rho: float, placement: Placement) -> JointSchedule:
    """Place ``p = 1`` on a prefix/suffix/centred run carrying ``rho`` of the data.

    The run length is the one whose data mass is nearest to the target (ties go
    to the longer run).  ``Uniform`` sets ``p = rho`` everywhere.
    """
    placement = Placement(placement)
    K = schedule.steps
    if placement is Placement.UNIFORM:
        return schedule.with_quality(np.full(K, float(rho)))
    mass = schedule.batch * schedule.eta
    target = rho * float(np.sum(mass))
    cs = np.concatenate([[0.0], np.cumsum(mass)])
    n = np.arange(K + 1)
    if placement is Placement.EARLY:
        run = cs[n]
    elif placement is Placement.LATE:
        run = cs[K] - cs[K - n]
    else:
        left = (K - n) // 2
        run = cs[left + n] - cs[left]
    err = np.abs(run - target)
    best = K - int(np.argmin(err[::-1]))
    p = np.zeros(K)
    p[_block(K, best, placement)] = 1.0
    return schedule.with_quality(p)


def _fit_quality(p_raw: np.ndarray, batch: np.ndarray, rho: float, slack_mass: float,
                 max_passes: int) -> np.ndarray:
    target = rho * float(np.sum(batch))
    p = np.clip(p_raw, 0.0, None)
    for _ in range(max_passes):
        hq = float(np.sum(p * batch))
        if hq <= 0:
            raise RuntimeError("quality profile has no positive mass to rescale")
        p = np.clip(p * (target / hq), 0.0, 1.0)
        if abs(float(np.sum(p * batch)) - target) <= slack_mass:
            return p
    raise RuntimeError(f"quality rescaling did not converge in {max_passes} passes")


def sinusoidal_joint(B_ref: float, K: int, eta: float, rho: float, *, ramp: float = 3.0,
                     batch_amp: float = 0.8, batch_cycles: float = 6.0,
                     quality_amp: float = 0.25, quality_cycles: float = 4.0,
                     max_passes: int = 20) -> JointSchedule:
    """Oscillating-upward batch with a sinusoidal quality curve, budget matched.

    Raw curves ``1 + ramp*t/T + batch_amp*sin(2 pi batch_cycles t/T)`` and
    ``rho + quality_amp*sin(2 pi quality_cycles t/T)``.  The batch is scaled so
    ``sum max(c*b_raw_k, 1) = B_ref*K``; the quality is scaled so
    ``sum p_k B_k = rho * sum B_k`` and clipped to ``[0, 1]``, repeating the
    scale-then-clip pass until the budget holds within one step.
    """
    if B_ref < 1:
        raise ValueError("B_ref must be >= 1")
    K = int(K)
    x = np.arange(K) / K
    b_raw = 1.0 + ramp * x + batch_amp * np.sin(2 * np.pi * batch_cycles * x)
    p_raw = rho + quality_amp * np.sin(2 * np.pi * quality_cycles * x)

    target = B_ref * K
    if np.any(b_raw <= 0):
        raise ValueError("raw batch curve must stay positive")
    # floored scale: sum(max(c*b_raw, 1)) is monotone in c, so bisect for it
    c = bisect(lambda c: float(np.sum(np.maximum(c * b_raw, 1.0))) - target,
               0.0, 2.0 * target / float(np.sum(b_raw)), xtol_rel=1e-13)
    b = np.maximum(c * b_raw, 1.0)
    p = _fit_quality(p_raw, b, rho, float(np.max(b)), max_passes)
    return JointSchedule(eta, b, p)


def sqrt_kernel_batch(D: float, T: float, eta: float, kernel_fn: Callable[[np.ndarray], np.ndarray],
                      B_floor: float = 1.0, rho: Optional[float] = None,
                      bracket: Optional[tuple[float, float]] = None) -> tuple[JointSchedule, float]:
    """Batch ``max(C*sqrt(K(T - k*eta)), B_floor)`` with ``C`` bisected to spend ``D``.

    Returns the schedule (quality ``rho`` everywhere, or zero when ``rho`` is
    None) together with ``C``.
    """
    K = n_steps(T, eta)
    if D < B_floor * K * eta * (1 - 1e-12):
        raise ValueError(f"budget D={D} is below B_floor*T={B_floor * K * eta}")
    w = np.sqrt(kernel_fn(T - np.arange(K) * eta))

    def excess(C: float) -> float:
        return float(np.sum(np.maximum(C * w, B_floor))) * eta - D

    if bracket is None:
        bracket = (0.0, 2.0 * D / (eta * float(np.sum(w))))
    C = bisect(excess, bracket[0], bracket[1], xtol_rel=1e-12)
    batch = np.maximum(C * w, B_floor)
    p = np.full(K, float(rho)) if rho is not None else np.zeros(K)
    return JointSchedule(eta, batch, p), C
