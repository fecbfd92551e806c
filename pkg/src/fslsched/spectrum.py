"""Power-law feature-space regression problems and their response curves.

A problem is diagonal: coordinate ``j`` has feature variance ``lambda_j`` and
squared target coefficient ``target_sq_j``.  Two curves summarise how SGD
behaves on it:

* the bias curve ``e(t) = sum_j lambda_j * target_sq_j * exp(-2 lambda_j t)``
* the forgetting kernel ``K(t)``, either the exact finite sum
  ``sum_j lambda_j**2 * exp(-2 lambda_j t)`` or its power-law surrogate
  ``(t + 1)**-(2 - 1/beta)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid

CRITICAL_ATOL = 1e-12

# Rows of the (time x coordinate) exponent matrix evaluated per block.
_BLOCK = 4096


class Regime(str, enum.Enum):
    NOISE_LIMITED = "NoiseLimited"
    SIGNAL_LIMITED = "SignalLimited"
    CRITICAL = "Critical"


class KernelForm(str, enum.Enum):
    EXACT = "ExactFiniteDim"
    POWER = "AsymptoticPower"


class UnsupportedRegimeError(ValueError):
    """Raised when a planner receives an instance in a regime it cannot handle."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    beta: float
    s: float
    eigenvalues: np.ndarray
    target_sq: np.ndarray

    def __post_init__(self):
        lam = _frozen(self.eigenvalues)
        tsq = _frozen(self.target_sq)
        if lam.ndim != 1 or lam.shape != tsq.shape or lam.size == 0:
            raise ValueError("eigenvalues and target_sq must be equal-length 1-d arrays")
        if np.any(lam <= 0) or np.any(np.diff(lam) > 0):
            raise ValueError("eigenvalues must be strictly positive and non-increasing")
        if np.any(tsq < 0):
            raise ValueError("target_sq must be non-negative")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "target_sq", tsq)

    @property
    def dimension(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def gamma(self) -> float:
        return 2.0 - 1.0 / self.beta

    @property
    def s_crit(self) -> float:
        return 1.0 - 1.0 / self.beta

    @property
    def regime(self) -> Regime:
        return classify_regime(self.beta, self.s)

    @property
    def initial_risk(self) -> float:
        return 0.5 * float(np.sum(self.eigenvalues * self.target_sq))


def classify_regime(beta: float, s: float) -> Regime:
    s_crit = 1.0 - 1.0 / beta
    if abs(s - s_crit) <= CRITICAL_ATOL:
        return Regime.CRITICAL
    return Regime.NOISE_LIMITED if s > s_crit else Regime.SIGNAL_LIMITED


def make_instance(N: int, beta: float, s: float) -> ProblemInstance:
    """Canonical instance: ``lambda_j = j**-beta``, ``target_sq_j = j**-(1 + (s-1) beta)``."""
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    if not beta > 1:
        raise ValueError(f"beta must exceed 1 (kernel is not integrable otherwise), got {beta}")
    if not s > 0:
        raise ValueError(f"s must be positive, got {s}")
    j = np.arange(1, int(N) + 1, dtype=np.float64)
    return ProblemInstance(
        beta=float(beta),
        s=float(s),
        eigenvalues=j ** (-beta),
        target_sq=j ** (-(1.0 + (s - 1.0) * beta)),
    )


@dataclass(frozen=True)
class KernelSpec:
    form: KernelForm = KernelForm.EXACT

    @classmethod
    def exact(cls) -> "KernelSpec":
        return cls(KernelForm.EXACT)

    @classmethod
    def power(cls) -> "KernelSpec":
        return cls(KernelForm.POWER)


def _exp_sum(weights: np.ndarray, rates: np.ndarray, t) -> np.ndarray:
    # sum_j weights_j * exp(-2 rates_j t), evaluated blockwise over t
    t = np.asarray(t, dtype=np.float64)
    flat = t.ravel()
    out = np.empty(flat.shape, dtype=np.float64)
    for start in range(0, flat.size, _BLOCK):
        blk = flat[start:start + _BLOCK]
        out[start:start + _BLOCK] = np.exp(-2.0 * np.outer(blk, rates)) @ weights
    return out.reshape(t.shape)


def kernel(spec: KernelSpec, instance: ProblemInstance, t):
    """Forgetting kernel ``K(t)`` for ``t >= 0`` (scalar or array)."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("kernel is defined for t >= 0")
    if KernelForm(spec.form) is KernelForm.POWER:
        out = (np.asarray(t, dtype=np.float64) + 1.0) ** (-instance.gamma)
    else:
        lam = instance.eigenvalues
        out = _exp_sum(lam * lam, lam, t)
    return float(out) if np.ndim(out) == 0 else out


def kernel_function(spec: KernelSpec, instance: ProblemInstance) -> Callable[[np.ndarray], np.ndarray]:
    return lambda t: kernel(spec, instance, t)


def bias_curve(instance: ProblemInstance, t):
    """Exact finite-dimensional bias ``e(t)``."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("bias_curve is defined for t >= 0")
    lam = instance.eigenvalues
    out = _exp_sum(lam * instance.target_sq, lam, t)
    return float(out) if np.ndim(out) == 0 else out


def sqrt_kernel_integral(spec: KernelSpec, instance: ProblemInstance, T: float, n_points: int = 10_000) -> float:
    """``A(T) = int_0^T sqrt(K(u)) du``.

    Closed form ``((T+1)**delta - 1) / delta`` with ``delta = 1/(2 beta)`` for the
    power kernel; composite trapezoid on ``n_points`` nodes for the exact one.
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    if KernelForm(spec.form) is KernelForm.POWER:
        delta = 1.0 / (2.0 * instance.beta)
        return ((T + 1.0) ** delta - 1.0) / delta
    u = np.linspace(0.0, T, n_points)
    return float(trapezoid(np.sqrt(kernel(spec, instance, u)), u))
