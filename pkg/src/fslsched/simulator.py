"""One-pass mini-batch SGD on the diagonal model, plus its exact moment recursion.

Monte Carlo sampling
--------------------
The ``"reduced"`` sampler (default) produces the same Markov chain as drawing
``B`` full feature vectors per step, at ``O(N + B)`` cost instead of
``O(N * B)``.  Write ``e = theta - theta*`` and ``a = e^T H e``.  For Gaussian
features the scalar ``u_i = <phi_i, e>`` is ``N(0, a)`` and
``phi_i = H e u_i / a + zeta_i`` with ``zeta_i`` independent of ``u_i`` and
covariance ``H - H e e^T H / a``.  The summed gradient
``sum_i (u_i - eps_i) phi_i`` is therefore

    H e * sum_i u_i (u_i - eps_i) / a  +  ||u - eps|| * zeta,

where ``zeta`` is one draw of the projected Gaussian.  Per-sample quantities
(``u_i``, label noise, the Bernoulli quality draw) are still sampled one by
one, so two schedules with the same batch profile share their random numbers
sample for sample.

The ``"direct"`` sampler draws the full ``B x N`` feature matrix; it exists to
cross-check the reduced one on small problems.
"""

from __future__ import annotations

import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from .schedule import JointSchedule, NoiseModel, sigma_eff
from .spectrum import ProblemInstance

DIVERGENCE_FACTOR = 1e6
MAX_RECORDS = 10_000
FINAL_WINDOW_FRACTION = 0.01

_CHUNK_STEPS = 2048
_CHUNK_SAMPLES = 1 << 20


class Source(str, enum.Enum):
    MONTE_CARLO = "MonteCarlo"
    MOMENT_ORACLE = "MomentOracle"
    THEORY = "Theory"


class DivergenceError(FloatingPointError):
    def __init__(self, step: int, risk: float):
        super().__init__(f"risk diverged at step {step} (risk={risk!r}); eta is too large for this spectrum")
        self.step = step
        self.risk = risk


@dataclass(frozen=True, eq=False)
class RiskTrajectory:
    times: np.ndarray
    mean_risk: np.ndarray
    se_risk: np.ndarray
    source: Source
    per_seed: Optional[np.ndarray] = field(default=None, repr=False)
    final_per_seed: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(np.asarray(self.mean_risk) < 0):
            raise ValueError("risk must be non-negative")

    def window_mean(self, t_from: float) -> tuple[float, float]:
        """Seed mean and standard error of the risk averaged over ``t >= t_from``."""
        sel = self.times >= t_from
        if not np.any(sel):
            raise ValueError(f"no recorded points at or after t={t_from}")
        if self.per_seed is None:
            return float(np.mean(self.mean_risk[sel])), 0.0
        return _mean_se(self.per_seed[:, sel].mean(axis=1))

    def final_risk(self) -> tuple[float, float]:
        """Seed mean and SE of the risk averaged over every step of the final window."""
        if self.final_per_seed is None:
            return float(self.mean_risk[-1]), 0.0
        return _mean_se(self.final_per_seed)


def _mean_se(per: np.ndarray) -> tuple[float, float]:
    per = np.asarray(per, dtype=np.float64)
    se = float(np.std(per, ddof=1) / np.sqrt(per.size)) if per.size > 1 else 0.0
    return float(per.mean()), se


@dataclass(frozen=True, eq=False)
class RunConfig:
    instance: ProblemInstance
    noise: NoiseModel
    schedule: JointSchedule
    seeds: Sequence[int] = (0,)
    eval_stride: int = 1
    sampler: str = "reduced"
    final_window: Optional[int] = None

    def __post_init__(self):
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds:
            raise ValueError("need at least one seed")
        if len(set(seeds)) != len(seeds):
            raise ValueError("seeds must be pairwise distinct")
        object.__setattr__(self, "seeds", seeds)
        if self.eval_stride < 1:
            raise ValueError("eval_stride must be >= 1")
        if len(record_steps(self.schedule.steps, self.eval_stride)) > MAX_RECORDS:
            raise ValueError(f"eval_stride={self.eval_stride} records more than {MAX_RECORDS} points")
        if self.sampler not in ("reduced", "direct"):
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.final_window is None:
            object.__setattr__(self, "final_window", final_window_steps(self.schedule.steps))
        elif not 1 <= self.final_window <= self.schedule.steps:
            raise ValueError("final_window must lie in [1, steps]")


def record_steps(K: int, stride: int) -> np.ndarray:
    ks = np.arange(0, K + 1, stride)
    if ks[-1] != K:
        ks = np.append(ks, K)
    return ks


def final_window_steps(K: int) -> int:
    """Number of trailing steps averaged for the final risk (1% of the run, at least one)."""
    return max(1, int(round(FINAL_WINDOW_FRACTION * K)))


def integer_batches(schedule: JointSchedule) -> np.ndarray:
    return np.maximum(np.rint(schedule.batch), 1).astype(np.int64)


# ---------------------------------------------------------------------------
# Numba kernels


@numba.njit(cache=True, nogil=True)
def _sgd_chunk(e, lam, sqrt_lam, eta, batch, quality, offsets, Z, un, xi, unif,
               sig_g, sig_b, k0, record_mask, out, out_pos, risk_cap, acc_from, acc):
    N = e.size
    g = np.empty(N)
    for s in range(batch.size):
        a = 0.0
        for j in range(N):
            a += lam[j] * e[j] * e[j]
        sa = np.sqrt(a)
        s1 = 0.0
        s2 = 0.0
        s3 = 0.0
        p = quality[s]
        for i in range(offsets[s], offsets[s + 1]):
            u = sa * un[i]
            eps = (sig_g if unif[i] < p else sig_b) * xi[i]
            s1 += u * u
            s2 += u * eps
            s3 += eps * eps
        eg = 0.0
        for j in range(N):
            g[j] = sqrt_lam[j] * Z[s, j]
            eg += e[j] * g[j]
        c2 = s1 - 2.0 * s2 + s3
        c = np.sqrt(c2) if c2 > 0.0 else 0.0
        step = eta / batch[s]
        if a > 0.0:
            along = (s1 - s2) / a
            proj = eg / a
            for j in range(N):
                he = lam[j] * e[j]
                e[j] -= step * (he * along + c * (g[j] - he * proj))
        else:
            for j in range(N):
                e[j] -= step * c * g[j]
        in_window = k0 + s + 1 > acc_from
        if record_mask[s] or in_window:
            r = 0.0
            for j in range(N):
                r += lam[j] * e[j] * e[j]
            r *= 0.5
            if in_window:
                acc[0] += r
            if record_mask[s]:
                out[out_pos] = r
                out_pos += 1
                if not (r <= risk_cap):
                    return out_pos, k0 + s + 1
    return out_pos, -1


@numba.njit(cache=True)
def _moment_recursion(m, lam, eta, inv_batch, sig_eff, record_mask, out, risk_cap, acc_from, acc):
    N = m.size
    out_pos = 0
    for k in range(inv_batch.size):
        tr = 0.0
        for j in range(N):
            tr += lam[j] * m[j]
        ib = inv_batch[k]
        noise = eta * eta * ib * sig_eff[k]
        for j in range(N):
            l = lam[j]
            m[j] = ((1.0 - 2.0 * eta * l) * m[j]
                    + eta * eta * (l * l * m[j] + ib * (l * l * m[j] + l * tr))
                    + noise * l)
        in_window = k + 1 > acc_from
        if record_mask[k] or in_window:
            r = 0.0
            for j in range(N):
                r += lam[j] * m[j]
            r *= 0.5
            if in_window:
                acc[0] += r
            if record_mask[k]:
                out[out_pos] = r
                out_pos += 1
                if not (r <= risk_cap):
                    return out_pos, k + 1
    return out_pos, -1


# ---------------------------------------------------------------------------


def _seed_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _chunks(batch_int: np.ndarray):
    K = batch_int.size
    k0 = 0
    while k0 < K:
        cs = np.cumsum(batch_int[k0:k0 + _CHUNK_STEPS])
        n = max(1, int(np.searchsorted(cs, _CHUNK_SAMPLES, side="right")))
        yield k0, k0 + n
        k0 += n


def _run_seed_reduced(config: RunConfig, seed: int, rec: np.ndarray) -> np.ndarray:
    inst, noise, sch = config.instance, config.noise, config.schedule
    lam = np.ascontiguousarray(inst.eigenvalues)
    sqrt_lam = np.sqrt(lam)
    e = -np.sqrt(inst.target_sq)
    batch = integer_batches(sch)
    quality = np.ascontiguousarray(sch.quality)
    mask = np.zeros(sch.steps, dtype=np.bool_)
    mask[rec[rec > 0] - 1] = True
    out = np.empty(rec.size)
    out[0] = inst.initial_risk
    cap = DIVERGENCE_FACTOR * max(inst.initial_risk, np.finfo(float).tiny)
    pos = 1
    acc = np.zeros(1)
    acc_from = sch.steps - config.final_window
    rng = _seed_rng(seed)
    sig_g, sig_b = np.sqrt(noise.sigma_good_sq), np.sqrt(noise.sigma_bad_sq)
    for k0, k1 in _chunks(batch):
        b = batch[k0:k1]
        M = int(b.sum())
        offsets = np.zeros(b.size + 1, dtype=np.int64)
        np.cumsum(b, out=offsets[1:])
        Z = rng.standard_normal((b.size, lam.size))
        un = rng.standard_normal(M)
        xi = rng.standard_normal(M)
        unif = rng.random(M)
        pos, bad = _sgd_chunk(e, lam, sqrt_lam, sch.eta, b.astype(np.float64), quality[k0:k1],
                              offsets, Z, un, xi, unif, sig_g, sig_b, k0, mask[k0:k1], out, pos, cap,
                              acc_from, acc)
        if bad >= 0:
            raise DivergenceError(int(bad), float(out[pos - 1]))
    return out, acc[0] / config.final_window


def _run_seed_direct(config: RunConfig, seed: int, rec: np.ndarray) -> np.ndarray:
    inst, noise, sch = config.instance, config.noise, config.schedule
    lam = inst.eigenvalues
    sqrt_lam = np.sqrt(lam)
    theta_star = np.sqrt(inst.target_sq)
    theta = np.zeros_like(theta_star)
    batch = integer_batches(sch)
    rng = _seed_rng(seed)
    sig_g, sig_b = np.sqrt(noise.sigma_good_sq), np.sqrt(noise.sigma_bad_sq)
    cap = DIVERGENCE_FACTOR * max(inst.initial_risk, np.finfo(float).tiny)
    out = np.empty(rec.size)
    out[0] = inst.initial_risk
    want = set(int(k) for k in rec[1:])
    acc_from = sch.steps - config.final_window
    acc = 0.0
    pos = 1
    for k in range(sch.steps):
        B = int(batch[k])
        phi = rng.standard_normal((B, lam.size)) * sqrt_lam
        good = rng.random(B) < sch.quality[k]
        eps = np.where(good, sig_g, sig_b) * rng.standard_normal(B)
        y = phi @ theta_star + eps
        theta = theta - (sch.eta / B) * (phi.T @ (phi @ theta - y))
        if k + 1 in want or k + 1 > acc_from:
            r = 0.5 * float(np.sum(lam * (theta - theta_star) ** 2))
            if k + 1 > acc_from:
                acc += r
            if k + 1 in want:
                out[pos] = r
                pos += 1
                if not r <= cap:
                    raise DivergenceError(k + 1, r)
    return out, acc / config.final_window


def worker_count() -> int:
    """Pool size: ``FSLSCHED_THREADS`` if set, else the CPU count."""
    env = os.environ.get("FSLSCHED_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def run_sgd(config: RunConfig, max_workers: Optional[int] = None) -> RiskTrajectory:
    """Monte Carlo excess-risk trajectory averaged over ``config.seeds``.

    Seeds run on a thread pool of ``max_workers`` (default :func:`worker_count`).
    """
    if config.schedule.steps == 0:
        raise ValueError("empty schedule")
    rec = record_steps(config.schedule.steps, config.eval_stride)
    worker = _run_seed_reduced if config.sampler == "reduced" else _run_seed_direct
    n_workers = min(max_workers or worker_count(), len(config.seeds))
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            rows = list(pool.map(lambda sd: worker(config, sd, rec), config.seeds))
    else:
        rows = [worker(config, sd, rec) for sd in config.seeds]
    per_seed = np.vstack([r[0] for r in rows])
    finals = np.array([r[1] for r in rows])
    n = per_seed.shape[0]
    se = per_seed.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(rec.size)
    return RiskTrajectory(rec * config.schedule.eta, per_seed.mean(axis=0), se,
                          Source.MONTE_CARLO, per_seed, finals)


def run_moment_oracle(config: RunConfig) -> RiskTrajectory:
    """Exact expected risk from the per-coordinate second-moment recursion.

    ``m_j = E[(theta_j - theta*_j)^2]`` obeys

        m_j <- (1 - 2 eta l_j) m_j + eta^2 [l_j^2 m_j + (l_j^2 m_j + l_j sum_i l_i m_i) / B]
               + eta^2 sigma_eff^2 l_j / B

    for Gaussian features; the real-valued batch sizes are used unrounded.
    """
    inst, noise, sch = config.instance, config.noise, config.schedule
    rec = record_steps(sch.steps, config.eval_stride)
    mask = np.zeros(sch.steps, dtype=np.bool_)
    mask[rec[rec > 0] - 1] = True
    out = np.empty(rec.size)
    out[0] = inst.initial_risk
    cap = DIVERGENCE_FACTOR * max(inst.initial_risk, np.finfo(float).tiny)
    m = np.array(inst.target_sq, dtype=np.float64)
    inv_b = 1.0 / sch.batch
    acc = np.zeros(1)
    n, bad = _moment_recursion(m, np.ascontiguousarray(inst.eigenvalues), sch.eta, inv_b,
                               np.ascontiguousarray(sigma_eff(noise, sch.quality)), mask, out[1:], cap,
                               sch.steps - config.final_window, acc)
    if bad >= 0:
        raise DivergenceError(int(bad), float(out[n]))
    return RiskTrajectory(rec * sch.eta, out, np.zeros(rec.size), Source.MOMENT_ORACLE,
                          None, acc / config.final_window)


def moment_recursion_raw(instance: ProblemInstance, eta: float, inv_batch: np.ndarray,
                         sig_eff: np.ndarray) -> np.ndarray:
    """Risk after every step for an arbitrary ``1/B_k`` sequence (``0`` allowed)."""
    K = inv_batch.size
    out = np.empty(K)
    m = np.array(instance.target_sq, dtype=np.float64)
    n, bad = _moment_recursion(m, np.ascontiguousarray(instance.eigenvalues), float(eta),
                               np.ascontiguousarray(inv_batch, dtype=np.float64),
                               np.ascontiguousarray(sig_eff, dtype=np.float64),
                               np.ones(K, dtype=np.bool_), out, np.inf, K, np.zeros(1))
    return out
