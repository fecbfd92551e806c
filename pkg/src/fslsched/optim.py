"""Scalar root finding and minimisation used by the schedule builders and planner."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class BisectionError(RuntimeError):
    def __init__(self, message: str, bracket: tuple[float, float]):
        super().__init__(f"{message}; last bracket [{bracket[0]!r}, {bracket[1]!r}]")
        self.bracket = bracket


class DegenerateObjectiveError(RuntimeError):
    pass


def bisect(f: Callable[[float], float], lo: float, hi: float, xtol_rel: float = 1e-12,
           maxiter: int = 200) -> float:
    """Root of an increasing-or-decreasing ``f`` on ``[lo, hi]`` by plain bisection."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise BisectionError("root is not bracketed", (lo, hi))
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
        if hi - lo <= xtol_rel * max(abs(lo), abs(hi)):
            return 0.5 * (lo + hi)
    raise BisectionError(f"no convergence after {maxiter} iterations", (lo, hi))


@dataclass(frozen=True)
class ScalarMinimum:
    x: float
    fun: float
    nfev: int
    at_boundary: bool


def golden_section(f: Callable[[float], float], lo: float, hi: float, rtol: float = 1e-4,
                   log_scale: bool = True, maxiter: int = 500) -> ScalarMinimum:
    """Bounded golden-section search.

    With ``log_scale`` the search runs over ``log x`` so that ``rtol`` is a
    relative tolerance on ``x`` itself.  A bracket end point is evaluated only
    when the search has collapsed onto it, and is returned (``at_boundary``) if
    it beats the interior estimate.  Raises :class:`DegenerateObjectiveError`
    when every probe agrees to within ``rtol`` (relative).
    """
    if not hi > lo:
        raise ValueError(f"empty bracket [{lo}, {hi}]")
    if log_scale and lo <= 0:
        raise ValueError("log-scale search needs a positive bracket")
    fwd = math.exp if log_scale else (lambda v: v)
    a0, b0 = (math.log(lo), math.log(hi)) if log_scale else (lo, hi)
    tol = rtol if log_scale else rtol * max(abs(lo), abs(hi))
    g = lambda v: f(fwd(v))

    a, b = a0, b0
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = g(c), g(d)
    nfev = 2
    probes = [fc, fd]
    while abs(b - a) > tol and nfev < maxiter:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = g(c)
            probes.append(fc)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = g(d)
            probes.append(fd)
        nfev += 1

    x, best_f = fwd(0.5 * (a + b)), g(0.5 * (a + b))
    probes.append(best_f)
    nfev += 1
    edge = False
    for end, touched in ((lo, a <= a0 + tol), (hi, b >= b0 - tol)):
        if touched:
            f_end = f(end)
            nfev += 1
            probes.append(f_end)
            if f_end < best_f:
                x, best_f, edge = end, f_end, True
    scale = max(abs(p) for p in probes) or 1.0
    if max(probes) - min(probes) <= rtol * scale:
        raise DegenerateObjectiveError(
            f"objective varies by less than {rtol:g} (relative) over [{lo}, {hi}]")
    return ScalarMinimum(x=float(x), fun=float(best_f), nfev=nfev, at_boundary=edge)
