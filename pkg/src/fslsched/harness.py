"""Synthetic experiments: FSL tracking, quality placement, joint strategies, budget sweeps.

Every runner takes an :class:`ExperimentSpec` (see :func:`preset`), simulates
all of its schedules with the same seed list, and returns an
:class:`ExperimentReport` with per-assertion checks.  When it names an
output directory, one CSV per schedule is written under
``<outputs>/<experiment>/<regime>/`` together with ``report.txt`` and a
``manifest.json`` that is enough to rerun the experiment.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import MappingProxyType
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from . import csvio
from .planner import (Family, InfeasibleBudgetError, optimize_horizon, plan_noise_limited,
                      plan_signal_limited)
from .schedule import (JointSchedule, NoiseModel, Placement, bang_bang, budget_aware_bang_bang,
                       constant_uniform, sinusoidal_joint, sqrt_kernel_batch)
from .simulator import (DivergenceError, RiskTrajectory, RunConfig, run_moment_oracle, run_sgd,
                        worker_count)
from .spectrum import KernelSpec, ProblemInstance, Regime, kernel_function, make_instance
from .theory import fit_scale, max_relative_deviation, predict

EXPERIMENTS = ("fsl", "placement", "degenerate", "joint", "scaling")
FSL_SCHEDULES = ("Early", "Late", "Middle", "Sinusoidal")
PLACEMENTS = ("Late", "Uniform", "Middle", "Early")
JOINT_STRATEGIES = ("constant_uniform", "constant_late", "sqrtk_uniform", "joint_optimal")
DEFAULT_SEEDS = tuple(range(10))
FULL_FIDELITY_SEEDS = 10

FSL_TOLERANCE = 0.30
EXPONENT_TOLERANCE = 0.08
BASELINE_MARGIN = 0.03
QUICK_SEEDS = (0, 1)
QUICK_FACTOR = 5

_FSL_COMMON = dict(N=500, beta=2.0, eta=0.01, rho=0.3, sigma_good_sq=0.1, records=100)
_FSL = {
    Regime.NOISE_LIMITED: dict(_FSL_COMMON, s=2.0, B=32.0, K=15000, sigma_bad_sq=1.0, D=200000.0),
    Regime.SIGNAL_LIMITED: dict(_FSL_COMMON, s=0.4, B=4.0, K=50000, sigma_bad_sq=10.0, D=200000.0),
}
_JOINT = {
    Regime.NOISE_LIMITED: dict(N=500, beta=2.0, s=2.0, eta=0.01, rho=0.3, sigma_good_sq=0.1,
                               sigma_bad_sq=1.0, D=200000.0, B_min=1.0, records=100,
                               D_lo=2e4, D_hi=2e5, n_budgets=5),
    Regime.SIGNAL_LIMITED: dict(N=500, beta=3.0, s=0.5, eta=0.05, rho=0.3, sigma_good_sq=0.25,
                                sigma_bad_sq=1.0, D=10000.0, B_min=4.0, records=100,
                                D_lo=2e3, D_hi=2e4, n_budgets=5),
}
_STRATEGIES = {
    "fsl": FSL_SCHEDULES,
    "placement": PLACEMENTS,
    "degenerate": PLACEMENTS,
    "joint": JOINT_STRATEGIES,
    "scaling": JOINT_STRATEGIES,
}
_INT_KEYS = {"N", "K", "records", "n_budgets"}


def regime_slug(regime: Regime) -> str:
    return {Regime.NOISE_LIMITED: "noise", Regime.SIGNAL_LIMITED: "signal"}[Regime(regime)]


def parse_regime(text) -> Regime:
    if isinstance(text, Regime):
        return text
    table = {"noise": Regime.NOISE_LIMITED, "signal": Regime.SIGNAL_LIMITED}
    key = str(text).strip()
    if key in table:
        return table[key]
    return Regime(key)


# ---------------------------------------------------------------------------
# Specs


@dataclass(frozen=True, eq=False)
class ExperimentSpec:
    name: str
    regime: Regime
    parameters: Mapping[str, float]
    strategies: tuple
    seeds: tuple = DEFAULT_SEEDS
    outputs: Optional[str] = None
    quick: bool = False

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.name!r}; choose from {', '.join(EXPERIMENTS)}")
        object.__setattr__(self, "regime", Regime(self.regime))
        params = {k: (int(v) if k in _INT_KEYS else float(v)) for k, v in dict(self.parameters).items()}
        object.__setattr__(self, "parameters", MappingProxyType(params))
        object.__setattr__(self, "strategies", tuple(self.strategies))
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds or len(set(seeds)) != len(seeds):
            raise ValueError("seeds must be a non-empty list of distinct integers")
        object.__setattr__(self, "seeds", seeds)

    def __getitem__(self, key: str):
        return self.parameters[key]

    def instance(self) -> ProblemInstance:
        return make_instance(self["N"], self["beta"], self["s"])

    def noise(self) -> NoiseModel:
        return NoiseModel.unchecked(self["sigma_good_sq"], self["sigma_bad_sq"], self["rho"]) \
            if self["sigma_good_sq"] >= self["sigma_bad_sq"] \
            else NoiseModel(self["sigma_good_sq"], self["sigma_bad_sq"], self["rho"])

    @property
    def informational(self) -> bool:
        """Reduced-fidelity runs report checks without enforcing them."""
        return self.quick or len(self.seeds) < FULL_FIDELITY_SEEDS

    def with_parameters(self, **overrides) -> "ExperimentSpec":
        unknown = set(overrides) - set(self.parameters)
        if unknown:
            raise KeyError(f"unknown parameter(s) for {self.name}: {', '.join(sorted(unknown))}")
        return replace(self, parameters={**self.parameters, **overrides})

    def with_seeds(self, seeds: Sequence[int]) -> "ExperimentSpec":
        return replace(self, seeds=tuple(seeds))

    def with_outputs(self, outputs) -> "ExperimentSpec":
        return replace(self, outputs=None if outputs is None else str(outputs))

    def to_config(self) -> dict:
        return {"name": self.name, "regime": self.regime.value, "parameters": dict(self.parameters),
                "strategies": list(self.strategies), "seeds": list(self.seeds), "quick": self.quick}

    def config_hash(self) -> str:
        return csvio.config_hash(self.to_config())

    @classmethod
    def from_config(cls, cfg: Mapping, outputs=None) -> "ExperimentSpec":
        return cls(cfg["name"], Regime(cfg["regime"]), cfg["parameters"], tuple(cfg["strategies"]),
                   tuple(cfg["seeds"]), None if outputs is None else str(outputs), bool(cfg.get("quick", False)))

    @classmethod
    def from_manifest(cls, path, outputs=None) -> "ExperimentSpec":
        return cls.from_config(csvio.read_manifest(path)["config"], outputs)

    def directory(self) -> Optional[Path]:
        if self.outputs is None:
            return None
        return Path(self.outputs) / self.name / regime_slug(self.regime)


def preset(name: str, regime, seeds: Optional[Sequence[int]] = None, quick: bool = False,
           outputs=None) -> ExperimentSpec:
    """Built-in experiment settings.

    ``quick`` divides ``N``, the step count and the budgets by 5 and uses two
    seeds; checks are then informational.
    """
    regime = parse_regime(regime)
    if regime not in _FSL:
        raise ValueError(f"no preset for {regime.value}")
    base = dict(_FSL[regime] if name in ("fsl", "placement", "degenerate") else _JOINT[regime])
    if name not in _STRATEGIES:
        raise ValueError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    if quick:
        base["N"] = base["N"] // QUICK_FACTOR
        for key in ("D", "D_lo", "D_hi"):
            if key in base:
                base[key] = base[key] / QUICK_FACTOR
        if "K" in base:
            base["K"] = base["K"] // QUICK_FACTOR
    if seeds is None:
        seeds = QUICK_SEEDS if quick else DEFAULT_SEEDS
    return ExperimentSpec(name, regime, base, _STRATEGIES[name], tuple(seeds),
                          None if outputs is None else str(outputs), quick)


# ---------------------------------------------------------------------------
# Reports


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str
    informational: bool = False

    @property
    def label(self) -> str:
        if self.informational:
            return "INFO"
        return "PASS" if self.passed else "FAIL"

    def line(self) -> str:
        tail = "" if not self.informational else (" (pass)" if self.passed else " (fail)")
        return f"{self.label} {self.name}: {self.detail}{tail}"


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    checks: list = field(default_factory=list)
    table: list = field(default_factory=list)
    files: list = field(default_factory=list)
    result: object = None

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks if not c.informational)

    def check(self, name: str, passed: bool, detail: str, informational: bool = False) -> Check:
        c = Check(name, bool(passed), detail, informational or self.spec.informational)
        self.checks.append(c)
        return c

    def summary(self) -> str:
        head = f"{self.spec.name} / {regime_slug(self.spec.regime)} (seeds={len(self.spec.seeds)}"
        head += ", quick)" if self.spec.quick else ")"
        return "\n".join([head] + [c.line() for c in self.checks]) + "\n"

    def finish(self) -> "ExperimentReport":
        d = self.spec.directory()
        if d is not None:
            d.mkdir(parents=True, exist_ok=True)
            (d / "report.txt").write_text(self.summary(), encoding="utf-8")
            self.files.append(d / "report.txt")
            self.files.append(csvio.write_manifest(d, self.spec.to_config(),
                                                   {"checks": [c.line() for c in self.checks],
                                                    "ok": self.ok}))
        return self


# ---------------------------------------------------------------------------
# Simulation plumbing


def _map_jobs(fn: Callable, jobs: Sequence):
    """Run independent jobs on the shared pool; results keep the job order."""
    n = min(worker_count(), len(jobs))
    if n <= 1:
        return [fn(j, None) for j in jobs]
    with ThreadPoolExecutor(n) as pool:
        return list(pool.map(lambda j: fn(j, 1), jobs))


def stride_for(steps: int, records: int) -> int:
    return max(1, steps // max(1, int(records)))


def _simulate(spec: ExperimentSpec, inst: ProblemInstance, noise: NoiseModel,
              schedules: Mapping[str, JointSchedule], with_oracle: bool = True) -> dict:
    names = list(schedules)

    def job(name, workers):
        sch = schedules[name]
        cfg = RunConfig(inst, noise, sch, spec.seeds, stride_for(sch.steps, spec["records"]))
        mc = run_sgd(cfg, max_workers=workers)
        oracle = run_moment_oracle(cfg) if with_oracle else None
        return mc, oracle

    return dict(zip(names, _map_jobs(job, names)))


def pooled_se(a: float, b: float) -> float:
    return math.hypot(a, b)


def _budget_audit(report: ExperimentReport, schedules: Mapping[str, JointSchedule],
                  D: Optional[float], rho: float, label: str = "budget audit"):
    """Equal total and high-quality data across schedules, within one step of slack."""
    worst = []
    totals = [s.total_data for s in schedules.values()]
    ref_total = D if D is not None else totals[0]
    ok = True
    for name, sch in schedules.items():
        err_t = abs(sch.total_data - ref_total)
        err_h = abs(sch.hq_data - rho * ref_total)
        tol = sch.slack + 1e-9 * ref_total
        ok &= err_t <= tol and err_h <= tol
        worst.append(f"{name} total={sch.total_data:.6g} hq={sch.hq_data:.6g} slack={sch.slack:.3g}")
    report.check(label, ok, f"target total={ref_total:.6g}, hq={rho * ref_total:.6g}; " + "; ".join(worst))


# ---------------------------------------------------------------------------
# FSL tracking


def fsl_schedules(spec: ExperimentSpec) -> dict:
    B, K, eta, rho = spec["B"], spec["K"], spec["eta"], spec["rho"]
    out = {}
    for name in spec.strategies:
        if name == "Sinusoidal":
            out[name] = sinusoidal_joint(B, K, eta, rho)
        else:
            out[name] = bang_bang(B, K, eta, rho, Placement(name))
    return out


def run_fsl_verification(spec: ExperimentSpec) -> ExperimentReport:
    """Monte Carlo vs median-scaled theory for the four FSL test schedules."""
    inst, noise = spec.instance(), spec.noise()
    schedules = fsl_schedules(spec)
    runs = _simulate(spec, inst, noise, schedules)
    report = ExperimentReport(spec)
    d = spec.directory()
    for name, sch in schedules.items():
        mc, oracle = runs[name]
        stride = stride_for(sch.steps, spec["records"])
        pred = predict(inst, noise, sch, KernelSpec.exact(), eval_stride=stride)
        t_from = 0.1 * sch.horizon
        fitted = fit_scale(pred, mc, t_min=t_from)
        dev = max_relative_deviation(fitted, mc, t_from)
        fitted_o = fit_scale(pred, oracle, t_min=t_from)
        dev_o = max_relative_deviation(fitted_o, oracle, t_from)
        report.table.append({"schedule": name, "scale": fitted.scale, "max_rel_dev": dev,
                             "oracle_scale": fitted_o.scale, "oracle_max_rel_dev": dev_o})
        report.check(f"{name} tracks scaled theory",
                     dev <= FSL_TOLERANCE,
                     f"max relative deviation {dev:.3f} (limit {FSL_TOLERANCE:.2f}) on t >= {t_from:g}, "
                     f"scale {fitted.scale:.4f}")
        report.check(f"{name} oracle tracks scaled theory", dev_o <= FSL_TOLERANCE,
                     f"expected-risk deviation {dev_o:.4f}, scale {fitted_o.scale:.4f}", informational=True)
        if d is not None:
            report.files.append(csvio.write_comparison_csv(d / f"{name}.csv", mc, fitted.trajectory.mean_risk))
    if "Sinusoidal" in schedules:
        _budget_audit(report, {"Sinusoidal": schedules["Sinusoidal"]}, spec["B"] * spec["K"] * spec["eta"],
                      spec["rho"], "Sinusoidal budget audit")
    _write_table(report, "summary.csv")
    return report.finish()


# ---------------------------------------------------------------------------
# Quality placement


def placement_schedules(spec: ExperimentSpec) -> dict:
    """Constant batch with block placements, or the sqrt-kernel batch with budget-aware ones."""
    B, K, eta, rho = spec["B"], spec["K"], spec["eta"], spec["rho"]
    if spec.name == "degenerate":
        kfn = kernel_function(KernelSpec.exact(), spec.instance())
        base, _ = sqrt_kernel_batch(spec["D"], K * eta, eta, kfn, 1.0, rho=rho)
        return {p: budget_aware_bang_bang(base, rho, Placement(p)) for p in spec.strategies}
    return {p: bang_bang(B, K, eta, rho, Placement(p)) for p in spec.strategies}


def run_quality_placement(spec: ExperimentSpec) -> ExperimentReport:
    """Final-risk ranking of Early/Uniform/Middle/Late (``placement``) or their tie (``degenerate``)."""
    inst, noise = spec.instance(), spec.noise()
    schedules = placement_schedules(spec)
    runs = _simulate(spec, inst, noise, schedules)
    report = ExperimentReport(spec)
    d = spec.directory()
    final = {}
    for name, (mc, oracle) in runs.items():
        m, se = mc.final_risk()
        final[name] = (m, se)
        report.table.append({"placement": name, "final_mean": m, "final_se": se,
                             "oracle_final": oracle.final_risk()[0]})
        if d is not None:
            report.files.append(csvio.write_trajectory_csv(d / f"{name}.csv", mc))
    if spec.name == "placement":
        order = [p for p in ("Late", "Uniform", "Middle", "Early") if p in final]
        means = [final[p][0] for p in order]
        strict = all(a < b for a, b in zip(means, means[1:]))
        report.check("ordering " + " < ".join(order), strict,
                     ", ".join(f"{p}={final[p][0]:.6g}±{final[p][1]:.2g}" for p in order))
        o_means = [r["oracle_final"] for r in sorted(report.table, key=lambda r: order.index(r["placement"]))]
        report.check("expected-risk ordering", all(a < b for a, b in zip(o_means, o_means[1:])),
                     ", ".join(f"{p}={v:.6g}" for p, v in zip(order, o_means)), informational=True)
        if "Late" in final and "Early" in final:
            gap = final["Early"][0] - final["Late"][0]
            pse = pooled_se(final["Early"][1], final["Late"][1])
            report.check("Late vs Early separation", gap > 2 * pse,
                         f"gap {gap:.4g} vs 2*pooled SE {2 * pse:.4g}")
    else:
        worst, detail = 0.0, []
        ok = True
        for a, b in itertools.combinations(final, 2):
            diff = abs(final[a][0] - final[b][0])
            pse = pooled_se(final[a][1], final[b][1])
            ok &= diff <= 2 * pse
            detail.append(f"{a}-{b}: {diff:.3g}/{pse:.3g}")
            worst = max(worst, diff / pse if pse > 0 else math.inf)
        report.check("placements indistinguishable", ok,
                     f"max |diff|/pooled SE {worst:.3f} (limit 2); " + ", ".join(detail))
    _budget_audit(report, schedules, None, spec["rho"])
    _write_table(report, "final_risk.csv")
    return report.finish()


# ---------------------------------------------------------------------------
# Joint strategies


def joint_strategies(spec: ExperimentSpec, D: Optional[float] = None) -> tuple[dict, dict]:
    """The four budget-matched strategies at budget ``D`` (default: the preset's).

    Returns the schedules and the horizon bookkeeping of the planners.
    """
    inst, noise = spec.instance(), spec.noise()
    D = spec["D"] if D is None else float(D)
    eta, rho, B_min = spec["eta"], spec["rho"], spec["B_min"]
    if spec.regime is Regime.NOISE_LIMITED:
        sol = plan_noise_limited(inst, noise, D, eta, B_min)
        s1 = constant_uniform(D, eta, rho, T=sol.schedule.horizon)
    else:
        sol = plan_signal_limited(inst, noise, D, B_min, eta, refine=True)
        s1 = constant_uniform(D, eta, rho, batch=B_min)
    s2 = bang_bang(float(s1.batch[0]), s1.steps, eta, rho, Placement.LATE)
    T3 = optimize_horizon(inst, noise, D, Family.SQRTK_UNIFORM, eta, B_min)
    s3, C3 = sqrt_kernel_batch(D, T3, eta, kernel_function(KernelSpec.power(), inst), B_min, rho=rho)
    schedules = dict(zip(JOINT_STRATEGIES, (s1, s2, s3, sol.schedule)))
    info = {"T_star": sol.T_star, "T_sqrtk": T3, "C_sqrtk": C3, "constants": sol.constants}
    return {k: schedules[k] for k in spec.strategies}, info


def run_joint_comparison(spec: ExperimentSpec) -> ExperimentReport:
    """Final risks of the four strategies; the joint optimum must come out lowest."""
    inst, noise = spec.instance(), spec.noise()
    schedules, info = joint_strategies(spec)
    runs = _simulate(spec, inst, noise, schedules)
    report = ExperimentReport(spec, result=info)
    d = spec.directory()
    final = {}
    for name, sch in schedules.items():
        mc, oracle = runs[name]
        final[name] = mc.final_risk()
        report.table.append({"strategy": name, "horizon": sch.horizon, "steps": sch.steps,
                             "total_data": sch.total_data, "hq_data": sch.hq_data,
                             "final_mean": final[name][0], "final_se": final[name][1],
                             "oracle_final": oracle.final_risk()[0]})
        if d is not None:
            report.files.append(csvio.write_trajectory_csv(d / f"{name}.csv", mc))
            report.files.append(csvio.write_schedule_csv(d / f"{name}.schedule.csv", sch))
    if "joint_optimal" in final:
        best = min(final, key=lambda k: final[k][0])
        report.check("joint optimum lowest final risk", best == "joint_optimal",
                     ", ".join(f"{k}={v[0]:.6g}±{v[1]:.2g}" for k, v in final.items()))
        if spec.regime is Regime.NOISE_LIMITED and "sqrtk_uniform" in final:
            a, b = final["joint_optimal"][0], final["sqrtk_uniform"][0]
            report.check("joint optimum beats uniform p + optimal b", a < b,
                         f"{a:.6g} vs {b:.6g} (ratio {a / b:.3f})")
    _budget_audit(report, schedules, spec["D"], spec["rho"])
    _write_table(report, "final_risk.csv")
    return report.finish()


# ---------------------------------------------------------------------------
# Budget sweep


@dataclass(frozen=True, eq=False)
class SweepResult:
    budgets: np.ndarray
    strategies: tuple
    final_risks: np.ndarray
    final_se: np.ndarray
    fitted_exponents: dict
    theory_exponent: float
    failures: tuple = ()


class FitRejectedError(ValueError):
    pass


def fit_power_law(x, y) -> tuple[float, float, float]:
    """OLS slope (with SE) and intercept of ``log y`` on ``log x``, equal weights."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    ok = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    if ok.sum() < 3:
        raise FitRejectedError(f"need at least 3 successful budget points, got {int(ok.sum())}")
    fit = stats.linregress(np.log(x[ok]), np.log(y[ok]))
    return float(fit.slope), float(fit.stderr), float(fit.intercept)


def theory_exponent(instance: ProblemInstance) -> float:
    if instance.regime is Regime.NOISE_LIMITED:
        sb = instance.s * instance.beta
        return -sb / (1.0 + sb)
    return -instance.s


def budget_grid(spec: ExperimentSpec) -> np.ndarray:
    return np.geomspace(spec["D_lo"], spec["D_hi"], int(spec["n_budgets"]))


def run_scaling_sweep(spec: ExperimentSpec, budgets: Optional[Sequence[float]] = None) -> ExperimentReport:
    """Final risk of every strategy across a budget grid and the fitted log-log exponents."""
    inst, noise = spec.instance(), spec.noise()
    budgets = budget_grid(spec) if budgets is None else np.asarray(budgets, dtype=np.float64)
    if budgets.size < 5:
        raise ValueError("the sweep needs a grid of at least 5 budgets")
    names = tuple(spec.strategies)
    failures = []
    built = {}
    for D in budgets:
        try:
            built[float(D)] = joint_strategies(spec, D)[0]
        except (InfeasibleBudgetError, ValueError) as exc:
            failures.append(f"D={D:g}: {exc}")
    jobs = [(n, float(D)) for n in names for D in budgets if float(D) in built]

    def job(key, workers):
        name, D = key
        sch = built[D][name]
        cfg = RunConfig(inst, noise, sch, spec.seeds, stride_for(sch.steps, spec["records"]))
        try:
            return run_sgd(cfg, max_workers=workers).final_risk()
        except DivergenceError as exc:
            return (math.nan, math.nan, str(exc))

    results = dict(zip(jobs, _map_jobs(job, jobs)))
    risks = np.full((len(names), budgets.size), np.nan)
    ses = np.full_like(risks, np.nan)
    for (name, D), res in results.items():
        i, j = names.index(name), int(np.flatnonzero(budgets == D)[0])
        risks[i, j], ses[i, j] = res[0], res[1]
        if len(res) > 2:
            failures.append(f"{name} D={D:g}: {res[2]}")

    th = theory_exponent(inst)
    exps = {}
    for i, name in enumerate(names):
        try:
            exps[name] = fit_power_law(budgets, risks[i])[:2]
        except FitRejectedError as exc:
            exps[name] = (math.nan, math.nan)
            failures.append(f"{name}: {exc}")
    result = SweepResult(budgets, names, risks, ses, exps, th, tuple(failures))
    report = ExperimentReport(spec, result=result)
    for j, D in enumerate(budgets):
        for i, name in enumerate(names):
            report.table.append({"D": D, "strategy": name, "final_mean": risks[i, j], "final_se": ses[i, j]})

    joint = exps.get("joint_optimal", (math.nan, math.nan))[0]
    report.check("joint optimum exponent", abs(joint - th) <= EXPONENT_TOLERANCE,
                 f"slope {joint:.4f} ± {exps.get('joint_optimal', (0, math.nan))[1]:.3f} "
                 f"vs theory {th:.4f} (tolerance {EXPONENT_TOLERANCE})")
    for name in names:
        if name == "joint_optimal":
            continue
        slope = exps[name][0]
        report.check(f"{name} exponent shallower than joint optimum", slope - joint > BASELINE_MARGIN,
                     f"slope {slope:.4f} vs {joint:.4f} (margin {BASELINE_MARGIN})")
    if failures:
        report.check("sweep points", False, "; ".join(failures), informational=True)

    d = spec.directory()
    if d is not None:
        for i, name in enumerate(names):
            report.files.append(csvio.write_table_csv(
                d / f"{name}.csv", ("D", "final_mean", "final_se"), zip(budgets, risks[i], ses[i])))
        report.files.append(csvio.write_table_csv(
            d / "exponents.csv", ("strategy", "slope", "slope_se", "theory"),
            ((n, exps[n][0], exps[n][1], th) for n in names)))
    return report.finish()


# ---------------------------------------------------------------------------


RUNNERS = {
    "fsl": run_fsl_verification,
    "placement": run_quality_placement,
    "degenerate": run_quality_placement,
    "joint": run_joint_comparison,
    "scaling": run_scaling_sweep,
}


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    return RUNNERS[spec.name](spec)


def _write_table(report: ExperimentReport, filename: str):
    d = report.spec.directory()
    if d is None or not report.table:
        return
    header = list(report.table[0])
    report.files.append(csvio.write_table_csv(d / filename, header,
                                              ([row[h] for h in header] for row in report.table)))
