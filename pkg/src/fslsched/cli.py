"""Command-line entry point: ``fslsched {simulate,theory,plan,reproduce,sweep}``.

Configs are INI files with sections ``[instance]``, ``[noise]``,
``[schedule]``, ``[run]`` and ``[experiment]``.  Every key is optional; an
empty config reproduces the noise-limited FSL tracking setting (Late
placement, 10 seeds).
"""

from __future__ import annotations

import argparse
import configparser
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import csvio, harness
from .planner import InfeasibleBudgetError, plan
from .schedule import (JointSchedule, NoiseModel, Placement, bang_bang, budget_aware_bang_bang,
                       sinusoidal_joint, sqrt_kernel_batch)
from .simulator import DivergenceError, RunConfig, run_moment_oracle, run_sgd
from .spectrum import (KernelForm, KernelSpec, Regime, UnsupportedRegimeError, kernel_function,
                       make_instance)
from .theory import fit_scale, predict

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_DIVERGENCE = 3
EXIT_ASSERTION = 4
EXIT_IO = 5
EXIT_REGIME = 6

SCHEDULE_KINDS = ("early", "late", "middle", "uniform", "sinusoidal", "sqrtk", "joint")

DEFAULTS = {
    "instance": {"N": 500, "beta": 2.0, "s": 2.0},
    "noise": {"sigma_good_sq": 0.1, "sigma_bad_sq": 1.0, "rho": 0.3},
    "schedule": {"kind": "late", "eta": 0.01, "batch": 32.0, "steps": 15000, "budget": 200000.0,
                 "b_min": 1.0, "placement": "uniform"},
    "run": {"seeds": "0-9", "eval_stride": 150, "sampler": "reduced", "kernel": "exact"},
    "experiment": {"regime": "auto", "out": "out", "d_lo": 2e4, "d_hi": 2e5, "n_budgets": 5,
                   "records": 100},
}


class ConfigError(ValueError):
    pass


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"0-9"``, ``"1,2,3"`` or a mix such as ``"0-4,7"``."""
    out = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            if sep and lo:
                a, b = int(lo), int(hi)
                if b < a:
                    raise ValueError
                out.extend(range(a, b + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise ConfigError(f"bad seed list {text!r}") from None
    if not out or len(set(out)) != len(out):
        raise ConfigError(f"seed list {text!r} must be non-empty with distinct entries")
    return tuple(out)


@dataclass
class CliConfig:
    sections: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULTS.items()})
    source: Optional[str] = None

    def __getitem__(self, section: str) -> dict:
        return self.sections[section]

    @property
    def seeds(self) -> tuple[int, ...]:
        return parse_seeds(self["run"]["seeds"])

    def instance(self):
        i = self["instance"]
        return make_instance(i["N"], i["beta"], i["s"])

    def noise(self) -> NoiseModel:
        n = self["noise"]
        if n["sigma_good_sq"] < n["sigma_bad_sq"]:
            return NoiseModel(n["sigma_good_sq"], n["sigma_bad_sq"], n["rho"])
        return NoiseModel.unchecked(n["sigma_good_sq"], n["sigma_bad_sq"], n["rho"])

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(KernelForm.EXACT if self["run"]["kernel"] == "exact" else KernelForm.POWER)

    def quick(self) -> "CliConfig":
        f = harness.QUICK_FACTOR
        c = CliConfig({k: dict(v) for k, v in self.sections.items()}, self.source)
        c["instance"]["N"] = max(1, c["instance"]["N"] // f)
        c["schedule"]["steps"] = max(1, c["schedule"]["steps"] // f)
        c["schedule"]["budget"] /= f
        c["run"]["eval_stride"] = max(1, c["run"]["eval_stride"] // f)
        c["experiment"]["d_lo"] /= f
        c["experiment"]["d_hi"] /= f
        c["run"]["seeds"] = ",".join(str(s) for s in self.seeds[:len(harness.QUICK_SEEDS)])
        return c

    def as_dict(self) -> dict:
        return {k: dict(v) for k, v in self.sections.items()}


def _key_line(lines: Sequence[str], section: str, key: str) -> Optional[int]:
    current = None
    for n, raw in enumerate(lines, 1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and s and s[0] not in "#;":
            name = s.split("=", 1)[0].split(":", 1)[0].strip()
            if name.lower() == key.lower():
                return n
    return None


_VERBATIM = {"seeds", "out"}


def _convert(name: str, default, raw: str):
    raw = raw.strip()
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw if name in _VERBATIM else raw.lower()


def load_config(path=None, text: Optional[str] = None) -> CliConfig:
    """Parse an INI config on top of the defaults; unknown sections or keys are errors."""
    cfg = CliConfig(source=None if path is None else str(path))
    if path is None and text is None:
        return cfg
    if text is None:
        text = Path(path).read_text(encoding="utf-8")
    where = path or "<config>"
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(where))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    lines = text.splitlines()
    for section in parser.sections():
        if section not in DEFAULTS:
            n = next((i for i, l in enumerate(lines, 1) if l.strip() == f"[{section}]"), None)
            raise ConfigError(f"{where}:{n}: unknown section [{section}]; "
                              f"expected one of {', '.join(DEFAULTS)}")
        known = {k.lower(): k for k in DEFAULTS[section]}
        for key, raw in parser.items(section):
            n = _key_line(lines, section, key)
            if key.lower() not in known:
                raise ConfigError(f"{where}:{n}: unknown key '{key}' in [{section}]; "
                                  f"allowed: {', '.join(DEFAULTS[section])}")
            name = known[key.lower()]
            try:
                cfg[section][name] = _convert(name, DEFAULTS[section][name], raw)
            except ValueError:
                raise ConfigError(f"{where}:{n}: cannot parse {section}.{name} = {raw!r}") from None
    _validate(cfg, where)
    return cfg


def _validate(cfg: CliConfig, where):
    if cfg["schedule"]["kind"] not in SCHEDULE_KINDS:
        raise ConfigError(f"{where}: schedule.kind must be one of {', '.join(SCHEDULE_KINDS)}")
    if cfg["schedule"]["placement"] not in ("early", "late", "middle", "uniform"):
        raise ConfigError(f"{where}: schedule.placement must be early, late, middle or uniform")
    if cfg["run"]["sampler"] not in ("reduced", "direct"):
        raise ConfigError(f"{where}: run.sampler must be reduced or direct")
    if cfg["run"]["kernel"] not in ("exact", "power"):
        raise ConfigError(f"{where}: run.kernel must be exact or power")
    if cfg["experiment"]["regime"] not in ("auto", "noise", "signal"):
        raise ConfigError(f"{where}: experiment.regime must be auto, noise or signal")
    parse_seeds(cfg["run"]["seeds"])


# ---------------------------------------------------------------------------


def build_schedule(cfg: CliConfig) -> JointSchedule:
    s = cfg["schedule"]
    kind, eta, rho = s["kind"], s["eta"], cfg["noise"]["rho"]
    if kind in ("early", "late", "middle", "uniform"):
        return bang_bang(s["batch"], s["steps"], eta, rho, Placement(kind.capitalize()))
    if kind == "sinusoidal":
        return sinusoidal_joint(s["batch"], s["steps"], eta, rho)
    if kind == "sqrtk":
        kfn = kernel_function(cfg.kernel_spec(), cfg.instance())
        base, _ = sqrt_kernel_batch(s["budget"], s["steps"] * eta, eta, kfn, s["b_min"], rho=rho)
        return budget_aware_bang_bang(base, rho, Placement(s["placement"].capitalize()))
    return plan(cfg.instance(), cfg.noise(), s["budget"], eta, s["b_min"], refine=True).schedule


def _stride(cfg: CliConfig, steps: int) -> int:
    stride = cfg["run"]["eval_stride"]
    return stride if stride > 0 else harness.stride_for(steps, cfg["experiment"]["records"])


def _out_dir(args, cfg: Optional[CliConfig]) -> Path:
    if args.out:
        return Path(args.out)
    return Path(cfg["experiment"]["out"] if cfg is not None else DEFAULTS["experiment"]["out"])


def cmd_simulate(args, cfg: CliConfig) -> int:
    sch = build_schedule(cfg)
    run = RunConfig(cfg.instance(), cfg.noise(), sch, cfg.seeds, _stride(cfg, sch.steps),
                    cfg["run"]["sampler"])
    mc = run_sgd(run)
    oracle = run_moment_oracle(run)
    out = _out_dir(args, cfg)
    csvio.write_trajectory_csv(out / "mc.csv", mc)
    csvio.write_trajectory_csv(out / "oracle.csv", oracle)
    csvio.write_schedule_csv(out / "schedule.csv", sch)
    m, se = mc.final_risk()
    csvio.write_manifest(out, {"command": "simulate", **cfg.as_dict()},
                         {"final_mean": m, "final_se": se, "oracle_final": oracle.final_risk()[0]})
    print(f"final risk {m:.6g} ± {se:.2g} (oracle {oracle.final_risk()[0]:.6g}); wrote {out}")
    return EXIT_OK


def cmd_theory(args, cfg: CliConfig) -> int:
    inst, noise = cfg.instance(), cfg.noise()
    sch = build_schedule(cfg)
    stride = _stride(cfg, sch.steps)
    pred = predict(inst, noise, sch, cfg.kernel_spec(), eval_stride=stride)
    out = _out_dir(args, cfg)
    csvio.write_trajectory_csv(out / "theory.csv", pred.trajectory)
    extra = {}
    if args.fit:
        oracle = run_moment_oracle(RunConfig(inst, noise, sch, (0,), stride))
        fitted = fit_scale(pred, oracle, t_min=0.1 * sch.horizon)
        csvio.write_comparison_csv(out / "comparison.csv", oracle, fitted.trajectory.mean_risk)
        extra["scale"] = fitted.scale
        print(f"scale fitted against the moment oracle: {fitted.scale:.6g}")
    csvio.write_manifest(out, {"command": "theory", **cfg.as_dict()}, extra)
    print(f"wrote {out / 'theory.csv'}")
    return EXIT_OK


def cmd_plan(args, cfg: CliConfig) -> int:
    inst, noise = cfg.instance(), cfg.noise()
    s = cfg["schedule"]
    choice = args.regime or cfg["experiment"]["regime"]
    regime = None if choice == "auto" else harness.parse_regime(choice)
    if regime is not None and inst.regime is not regime:
        raise UnsupportedRegimeError(
            f"--regime {choice} requested but the instance is {inst.regime.value} "
            f"(s={inst.s:g}, boundary 1-1/beta={inst.s_crit:g})")
    sol = plan(inst, noise, s["budget"], s["eta"], s["b_min"], refine=args.refine, regime=regime)
    out = _out_dir(args, cfg)
    block = {"regime": sol.regime.value, "T_star": sol.T_star, "predicted_risk": sol.predicted_risk,
             **sol.constants}
    csvio.write_constants(out / "solution.txt", block)
    csvio.write_schedule_csv(out / "schedule.csv", sol.schedule)
    csvio.write_manifest(out, {"command": "plan", "refine": args.refine, **cfg.as_dict()})
    for note in sol.notes:
        print(f"note: {note}")
    for k in sorted(block):
        print(f"{k} = {csvio.fmt(block[k])}")
    return EXIT_OK


def _regimes(choice: str) -> list:
    if choice in (None, "both", "auto"):
        return [Regime.NOISE_LIMITED, Regime.SIGNAL_LIMITED]
    return [harness.parse_regime(choice)]


def _report(reports) -> int:
    ok = True
    for r in reports:
        print(r.summary(), end="")
        ok &= r.ok
    return EXIT_OK if ok else EXIT_ASSERTION


def cmd_reproduce(args, cfg) -> int:
    out = _out_dir(args, None)
    if args.manifest:
        specs = [harness.ExperimentSpec.from_manifest(args.manifest, out)]
    else:
        seeds = parse_seeds(args.seeds) if args.seeds else None
        specs = [harness.preset(args.figure, reg, seeds=seeds, quick=args.quick, outputs=out)
                 for reg in _regimes(args.regime)]
    return _report([harness.run_experiment(s) for s in specs])


def cmd_sweep(args, cfg: CliConfig) -> int:
    inst = cfg.instance()
    if inst.regime is Regime.CRITICAL:
        raise UnsupportedRegimeError(
            f"critical regime unsupported: s = {inst.s:g} equals 1 - 1/beta = {inst.s_crit:g}")
    i, n, s, e = cfg["instance"], cfg["noise"], cfg["schedule"], cfg["experiment"]
    params = {"N": i["N"], "beta": i["beta"], "s": i["s"], "eta": s["eta"], "rho": n["rho"],
              "sigma_good_sq": n["sigma_good_sq"], "sigma_bad_sq": n["sigma_bad_sq"],
              "D": e["d_hi"], "B_min": s["b_min"], "records": e["records"],
              "D_lo": e["d_lo"], "D_hi": e["d_hi"], "n_budgets": e["n_budgets"]}
    spec = harness.ExperimentSpec("scaling", inst.regime, params, harness.JOINT_STRATEGIES,
                                  cfg.seeds, str(_out_dir(args, cfg)), args.quick)
    report = harness.run_scaling_sweep(spec)
    res = report.result
    for name in res.strategies:
        slope, se = res.fitted_exponents[name]
        print(f"{name}: slope {slope:.4f} ± {se:.4f}")
    print(f"theory: {res.theory_exponent:.4f}")
    return _report([report])


COMMANDS = {"simulate": cmd_simulate, "theory": cmd_theory, "plan": cmd_plan,
            "reproduce": cmd_reproduce, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fslsched", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("config", nargs="?", help="INI config (defaults used when omitted)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seeds", help="seed list, e.g. 0-9 or 1,2,3")
        sp.add_argument("--quick", action="store_true", help="reduced N, steps and seeds; checks become warnings")

    common(sub.add_parser("simulate", help="Monte Carlo and moment-oracle risk trajectories"))
    sp = sub.add_parser("theory", help="theory prediction for the configured schedule")
    common(sp)
    sp.add_argument("--fit", action="store_true", help="also fit the scale against the moment oracle")
    sp = sub.add_parser("plan", help="optimal joint schedule for the configured budget")
    common(sp)
    sp.add_argument("--regime", choices=("auto", "noise", "signal"))
    sp.add_argument("--refine", action="store_true", help="numerically refine the ramp length")
    sp = sub.add_parser("reproduce", help="run a built-in experiment")
    sp.add_argument("figure", choices=harness.EXPERIMENTS)
    common(sp, config=False)
    sp.add_argument("--regime", choices=("noise", "signal", "both"), default="both")
    sp.add_argument("--manifest", help="re-run the experiment recorded in a manifest.json")
    sp = sub.add_parser("sweep", help="budget sweep with fitted scaling exponents")
    common(sp)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = None
        if args.command != "reproduce":
            cfg = load_config(args.config)
            if args.seeds:
                cfg["run"]["seeds"] = args.seeds
                parse_seeds(args.seeds)
            if args.quick:
                cfg = cfg.quick()
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except UnsupportedRegimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except DivergenceError as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (InfeasibleBudgetError, ValueError, KeyError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
