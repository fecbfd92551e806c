"""End-to-end acceptance gates at full fidelity (10 seeds, full-size presets).

Each test prints one PASS/FAIL line, repeated in the terminal summary.
"""

import numpy as np
import pytest
from scipy.integrate import quad

from fslsched.harness import preset, run_experiment
from fslsched.planner import allocate_quality, noise_integral, plan_noise_limited, plan_signal_limited, ramp_batch, ramp_data
from fslsched.schedule import JointSchedule, NoiseModel, Placement, bang_bang, sinusoidal_joint
from fslsched.simulator import RunConfig, run_moment_oracle, run_sgd
from fslsched.spectrum import KernelSpec, Regime, kernel_function, make_instance

from oracles import exhaustive_quality

pytestmark = pytest.mark.slow
REGIMES = ("noise", "signal")


def _run(name):
    return {r: run_experiment(preset(name, r)) for r in REGIMES}


def _checks(reports, prefix=""):
    out = []
    for r, rep in reports.items():
        for c in rep.checks:
            if not c.informational and c.name.startswith(prefix) and "budget audit" not in c.name:
                out.append((r, c))
    return out


def _verdict(checks):
    failed = [f"{r}: {c.name} ({c.detail.split(';')[0]})" for r, c in checks if not c.passed]
    return not failed, failed


def test_a1_fsl_tracking(criterion):
    reports = _run("fsl")
    checks = _checks(reports)
    assert len(checks) == 8
    ok, failed = _verdict(checks)
    worst = {r: max(row["max_rel_dev"] for row in rep.table) for r, rep in reports.items()}
    detail = ", ".join(f"{r} worst deviation {worst[r]:.3f}" for r in REGIMES) + " (limit 0.30)"
    criterion("A1", ok, detail + ("; failing: " + "; ".join(failed) if failed else ""))
    assert ok, failed


def test_a2_placement_ordering(criterion):
    reports = _run("placement")
    checks = _checks(reports)
    assert len(checks) == 4
    ok, failed = _verdict(checks)
    detail = "; ".join(f"{r}: " + ", ".join(f"{row['placement']}={row['final_mean']:.4g}" for row in rep.table)
                       for r, rep in reports.items())
    criterion("A2", ok, detail + ("; failing: " + "; ".join(failed) if failed else ""))
    assert ok, failed


def test_a3_degenerate_placement(criterion):
    reports = _run("degenerate")
    checks = _checks(reports)
    assert len(checks) == 2
    ok, failed = _verdict(checks)
    detail = "; ".join(f"{r}: {c.detail.split(';')[0]}" for r, c in checks)
    criterion("A3", ok, detail)
    assert ok, failed


def test_a4_joint_dominance(criterion):
    reports = _run("joint")
    checks = _checks(reports)
    assert len(checks) == 3
    ok, failed = _verdict(checks)
    detail = "; ".join(f"{r}: " + ", ".join(f"{row['strategy']}={row['final_mean']:.4g}" for row in rep.table)
                       for r, rep in reports.items())
    criterion("A4", ok, detail + ("; failing: " + "; ".join(failed) if failed else ""))
    assert ok, failed


def _random_config(rng):
    while True:
        beta, s = 1.5 + 1.5 * rng.random(), 0.3 + 2.2 * rng.random()
        if abs(s - (1 - 1 / beta)) > 0.05:
            break
    inst = make_instance(int(rng.integers(2, 51)), beta, s)
    K = int(rng.integers(200, 5001))
    eta = 0.02 + 0.15 * rng.random()
    rho = rng.random()
    kind = rng.integers(3)
    if kind == 0:
        sch = bang_bang(float(rng.integers(1, 17)), K, eta, rho, list(Placement)[rng.integers(4)])
    elif kind == 1:
        sch = sinusoidal_joint(1 + 15 * rng.random(), K, eta, rho)
    else:
        sch = JointSchedule(eta, 1 + 15 * rng.random(K), rng.random(K))
    g = 0.05 + 0.5 * rng.random()
    return inst, NoiseModel(g, g * (1.5 + 10 * rng.random()), rho), sch


def test_a5_oracle_equivalence(criterion):
    rng = np.random.default_rng(20240)
    hits = total = 0
    worst = 1.0
    for _ in range(20):
        inst, noise, sch = _random_config(rng)
        cfg = RunConfig(inst, noise, sch, range(32), max(1, sch.steps // 50))
        mc, orc = run_sgd(cfg), run_moment_oracle(cfg)
        inside = np.abs(mc.mean_risk - orc.mean_risk)[1:] <= 3 * mc.se_risk[1:]
        hits += int(inside.sum())
        total += inside.size
        worst = min(worst, float(inside.mean()))
    frac = hits / total
    ok = frac >= 0.95
    criterion("A5", ok, f"{frac:.4f} of {total} points within 3 SE over 20 configs "
                        f"(worst config {worst:.3f}; limit 0.95)")
    assert ok


def test_a6_scaling_exponents(criterion):
    reports = _run("scaling")
    checks = _checks(reports)
    ok, failed = _verdict(checks)
    parts = []
    for r, rep in reports.items():
        res = rep.result
        slopes = ", ".join(f"{n}={res.fitted_exponents[n][0]:.3f}" for n in res.strategies)
        parts.append(f"{r} (theory {res.theory_exponent:.2f}): {slopes}")
    criterion("A6", ok, "; ".join(parts) + ("; failing: " + "; ".join(failed) if failed else ""))
    assert ok, failed


def test_a7_planner_closed_forms(criterion):
    sig = plan_signal_limited(make_instance(500, 3.0, 0.5), NoiseModel(0.25, 1.0, 0.3), 10000.0, 4.0, 0.05,
                              refine=True)
    c = sig.constants
    t1_ok = c["T1"] == (1 - 0.3) * 10000.0 / 4.0
    num, _ = quad(lambda t: ramp_batch(t, c["T_star"], c["T4"], 4.0, c["delta"]),
                  c["T_star"] - c["T4"], c["T_star"], epsabs=0, epsrel=1e-12, limit=200)
    ramp_err = abs(ramp_data(c["T4"], 4.0, c["delta"]) - num) / num

    nm = NoiseModel(0.1, 1.0, 0.3)
    inst = make_instance(500, 2.0, 2.0)
    sol = plan_noise_limited(inst, nm, 200000.0, 0.01)
    sch, j = sol.schedule, sol.constants["boundary_step"]
    w = np.sqrt(kernel_function(KernelSpec.power(), inst)(sch.horizon - sch.times))
    drop = (sch.batch[j + 1] / w[j + 1]) / (sch.batch[j - 1] / w[j - 1])
    drop_err = abs(drop - nm.r) / nm.r
    # equal noise-injection rate sigma^2/b on both sides, compared at a common kernel weight
    c_off, c_on = sch.batch[j - 1] / w[j - 1], sch.batch[j + 1] / w[j + 1]
    rate_err = abs(nm.sigma_good_sq / c_on - nm.sigma_bad_sq / c_off) / (nm.sigma_bad_sq / c_off)
    ok = t1_ok and ramp_err <= 1e-6 and drop_err <= 1e-9 and rate_err <= 1e-9
    criterion("A7", ok, f"T1={c['T1']:g}; ramp data rel err {ramp_err:.2e}; drop ratio rel err {drop_err:.2e}; "
                        f"noise-rate rel err {rate_err:.2e}")
    assert ok


def test_a8_knapsack_optimality(criterion):
    rng = np.random.default_rng(8)
    inst = make_instance(200, 2.0, 2.0)
    worst, cases = 0.0, 0
    for spec in (KernelSpec.power(), KernelSpec.exact()):
        kfn = kernel_function(spec, inst)
        for K in range(1, 13):
            for _ in range(3):
                eta = 0.05 + rng.random()
                base = JointSchedule(eta, 1 + 20 * rng.random(K), np.zeros(K))
                g = 0.05 + 0.5 * rng.random()
                noise = NoiseModel(g, g * (1.5 + 5 * rng.random()), rng.random())
                best, _ = exhaustive_quality(base, noise, kfn)
                got = noise_integral(allocate_quality(base, noise, kfn), noise, kfn)
                worst = max(worst, abs(got - best) / best)
                cases += 1
    ok = worst <= 1e-12
    criterion("A8", ok, f"{cases} instances with K <= 12; worst relative gap to the exhaustive optimum {worst:.1e}")
    assert ok
