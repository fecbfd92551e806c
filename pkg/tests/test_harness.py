import json

import numpy as np
import pytest

from fslsched import csvio
from fslsched.harness import (EXPERIMENTS, ExperimentSpec, FitRejectedError, budget_grid, fit_power_law,
                              fsl_schedules, joint_strategies, parse_regime, placement_schedules, preset,
                              run_experiment, run_scaling_sweep, theory_exponent)
from fslsched.schedule import NoiseModel
from fslsched.simulator import RunConfig, run_sgd
from fslsched.spectrum import Regime, make_instance


class TestPresets:
    def test_fsl_tables(self):
        n = preset("fsl", "noise")
        assert (n["N"], n["beta"], n["s"], n["eta"], n["K"], n["B"]) == (500, 2.0, 2.0, 0.01, 15000, 32.0)
        sg = preset("fsl", "signal")
        assert sg.instance().regime is Regime.SIGNAL_LIMITED
        assert n.instance().regime is Regime.NOISE_LIMITED
        assert len(n.seeds) == 10

    def test_joint_tables(self):
        n, sg = preset("joint", "noise"), preset("joint", "signal")
        assert (n["D"], n["eta"], n["rho"], n["sigma_good_sq"]) == (200000.0, 0.01, 0.3, 0.1)
        assert (sg["D"], sg["B_min"], sg["beta"], sg["s"]) == (10000.0, 4.0, 3.0, 0.5)
        assert np.allclose(budget_grid(n), np.geomspace(2e4, 2e5, 5))

    def test_quick_scales_down(self):
        q = preset("joint", "noise", quick=True)
        assert q.quick and q.informational
        assert q["N"] == 100 and q["D"] == 40000.0
        assert q.seeds == (0, 1)

    def test_regime_parsing(self):
        assert parse_regime("noise") is Regime.NOISE_LIMITED
        assert parse_regime(Regime.SIGNAL_LIMITED) is Regime.SIGNAL_LIMITED
        with pytest.raises(ValueError):
            parse_regime("critical-ish")

    def test_unknown_experiment_and_parameter(self):
        with pytest.raises(ValueError):
            preset("nope", "noise")
        with pytest.raises(KeyError):
            preset("fsl", "noise").with_parameters(foo=1)

    def test_config_round_trip(self, tmp_path):
        spec = preset("placement", "signal", seeds=(4, 5, 6)).with_outputs(tmp_path)
        again = ExperimentSpec.from_config(json.loads(json.dumps(spec.to_config())), tmp_path)
        assert again.to_config() == spec.to_config()
        assert again.config_hash() == spec.config_hash()


class TestSchedules:
    def test_fsl_schedules_share_budget(self):
        scheds = fsl_schedules(preset("fsl", "noise"))
        assert set(scheds) == {"Early", "Late", "Middle", "Sinusoidal"}
        for sch in scheds.values():
            assert abs(sch.total_data - 32 * 15000 * 0.01) <= sch.slack
            assert abs(sch.hq_data - 0.3 * sch.total_data) <= sch.slack

    def test_degenerate_spends_the_budget(self):
        scheds = placement_schedules(preset("degenerate", "noise", quick=True))
        hq = [s.hq_data for s in scheds.values()]
        assert max(hq) - min(hq) <= 2 * max(s.slack for s in scheds.values())

    @pytest.mark.parametrize("regime", ["noise", "signal"])
    def test_joint_strategies_budget_matched(self, regime):
        spec = preset("joint", regime, quick=True)
        scheds, info = joint_strategies(spec)
        assert list(scheds) == ["constant_uniform", "constant_late", "sqrtk_uniform", "joint_optimal"]
        for sch in scheds.values():
            assert abs(sch.total_data - spec["D"]) <= sch.slack + 1e-9 * spec["D"]
            assert abs(sch.hq_data - spec["rho"] * spec["D"]) <= sch.slack + 1e-9 * spec["D"]
        assert info["T_star"] > 0


class TestLimitingCases:
    def test_zero_noise_placements_coincide(self):
        spec = preset("placement", "noise", quick=True).with_parameters(sigma_good_sq=0.0, sigma_bad_sq=0.0)
        scheds = placement_schedules(spec)
        inst, noise = spec.instance(), spec.noise()
        runs = [run_sgd(RunConfig(inst, noise, s, (0, 1), 50)).per_seed for s in scheds.values()]
        for r in runs[1:]:
            np.testing.assert_array_equal(r, runs[0])

    def test_zero_noise_fsl_bang_bang_identical(self):
        spec = preset("fsl", "signal", quick=True).with_parameters(sigma_good_sq=0.0, sigma_bad_sq=0.0)
        scheds = fsl_schedules(spec)
        inst, noise = spec.instance(), spec.noise()
        runs = {k: run_sgd(RunConfig(inst, noise, s, (0,), 50)).per_seed for k, s in scheds.items()}
        np.testing.assert_array_equal(runs["Early"], runs["Late"])
        np.testing.assert_array_equal(runs["Early"], runs["Middle"])

    @pytest.mark.parametrize("rho", [0.0, 1.0])
    def test_extreme_rho_placements_coincide(self, rho):
        spec = preset("placement", "signal", quick=True).with_parameters(rho=rho)
        scheds = placement_schedules(spec)
        first = next(iter(scheds.values()))
        assert all(s == first for s in scheds.values())


class TestPowerLawFit:
    def test_exact_power_law(self):
        x = np.geomspace(1e3, 1e5, 6)
        slope, se, icpt = fit_power_law(x, 3.0 * x ** -0.8)
        assert slope == pytest.approx(-0.8, abs=1e-12)
        assert icpt == pytest.approx(np.log(3.0), abs=1e-10)

    def test_too_few_points(self):
        with pytest.raises(FitRejectedError):
            fit_power_law([1.0, 2.0, 3.0], [1.0, np.nan, 0.5])

    def test_theory_exponents(self):
        assert theory_exponent(make_instance(50, 2.0, 2.0)) == pytest.approx(-0.8)
        assert theory_exponent(make_instance(50, 3.0, 0.5)) == pytest.approx(-0.5)

    def test_sweep_needs_five_budgets(self):
        with pytest.raises(ValueError):
            run_scaling_sweep(preset("scaling", "signal", quick=True), budgets=[1e3, 2e3, 4e3])


@pytest.mark.parametrize("name", EXPERIMENTS)
@pytest.mark.parametrize("regime", ["noise", "signal"])
def test_quick_run_writes_outputs(tmp_path, name, regime):
    spec = preset(name, regime, quick=True, outputs=tmp_path)
    report = run_experiment(spec)
    d = spec.directory()
    assert (d / "report.txt").exists()
    doc = csvio.read_manifest(d / "manifest.json")
    assert doc["config_hash"] == spec.config_hash()
    assert ExperimentSpec.from_manifest(d / "manifest.json").to_config() == spec.to_config()
    assert all(c.informational for c in report.checks)
    assert report.ok
    assert all(p.exists() for p in report.files)
    assert len(report.files) >= 3
