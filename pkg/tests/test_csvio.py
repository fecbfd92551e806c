import json

import numpy as np
import pytest

from fslsched import csvio
from fslsched.schedule import sinusoidal_joint
from fslsched.simulator import RiskTrajectory, Source


def test_schedule_round_trip(tmp_path):
    sch = sinusoidal_joint(7.3, 500, 0.01, 0.3)
    path = csvio.write_schedule_csv(tmp_path / "s.csv", sch)
    back = csvio.read_schedule_csv(path, eta=0.01)
    assert back == sch
    assert path.read_text().splitlines()[0] == "step,time,batch,p"
    inferred = csvio.read_schedule_csv(path)
    assert inferred.eta == pytest.approx(0.01, rel=1e-12)
    np.testing.assert_array_equal(inferred.batch, sch.batch)


def test_trajectory_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    tr = RiskTrajectory(np.arange(5) * 0.1, rng.random(5), rng.random(5) / 10, Source.MONTE_CARLO)
    back = csvio.read_trajectory_csv(csvio.write_trajectory_csv(tmp_path / "t.csv", tr))
    for name in ("times", "mean_risk", "se_risk"):
        np.testing.assert_array_equal(getattr(back, name), getattr(tr, name))
    assert back.source is Source.MONTE_CARLO


def test_wrong_header_rejected(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="expected header"):
        csvio.read_schedule_csv(p)


def test_constants_round_trip(tmp_path):
    consts = {"T1": 1750.0, "n1": 35000, "kappa": 0.27027027027027023, "regime": "SignalLimited"}
    path = csvio.write_constants(tmp_path / "c.txt", consts)
    assert path.read_text().splitlines()[0].startswith("T1 = ")
    assert csvio.read_constants(path) == consts


def test_constants_parse_error_has_line(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("a = 1\nbroken\n")
    with pytest.raises(ValueError, match=r"c\.txt:2"):
        csvio.read_constants(p)


def test_manifest_hash(tmp_path):
    cfg = {"b": [1, 2], "a": {"x": np.float64(0.5)}}
    path = csvio.write_manifest(tmp_path, cfg, {"ok": True})
    doc = csvio.read_manifest(path)
    assert doc["config_hash"] == csvio.config_hash({"a": {"x": 0.5}, "b": [1, 2]})
    doc["config"]["b"] = [3]
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="hash"):
        csvio.read_manifest(path)


def test_float_format_is_lossless():
    x = 0.1 + 0.2
    assert float(csvio.fmt(x)) == x
    assert csvio.fmt(3) == "3"
    assert csvio.fmt(True) == "True"
