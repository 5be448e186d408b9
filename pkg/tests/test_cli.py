import json

import numpy as np
import pytest

from sbvar.cli import main
from sbvar.model import read_csv


def test_simulate_scenarios(tmp_path):
    assert main(["simulate", "--scenario", "1", "--seed", "7", "--out", str(tmp_path / "s1.csv")]) == 0
    assert read_csv(tmp_path / "s1.csv").values.shape == (300, 20)
    assert (tmp_path / "s1.spec.json").exists()
    assert main(["simulate", "--scenario", "3", "--seed", "7", "--out", str(tmp_path / "s3.csv")]) == 0
    assert read_csv(tmp_path / "s3.csv").values.shape == (80, 100)


def test_simulate_needs_source(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["simulate", "--out", str(tmp_path / "x.csv")])
    assert e.value.code == 2


def test_detect_needs_exactly_one_source(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["detect"])
    assert e.value.code == 2


@pytest.fixture(scope="module")
def s1_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    main(["simulate", "--scenario", "1", "--seed", "7", "--out", str(d / "s1.csv")])
    return d / "s1.csv"


def test_detect_end_to_end(s1_csv, tmp_path):
    out = tmp_path / "r.json"
    assert main(["detect", "--input", str(s1_csv), "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["schema_version"] == 1
    assert len(d["selected_breaks"]) == 2
    assert abs(d["selected_breaks"][0] - 100) <= 10 and abs(d["selected_breaks"][1] - 200) <= 10
    assert set(d["selected_breaks"]) <= set(d["candidates"])
    assert d["plan"]["lambda1"] is not None
    assert d["screening"]["ic_trace"]
    assert d["intervals"]["radius"] == 35
    seg = d["model"]["segments"][0]
    assert np.array(seg["coef"]).shape == (20, 20)
    assert len(seg["resid_var"]) == 20
    assert all(k in d["timings"] for k in ("stage1", "screening", "estimation"))


def test_detect_deterministic(s1_csv, tmp_path):
    args = ["detect", "--input", str(s1_csv), "--lambda1", "0.05"]
    main(args + ["--out", str(tmp_path / "a.json")])
    main(args + ["--out", str(tmp_path / "b.json")])
    a, b = (json.loads((tmp_path / f).read_text()) for f in ("a.json", "b.json"))
    a.pop("timings"), b.pop("timings")
    assert a == b


def test_detect_known_breaks_skips_stages(s1_csv, tmp_path):
    out = tmp_path / "k.json"
    assert main(["detect", "--input", str(s1_csv), "--breaks-known", "100,200", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["candidates"] is None and d["screening"] is None
    assert d["intervals"]["intervals"] == [[1, 64], [136, 164], [236, 300]]
    assert "stage1" not in d["timings"]


def test_detect_constant_series(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("\n".join(["1.0,2.0,3.0"] * 60) + "\n")
    out = tmp_path / "c.json"
    assert main(["detect", "--input", str(path), "--out", str(out), "--lambda1", "0.1"]) == 0
    assert json.loads(out.read_text())["selected_breaks"] == []


def test_detect_stage_error_exit_code(tmp_path):
    out = tmp_path / "e.json"
    # a radius this large leaves nothing to estimate on
    code = main(["detect", "--scenario", "1", "--seed", "2", "--breaks-known", "150", "--rn", "200",
                 "--out", str(out)])
    assert code == 2
    assert "estimation" in json.loads(out.read_text())["errors"]


def test_detect_options_wired(s1_csv, tmp_path):
    out = tmp_path / "o.json"
    code = main(["detect", "--input", str(s1_csv), "--lambda1", "0.05", "--eta", "0.06", "--omega-c", "0.4",
                 "--rn", "20", "--screen", "exhaustive", "--rho-grid", "0.02,0.05", "--diff", "1",
                 "--out", str(out)])
    assert code == 0
    d = json.loads(out.read_text())
    assert d["plan"]["eta"] == 0.06 and d["plan"]["radius"] == 20
    assert d["plan"]["omega_constant"] == 0.4
    assert d["model"]["rho"] in (0.02, 0.05)


def test_benchmark_with_baseline(tmp_path):
    base = tmp_path / "base"
    base.mkdir()
    (base / "1.txt").write_text("100\n200\n")
    (base / "2.txt").write_text("150\n")
    out = tmp_path / "bench"
    code = main(["benchmark", "--scenario", "1", "--reps", "2", "--jobs", "2", "--lambda1", "0.05",
                 "--baseline-breaks", str(base), "--out", str(out)])
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["seeds"] == [1, 2]
    assert rep["detection"]["replicates"] == 2
    assert rep["baseline"]["detection"]["breaks"][0]["selection_rate"] == 0.5
    assert rep["baseline"]["estimation"]["replicates"] == 1
    lines = (out / "replicates.csv").read_text().splitlines()
    assert len(lines) == 3


def test_benchmark_parallel_matches_serial(tmp_path):
    args = ["benchmark", "--scenario", "1", "--reps", "2", "--lambda1", "0.05"]
    main(args + ["--jobs", "1", "--out", str(tmp_path / "a")])
    main(args + ["--jobs", "2", "--out", str(tmp_path / "b")])
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    assert a == b
