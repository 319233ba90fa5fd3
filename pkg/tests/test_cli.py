import json

import numpy as np
import pytest

from wasabi_metric import cli
from wasabi_metric.feature_table import (
    FeatureTable,
    default_region_map,
    load_table,
    normalize_by_icv,
    write_table,
)
from wasabi_metric.gaussian_w2 import wasabi
from wasabi_metric.synthgen import CohortSpec, QCDistribution, generate_cohort

D = 4
MEAN = np.linspace(0.004, 0.02, D)
COV = np.diag((0.1 * MEAN) ** 2)


def make(tmp_path, name, n=120, seed=0, shift=0.0, qc=None):
    s = CohortSpec(name, MEAN * (1 + shift), COV, n, qc_distribution=qc or QCDistribution())
    path = tmp_path / f"{name}.csv"
    write_table(generate_cohort(s, seed), path)
    return str(path)


def run(capsys, *argv):
    code = cli.main(["-q", *argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestCompute:
    def test_same_file_zero(self, tmp_path, capsys):
        a = make(tmp_path, "a")
        code, out, _ = run(capsys, "compute", a, a)
        assert code == 0
        res = json.loads(out)
        assert res["value"] == 0.0 and res["metric"] == "wasabi"
        assert res["preprocessing"]["qc_threshold_source"] == "iqr"

    def test_matches_library(self, tmp_path, capsys):
        a, b = make(tmp_path, "a"), make(tmp_path, "b", seed=1, shift=0.1)
        code, out, _ = run(capsys, "compute", a, b, "--qc-threshold", "0")
        assert code == 0
        lib = wasabi(normalize_by_icv(load_table(a)), normalize_by_icv(load_table(b))).value
        assert json.loads(out)["value"] == lib

    def test_missing_map_column_exit_1(self, tmp_path, capsys):
        a = make(tmp_path, "a")
        code, _, err = run(capsys, "compute", a, a, "--region-map", "synthseg")
        assert code == 1
        msg = json.loads(err.strip().splitlines()[-1])
        assert msg["error"] == "InputError" and "left" in msg["message"]

    def test_synthseg_map(self, tmp_path, capsys):
        m = default_region_map()
        cols = list(m.input_columns)
        rng = np.random.default_rng(0)
        n = 30
        for name in ("a", "b"):
            vals = rng.uniform(1000, 5000, (n, len(cols)))
            icv = rng.uniform(1.3e6, 1.7e6, n)
            qc = rng.uniform(0.7, 0.9, n)
            with open(tmp_path / f"{name}.csv", "w") as fh:
                fh.write(",".join(["subject", m.qc_column, m.icv_column, *cols]) + "\n")
                for i in range(n):
                    row = [qc[i], icv[i], *vals[i]]
                    fh.write(",".join([f"{name}{i}", *(repr(float(v)) for v in row)]) + "\n")
        code, out, err = run(capsys, "compute", str(tmp_path / "a.csv"), str(tmp_path / "b.csv"), "--region-map", "synthseg")
        assert code == 0, err
        res = json.loads(out)
        assert res["d"] == 52 and res["value"] > 0

    def test_frechet_on_embeddings(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        for name, shift in (("ea", 0.0), ("eb", 1.0)):
            t = FeatureTable([f"{name}{i}" for i in range(50)], ["e0", "e1", "e2"], rng.standard_normal((50, 3)) + shift, volumes=False)
            write_table(t, tmp_path / f"{name}.csv")
        code, out, _ = run(capsys, "compute", str(tmp_path / "ea.csv"), str(tmp_path / "eb.csv"), "--metric", "frechet")
        assert code == 0
        assert json.loads(out)["value"] > 1.0

    def test_missing_file_exit_1(self, tmp_path, capsys):
        code, _, err = run(capsys, "compute", str(tmp_path / "nope.csv"), str(tmp_path / "nope.csv"))
        assert code == 1 and "error" in json.loads(err)

    def test_singular_is_numerical_exit_2(self, tmp_path, capsys):
        t = FeatureTable([f"s{i}" for i in range(10)], ["x"], np.ones((10, 1)), icv=np.ones(10))
        write_table(t, tmp_path / "c.csv")
        code, _, err = run(capsys, "normality", str(tmp_path / "c.csv"))
        assert code == 2 and json.loads(err)["error"] == "NumericalError"


class TestBootstrap:
    def test_protocol_and_rerun_identical(self, tmp_path, capsys):
        a, b = make(tmp_path, "a", n=80), make(tmp_path, "b", n=80, seed=1)
        args = ["bootstrap", a, b, "--sample-size", "40", "--repeats", "6", "--seed", "5"]
        code, out1, _ = run(capsys, *args)
        code2, out2, _ = run(capsys, *args, "--workers", "3")
        assert code == code2 == 0
        assert out1 == out2
        rep = json.loads(out1)
        assert rep["protocol"]["sample_size"] == 40 and rep["protocol"]["repeats"] == 6
        assert rep["protocol"]["seed"] == 5 and "qc_threshold" in rep["protocol"]
        assert len(rep["values"]) == 6

    def test_defaults_recorded(self, tmp_path, capsys):
        a = make(tmp_path, "a", n=520, qc=QCDistribution(jitter_sd=0.0))
        code, out, _ = run(capsys, "bootstrap", a, a, "--repeats", "2")
        assert code == 0
        assert json.loads(out)["protocol"]["sample_size"] == 500

    def test_csv_and_out_file(self, tmp_path, capsys):
        a, b = make(tmp_path, "a", n=50), make(tmp_path, "b", n=50, seed=2)
        dest = tmp_path / "boot.csv"
        code, out, _ = run(capsys, "bootstrap", a, b, "--sample-size", "20", "--repeats", "3", "--format", "csv", "--out", str(dest))
        assert code == 0 and out == ""
        lines = dest.read_text().splitlines()
        assert lines[0] == "repeat,value" and len(lines) == 4

    def test_sample_size_too_big(self, tmp_path, capsys):
        a = make(tmp_path, "a", n=30)
        code, _, err = run(capsys, "bootstrap", a, a, "--sample-size", "100", "--repeats", "2")
        assert code == 1 and "exceeds" in err


class TestCompare:
    def test_reference_only(self, tmp_path, capsys):
        ref = make(tmp_path, "ref", n=100)
        code, out, _ = run(capsys, "compare", ref, "--sample-size", "40", "--repeats", "5")
        assert code == 0
        rep = json.loads(out)
        assert len(rep["rows"]) == 1 and rep["rows"][0]["null"]

    def test_null_smallest_and_failed_row(self, tmp_path, capsys):
        ref = make(tmp_path, "ref", n=200)
        near = make(tmp_path, "near", n=120, seed=1, shift=0.05)
        far = make(tmp_path, "far", n=120, seed=2, shift=0.3)
        bad = make(tmp_path, "bad", n=120, seed=3, qc=QCDistribution(base=0.3, jitter_sd=0.01))
        code, out, err = run(
            capsys, "compare", ref, near, far, bad, "--sample-size", "50", "--repeats", "10",
            "--metric", "wasabi", "--metric", "mmd",
        )
        assert code == 0
        rep = json.loads(out)
        rows = {r["dataset_name"]: r for r in rep["rows"]}
        means = [rows[k]["metrics"]["wasabi"]["mean"] for k in ("ref", "near", "far")]
        assert means[0] < means[1] < means[2]
        assert rows["bad"]["status"] == "failed_qc" and rows["bad"]["metrics"]["wasabi"] is None
        assert "bad" in err and "warning" in err
        assert rep["protocol"]["metrics"] == ["wasabi", "mmd"]

    def test_text_format(self, tmp_path, capsys):
        ref = make(tmp_path, "ref", n=100)
        other = make(tmp_path, "other", n=60, seed=1)
        code, out, _ = run(capsys, "compare", ref, other, "--sample-size", "30", "--repeats", "4", "--format", "text")
        assert code == 0
        assert "ref (null)" in out and "other" in out and "WASABI" in out
        assert "\x1b[" not in out

    def test_column_mismatch(self, tmp_path, capsys):
        ref = make(tmp_path, "ref", n=100)
        t = FeatureTable([f"s{i}" for i in range(10)], ["x"], np.ones((10, 1)), icv=np.ones(10))
        write_table(t, tmp_path / "odd.csv")
        code, _, err = run(capsys, "compare", ref, str(tmp_path / "odd.csv"), "--sample-size", "30", "--repeats", "2")
        assert code == 1 and "differ" in err


def test_qc_filter(tmp_path, capsys):
    qc = [0.81, 0.60, 0.78, 0.69, 0.90, 0.76, 0.80, 0.79, 0.77]
    t = FeatureTable([f"s{i}" for i in range(9)], ["x"], np.ones((9, 1)), qc=qc, icv=np.ones(9))
    write_table(t, tmp_path / "t.csv")
    code, out, _ = run(capsys, "qc-filter", str(tmp_path / "t.csv"), "--write-table", str(tmp_path / "kept.csv"))
    assert code == 0
    rep = json.loads(out)
    assert rep["removed"] == ["s1", "s3"] and rep["n_kept"] == 7
    assert rep["qc_threshold"] == pytest.approx(0.70, abs=1e-12)
    assert load_table(tmp_path / "kept.csv").n_subjects == 7


def test_normality(tmp_path, capsys):
    a = make(tmp_path, "a", n=150)
    code, out, _ = run(capsys, "normality", a)
    assert code == 0
    rep = json.loads(out)
    assert rep["normalized"] and 0 <= rep["pvalue"] <= 1 and rep["d"] == D


class TestGen:
    def test_single_cohort(self, tmp_path, capsys):
        s = CohortSpec("one", MEAN, COV, 25)
        (tmp_path / "s.json").write_text(json.dumps(s.to_dict()))
        code, out, _ = run(capsys, "gen", str(tmp_path / "s.json"), "--out-dir", str(tmp_path / "o"), "--seed", "3")
        assert code == 0
        np.testing.assert_array_equal(load_table(tmp_path / "o" / "one.csv").values, generate_cohort(s, 3).values)

    def test_suite(self, tmp_path, capsys):
        s = CohortSpec("sc", MEAN, COV, 40)
        (tmp_path / "s.json").write_text(json.dumps({"base": s.to_dict(), "effect_sizes": [0, 0.5, 1.0]}))
        code, out, _ = run(capsys, "gen", str(tmp_path / "s.json"), "--out-dir", str(tmp_path / "o"))
        assert code == 0
        man = json.loads(out)
        assert len(man["files"]) == 3 and man["ground_truth_w2"][0] == 0.0
        assert (tmp_path / "o" / "sc_base.csv").exists()
        assert [f["effect_size"] for f in man["files"]] == [0, 0.5, 1.0]
