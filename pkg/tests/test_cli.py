import csv
import json

import numpy as np
import pytest

from randlra.cli import main
from randlra.linalg import make_rng, qr_thin
from randlra.mmio import read_matrix, read_spectrum, write_matrix
from randlra.oneview import min_variance_lc, plan_balanced, sketch
from randlra.testbed import gen_test_matrix


def run_json(path):
    return json.loads((path / "run.jsonl").read_text())


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# genmat


def test_genmat_spectrum_and_determinism(tmp_path):
    out = tmp_path / "polyfast.spec"
    assert main(["genmat", "--kind", "polyfast", "--n", "1000", "--out", str(out)]) == 0
    lines = [ln for ln in out.read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) == 1000 and float(lines[11]) == pytest.approx(1 / 9, rel=1e-15)
    assert np.array_equal(read_spectrum(out), gen_test_matrix("PolyFast").sigma)
    a, b = tmp_path / "a.mtx", tmp_path / "b.mtx"
    for p in (a, b):
        assert main(["genmat", "--kind", "lowrankmed", "--n", "50", "--seed", "7", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()
    M = read_matrix(a)
    assert M.shape == (50, 50) and np.array_equal(M, M.T)


def test_genmat_errors(tmp_path):
    assert main(["genmat", "--kind", "bogus", "--out", str(tmp_path / "x")]) == 2
    assert main(["genmat", "--kind", "polyfast"]) == 2
    assert main(["genmat", "--kind", "polyfast", "--out", str(tmp_path / "no" / "such" / "x")]) == 1


# approx


@pytest.fixture
def rank2(tmp_path):
    rng = make_rng(0)
    U, _ = qr_thin(rng.standard_normal((30, 2)))
    V, _ = qr_thin(rng.standard_normal((20, 2)))
    path = tmp_path / "r2.mtx"
    write_matrix(path, (U * [3.0, 1.0]) @ V.T)
    return path


def test_approx_rank2_and_byte_identity(tmp_path, rank2):
    args = ["approx", "--method", "subspace", "--in", str(rank2), "--p", "2", "--l", "2", "--v", "3",
            "--seed", "4"]
    assert main(args + ["--out", str(tmp_path / "o1")]) == 0
    assert main(args + ["--out", str(tmp_path / "o2")]) == 0
    meta = run_json(tmp_path / "o1")
    assert meta["views"] == 3 and meta["errors"]["absolute"]
    assert meta["errors"]["relFrob"] < 1e-8 and meta["errors"]["residualFrobOverNorm"] < 1e-8
    for name in ("U.mtx", "lambda.mtx", "V.mtx"):
        assert (tmp_path / "o1" / name).read_bytes() == (tmp_path / "o2" / name).read_bytes()
    assert read_matrix(tmp_path / "o1" / "lambda.mtx").ravel() == pytest.approx([3.0, 1.0], rel=1e-10)


def test_approx_minvar_lc_matches_offline_scan(tmp_path):
    out = tmp_path / "mv"
    assert main(["approx", "--method", "oneview", "--kind", "ExpSlow", "--n", "300", "--p", "5",
                 "--plan", "minvar", "--T", "30", "--seed", "11", "--out", str(out)]) == 0
    meta = run_json(out)
    tm = gen_test_matrix("ExpSlow", n=300)
    plan = plan_balanced(5, 30, 0.0)
    lc, info = min_variance_lc(sketch(tm.op, plan, make_rng(11)), plan)
    assert meta["plan"]["lc"] == lc == int(np.argmin(info["variances"]))
    assert meta["views"] == 2


def test_approx_other_methods(tmp_path):
    base = ["approx", "--kind", "PolyFast", "--n", "200", "--p", "5", "--seed", "1"]
    assert main(base + ["--method", "nystrom", "--l", "5", "--v", "4", "--out", str(tmp_path / "n")]) == 0
    assert run_json(tmp_path / "n")["views"] == 4 and not (tmp_path / "n" / "U.mtx").exists()
    assert main(base + ["--method", "oneview-extended", "--plan", "extended", "--T", "24",
                        "--out", str(tmp_path / "e")]) == 0
    assert run_json(tmp_path / "e")["plan"]["s"] > 0
    assert main(base + ["--method", "rowstream", "--l", "3", "--out", str(tmp_path / "r")]) == 0
    assert run_json(tmp_path / "r")["passes"] == 1


@pytest.mark.parametrize("extra", [
    ["--method", "subspace", "--l", "2"],
    ["--method", "subspace", "--v", "3", "--lc", "1"],
    ["--method", "oneview-tropp", "--plan", "flat", "--T", "24", "--l1", "3"],
    ["--method", "oneview-tropp", "--plan", "balanced", "--T", "24"],
    ["--method", "oneview-woolfe", "--plan", "minvar", "--T", "24"],
    ["--method", "oneview-tropp", "--l1", "3", "--l2", "5", "--variant", "bwz"],
    ["--method", "krylov", "--v", "1"],
])
def test_approx_flag_conflicts_exit_2(tmp_path, extra):
    args = ["approx", "--kind", "PolyFast", "--n", "100", "--p", "5", "--out", str(tmp_path / "x")]
    assert main(args + extra) == 2


# experiment


def test_experiment_figure2_smoke_and_rerun(tmp_path):
    for d in ("a", "b"):
        assert main(["experiment", "--figure", "2", "--trials", "2", "--n", "200",
                     "--out-dir", str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / "figure2.csv").read_bytes()
    assert a == (tmp_path / "b" / "figure2.csv").read_bytes()
    rows = read_rows(tmp_path / "a" / "figure2.csv")
    assert len(rows) == 7 * 5
    assert {(r["matrix"], int(r["v"])) for r in rows} == {
        (m, v) for m in ("LowRankMedNoise", "LowRankHiNoise", "PolySlow", "PolyFast", "DiagSurrogate")
        for v in range(2, 9)}
    assert all(r["meanFrob"] and r["meanSpec"] and r["trials"] == "2" for r in rows)
    assert a.startswith(b"matrix,method,p,l1,l2,lc,v,T,trials,meanFrob,seFrob,meanSpec,seSpec\r\n")


@pytest.mark.slow
def test_experiment_figure3_ordering(tmp_path):
    assert main(["experiment", "--figure", "3", "--trials", "20", "--n", "300",
                 "--out-dir", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "figure3.csv")
    vals = {(r["matrix"], r["method"], r["v"]): float(r["meanSpec"]) for r in rows}
    pairs = [(k[0], k[2]) for k in vals if k[1] == "nystrom"]
    assert pairs
    for m, v in pairs:
        assert vals[m, "nystrom", v] <= vals[m, "pinched", v] + 1e-12


def test_experiment_usage_errors(tmp_path):
    assert main(["experiment", "--figure", "9", "--out-dir", str(tmp_path)]) == 2
    assert main(["experiment", "--name", "nope", "--out-dir", str(tmp_path)]) == 2
    assert main(["experiment", "--figure", "2", "--trials", "0", "--out-dir", str(tmp_path)]) == 2


def test_experiment_lm_table(tmp_path):
    assert main(["experiment", "--name", "lm", "--trials", "2", "--out-dir", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "lm.csv")
    assert len(rows) == 2 * 8
    for r in rows:
        eps = 1e-12 * max(float(r["norm2"]), float(r["norm3"]))
        assert float(r["err2"]) <= float(r["bound2"]) * (1 + 1e-12) + eps
        assert float(r["err3"]) <= float(r["bound3"]) * (1 + 1e-12) + eps
