import json

import numpy as np
import pytest

from markov_abstraction import cli, export
from markov_abstraction.abstraction import build_chain_averaged
from markov_abstraction.geometry import Box, partition_uniform
from markov_abstraction.kernels import linear_gaussian_1d

BASE = {
    "model": {"family": "linear_gaussian_1d", "a": 1.2, "b": 0.0, "sigma": 0.1},
    "init": {"lower": [0.0], "upper": [1.0]},
    "horizon": 5,
    "truncation": {"alpha": 2.4},
    "partition": {"delta": 0.05},
    "task": "density",
    "output_dir": "out",
}


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def _rows(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    head = lines[0].split(",")
    return [dict(zip(head, l.split(","))) for l in lines[1:]]


def test_density_run_outputs(tmp_path, capsys):
    assert cli.main(["run", str(_write(tmp_path, BASE))]) == 0
    out = tmp_path / "out"
    meta = export.read_header(out / "density.csv")
    assert meta["certified"] is True
    for key in ("lambda_f", "lambda_b", "m_f", "m_b", "delta", "alpha", "N"):
        assert key in meta["constants"]
    assert len(meta["config_sha256"]) == 64
    rows = _rows(out / "density.csv")
    last = [r for r in rows if r["t"] == "5"]
    assert len(last) == 1000
    err = max(abs(float(r["psi"]) - float(r["pi_analytic"])) for r in last)
    assert err <= float(last[0]["bound"])
    budget = _rows(out / "budget.csv")
    assert [r["t"] for r in budget] == [str(t) for t in range(6)]
    coef = _rows(out / "coefficients.csv")
    assert set(coef[0]) == {"cell", "basis", "t", "value"}


def test_deterministic_outputs(tmp_path):
    cfg = dict(BASE, output_dir="o1")
    cli.main(["run", str(_write(tmp_path, cfg, "a.json"))])
    first = (tmp_path / "o1" / "density.csv").read_text()
    cli.main(["run", str(_write(tmp_path, cfg, "a.json"))])
    assert (tmp_path / "o1" / "density.csv").read_text() == first


@pytest.mark.parametrize("scheme", [{"kind": "polynomial", "h": 2}, {"kind": "constant"},
                                    {"kind": "chain", "relaxed": True}])
def test_density_schemes(tmp_path, scheme):
    cfg = dict(BASE, scheme=scheme, partition={"delta": 0.1})
    assert cli.main(["run", str(_write(tmp_path, cfg))]) == 0
    rows = _rows(tmp_path / "out" / "budget.csv")
    assert all(r["certified"] == "true" for r in rows)


def test_compare_names_backward(tmp_path, capsys):
    cfg = dict(BASE, model=dict(BASE["model"], a=0.8), horizon=10, task="compare", formula_only=True,
               partition={"delta": 7e-5}, safe_set={"lower": [0.0], "upper": [1.0]})
    assert cli.main(["run", str(_write(tmp_path, cfg))]) == 0
    assert "smaller bound: backward" in capsys.readouterr().out
    meta = export.read_header(tmp_path / "out" / "invariance.csv")
    assert meta["constants"]["winner"] == "backward"


@pytest.mark.parametrize("task", ["invariance-forward", "invariance-backward"])
def test_invariance_tasks(tmp_path, task):
    cfg = dict(BASE, horizon=3, task=task, partition={"delta": 0.05}, safe_set={"lower": [0.0], "upper": [1.0]})
    assert cli.main(["run", str(_write(tmp_path, cfg))]) == 0
    row = _rows(tmp_path / "out" / "invariance.csv")[0]
    assert 0 <= float(row["estimate"]) <= 1


def test_empty_model_is_config_error(tmp_path, capsys):
    cfg = dict(BASE, model={})
    assert cli.main(["run", str(_write(tmp_path, cfg))]) == 1
    assert "model" in capsys.readouterr().err
    assert cli.main(["validate", str(_write(tmp_path, cfg))]) == 1


def test_unknown_key_rejected(tmp_path):
    assert cli.main(["validate", str(_write(tmp_path, dict(BASE, colour="red")))]) == 1
    assert cli.main(["validate", str(_write(tmp_path, BASE))]) == 0


def test_unreadable_config(tmp_path):
    bad = tmp_path / "x.json"
    bad.write_text("{not json")
    assert cli.main(["validate", str(bad)]) == 1


def bad_density(x, s):
    return 5.0 * np.ones(np.broadcast_shapes(np.asarray(x).shape[:-1], np.asarray(s).shape[:-1]))


def test_numerical_failure_exit_code(tmp_path, capsys):
    cfg = {
        "model": {"family": "custom", "density": "test_cli:bad_density", "dim": 1, "lambda_f": 0.0, "m_f": 5.0},
        "init": {"lower": [0.0], "upper": [1.0]},
        "horizon": 2,
        "truncation": {"domain": {"lower": [0.0], "upper": [1.0]}},
        "partition": {"cells_per_axis": [3]},
        "task": "density",
        "output_dir": "out",
    }
    assert cli.main(["run", str(_write(tmp_path, cfg))]) == 2
    assert "row 0" in capsys.readouterr().err


def test_linear_system_config(tmp_path):
    cfg = {
        "model": {"family": "linear_system", "A": [[0.9, 0.0], [0.0, 0.8]], "sigma": [0.2, 0.2]},
        "init": {"lower": [0.0, 0.0], "upper": [1.0, 1.0]},
        "horizon": 2,
        "truncation": {"alpha": 3.0},
        "partition": {"cells_per_axis": [6, 6]},
        "scheme": {"kind": "bilinear"},
        "task": "density",
        "output_dir": "out",
    }
    assert cli.main(["run", str(_write(tmp_path, cfg))]) == 0
    assert (tmp_path / "out" / "coefficients.csv").exists()


def test_export_task_and_verb(tmp_path, capsys):
    cfg = dict(BASE, task="export", partition={"cells_per_axis": [4]}, safe_set={"lower": [0.0], "upper": [1.0]},
               export={"format": "tra"})
    assert cli.main(["run", str(_write(tmp_path, cfg))]) == 0
    out = tmp_path / "out"
    P = export.read_tra(out / "chain.tra")
    np.testing.assert_array_equal(P, export.read_matrix_csv(out / "chain.csv"))
    assert cli.main(["export", str(out / "chain.csv"), "--format", "tra", "--out", str(tmp_path / "again")]) == 0
    assert (tmp_path / "again.tra").read_text() == (out / "chain.tra").read_text()
    assert "sink" in (out / "chain.lab").read_text()


def test_uniform_chain_line_count(tmp_path):
    # Two cells leaking mass to the sink: 2 x 3 nonzero entries plus the sink self-loop.
    P = np.array([[0.4, 0.4, 0.2], [0.3, 0.3, 0.4], [0.0, 0.0, 1.0]])
    tra, lab = export.export_chain(P, tmp_path / "leak")
    lines = tra.read_text().splitlines()
    assert lines[:2] == ["STATES 3", "TRANSITIONS 7"]
    assert len(lines) - 2 == 7
    # No leakage (uniform kernel on the domain): the zero sink column is suppressed.
    Q = np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]])
    tra, _ = export.export_chain(Q, tmp_path / "closed")
    body = tra.read_text().splitlines()[2:]
    assert body == ["1 1 0.5", "1 2 0.5", "2 1 0.5", "2 2 0.5", "3 3 1.0"]


def test_identity_chain_export(tmp_path):
    tra, lab = export.export_chain(np.eye(5), tmp_path / "id")
    body = tra.read_text().splitlines()[2:]
    assert body == [f"{i} {i} 1.0" for i in range(1, 6)]
    assert lab.read_text().splitlines()[-1] == "5 sink"


def test_export_threshold_and_row_sums(tmp_path):
    k, _ = linear_gaussian_1d(0.8, 0.0, 0.1, 2.4, Box([0.0], [1.0]))
    P = build_chain_averaged(k, partition_uniform(Box([0.0], [1.0]), cells_per_axis=[8])).matrix
    tra, _ = export.export_chain(P, tmp_path / "c")
    R = export.read_tra(tra)
    np.testing.assert_allclose(R.sum(axis=1), 1.0, atol=1e-6)
    tra, _ = export.export_chain(P, tmp_path / "t", threshold=1e-3)
    assert all(float(l.split()[2]) >= 1e-3 for l in tra.read_text().splitlines()[2:])


def test_csv_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    P = rng.random((7, 7)) / 7
    path = export.write_matrix_csv(tmp_path / "m.csv", P, {"note": "x"})
    assert np.array_equal(export.read_matrix_csv(path), P)
