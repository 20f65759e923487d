"""Delimited output: exact round-trips, fixed layouts, reproducible bytes."""

import csv

import numpy as np
import pytest

from iamkit.det_solver import Horizon, solve_deterministic
from iamkit.report import (
    ENSEMBLE_VARIABLES,
    TRAJECTORY_COLUMNS,
    _fmt,
    render_quantile_figures,
    render_trajectory_figures,
    write_ensemble_csv,
    write_manifest,
    write_quantile_csv,
    write_regret_csv,
    write_trajectory_csv,
)


@pytest.fixture(scope="module")
def det5(cal):
    return solve_deterministic(cal.params, cal.paths, Horizon(n_periods=5), cal.init_state)


@pytest.fixture(scope="module")
def fake_arrays(rng):
    return {name: rng.uniform(1.0, 2.0, (4, 5)) for name in ENSEMBLE_VARIABLES}


def test_float_format_round_trips(rng):
    # [TRIVIAL: invariant] 17 significant digits reproduce float64 bits
    xs = np.concatenate([rng.normal(0, 1e4, 200), [0.0, 1e-308, np.pi]])
    for x in xs:
        assert float(_fmt(x)) == x


def test_trajectory_csv_layout_and_round_trip(tmp_path, cal, det5):
    p = write_trajectory_csv(tmp_path / "traj.csv", cal.params, cal.paths, det5)
    with open(p, newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == TRAJECTORY_COLUMNS
    assert len(rows) == 1 + 5
    assert rows[1][0] == "0" and rows[1][1] == "2015"
    assert rows[2][1] == "2020"
    # state columns round-trip exactly
    assert float(rows[1][2]) == det5.states[0].K
    assert float(rows[3][6]) == det5.states[2].T[0]
    assert float(rows[1][11]) == det5.scc_path[0]


def test_trajectory_csv_byte_identical_reruns(tmp_path, cal, det5):
    a = write_trajectory_csv(tmp_path / "a.csv", cal.params, cal.paths, det5)
    b = write_trajectory_csv(tmp_path / "b.csv", cal.params, cal.paths, det5)
    assert a.read_bytes() == b.read_bytes()


def test_ensemble_csv_long_format(tmp_path, fake_arrays):
    p = write_ensemble_csv(tmp_path / "ens.csv", fake_arrays)
    with open(p, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["path", "t", "variable", "value"]
    assert len(rows) == 1 + len(ENSEMBLE_VARIABLES) * 4 * 5
    body = rows[1:]
    # variables appear in the canonical order, paths and periods inside
    names = [r[2] for r in body[:: 4 * 5]]
    assert names == list(ENSEMBLE_VARIABLES)
    r = body[7]  # variable K, path 1, t 2
    assert r[:3] == ["1", "2", "K"]
    assert float(r[3]) == fake_arrays["K"][1, 2]


def test_quantile_csv_values(tmp_path, fake_arrays):
    p = write_quantile_csv(tmp_path / "q.csv", fake_arrays)
    with open(p, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "variable", "q05", "q25", "q50", "q75", "q95"]
    r = rows[1]
    assert r[:2] == ["0", ENSEMBLE_VARIABLES[0]]
    expect = np.quantile(fake_arrays[ENSEMBLE_VARIABLES[0]][:, 0], [0.05, 0.25, 0.5, 0.75, 0.95])
    assert np.array_equal([float(v) for v in r[2:]], expect)
    vals = [float(v) for v in r[2:]]
    assert vals == sorted(vals)


def test_regret_csv(tmp_path):
    m = np.array([[0.0, 2.5], [3.5, 0.0]])
    p = write_regret_csv(tmp_path / "r.csv", ["lo", "hi"], m)
    with open(p, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["scenario", "candidate_lo", "candidate_hi"]
    assert rows[1][0] == "lo" and float(rows[2][1]) == 3.5


def test_manifest_contents(tmp_path):
    import json

    from iamkit import __version__

    p = write_manifest(tmp_path, "solve-det", {"horizon": 5}, 1.234,
                       checks={"converged": True})
    doc = json.loads(p.read_text())
    assert doc["mode"] == "solve-det"
    assert doc["config"] == {"horizon": 5}
    assert doc["versions"]["iamkit"] == __version__
    assert doc["wall_time_seconds"] == 1.234
    assert doc["checks"] == {"converged": True}


def test_figures_render_to_files(tmp_path, cal, det5, fake_arrays):
    figs = render_trajectory_figures(tmp_path, cal.params, cal.paths, det5)
    figs += render_quantile_figures(tmp_path, fake_arrays)
    for f in figs:
        assert f.exists() and f.stat().st_size > 0
        assert f.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
