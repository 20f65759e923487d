"""Output files for batch runs: CSVs, run manifests, and summary figures.

All floats are written with 17 significant digits so every value
round-trips exactly through text; identical inputs therefore produce
byte-identical files.  Figures are rendered with the non-interactive
Agg backend next to the delimited files they summarize.
"""

from __future__ import annotations

import csv
import json
import platform
import sys
from pathlib import Path

import numpy as np

from .core import (
    abatement_cost,
    damage_factor,
    emissions,
    gross_output,
    net_output,
)
from .simulate import QUANTILES, PathEnsemble

__all__ = [
    "TRAJECTORY_COLUMNS",
    "ENSEMBLE_VARIABLES",
    "write_trajectory_csv",
    "write_ensemble_csv",
    "write_quantile_csv",
    "write_regret_csv",
    "write_monte_carlo_csv",
    "write_manifest",
    "render_quantile_figures",
    "render_trajectory_figures",
]

TRAJECTORY_COLUMNS = (
    "t", "year", "K", "M_AT", "M_UO", "M_DO", "T_AT", "T_OC",
    "C", "mu", "E", "SCC", "tax",
)
ENSEMBLE_VARIABLES = (
    "K", "M_AT", "M_UO", "M_DO", "T_AT", "T_OC",
    "s", "mu", "C", "E", "SCC", "tax",
)
BASE_YEAR = 2015


def _fmt(x) -> str:
    """17-significant-digit decimal text; round-trips float64 exactly."""
    return format(float(x), ".17g")


def _write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def trajectory_table(params, paths, traj, base_year: int = BASE_YEAR):
    """Row-per-period table of a deterministic solution.

    Consumption and emissions are recomputed from the stored states and
    decisions, so the table stays consistent with the transition laws.
    """
    n = len(traj.s_path)
    rows = []
    for t in range(n):
        st = traj.states[t]
        s, mu = traj.s_path[t], traj.mu_path[t]
        Y = gross_output(paths.A[t], st.K, paths.L[t], params.alpha)
        omega = damage_factor(st.T[0], 0.0, params)
        Psi = abatement_cost(mu, paths.theta1[t], params.theta2, Y)
        Yhat = net_output(omega, Y, Psi)
        rows.append([
            t, base_year + t * int(params.step_years),
            st.K, st.M[0], st.M[1], st.M[2], st.T[0], st.T[1],
            (1.0 - s) * Yhat, mu,
            emissions(paths.sigma[t], mu, Y, paths.E_land[t]),
            traj.scc_path[t], traj.tax_path[t],
        ])
    return rows


def write_trajectory_csv(path, params, paths, traj, base_year: int = BASE_YEAR):
    rows = trajectory_table(params, paths, traj, base_year)
    return _write_rows(
        path, TRAJECTORY_COLUMNS, [[r[0], r[1], *map(_fmt, r[2:])] for r in rows]
    )


def _ensemble_arrays(ens: PathEnsemble):
    """Map variable name -> (n_paths, length) array."""
    out = {}
    for i, name in enumerate(("K", "M_AT", "M_UO", "M_DO", "T_AT", "T_OC")):
        out[name] = ens.states[:, :, i]
    for name in ("s", "mu", "C", "E"):
        out[name] = getattr(ens, name)
    out["SCC"] = ens.scc
    out["tax"] = ens.tax
    return out


def write_ensemble_csv(path, ens):
    """Long-format dump: one row per (path, period, variable)."""
    arrays = _ensemble_arrays(ens) if isinstance(ens, PathEnsemble) else ens
    rows = []
    for name in ENSEMBLE_VARIABLES:
        if name not in arrays:
            continue
        arr = arrays[name]
        for p in range(arr.shape[0]):
            for t in range(arr.shape[1]):
                rows.append([p, t, name, _fmt(arr[p, t])])
    return _write_rows(path, ("path", "t", "variable", "value"), rows)


def write_quantile_csv(path, ens, qs=QUANTILES):
    """Per-period quantiles of every recorded variable."""
    arrays = _ensemble_arrays(ens) if isinstance(ens, PathEnsemble) else ens
    header = ("t", "variable") + tuple(f"q{int(round(q * 100)):02d}" for q in qs)
    rows = []
    for name in ENSEMBLE_VARIABLES:
        if name not in arrays:
            continue
        table = np.quantile(arrays[name], qs, axis=0)
        for t in range(table.shape[1]):
            rows.append([t, name, *map(_fmt, table[:, t])])
    return _write_rows(path, header, rows)


def write_regret_csv(path, labels, matrix):
    """Scenario-by-candidate regret matrix."""
    matrix = np.asarray(matrix, dtype=float)
    header = ("scenario",) + tuple(f"candidate_{lab}" for lab in labels)
    rows = [[lab, *map(_fmt, matrix[i])] for i, lab in enumerate(labels)]
    return _write_rows(path, header, rows)


def write_monte_carlo_csv(path, report):
    """One row per successful draw: sampled parameters and key outputs."""
    names = sorted(report.draws)
    header = ("draw", *names, "scc0", "welfare", "mu0", "T_AT_final")
    rows = []
    for k in range(report.n_draws):
        rows.append([
            k, *(_fmt(report.draws[nm][k]) for nm in names),
            _fmt(report.scc0[k]), _fmt(report.welfare[k]),
            _fmt(report.mu[k, 0]), _fmt(report.T_AT[k, -1]),
        ])
    return _write_rows(path, header, rows)


def write_manifest(outdir, mode: str, config: dict, wall_time: float, checks=None):
    """Record enough next to the outputs to re-run the job exactly."""
    from . import __version__

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "mode": mode,
        "config": config,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "iamkit": __version__,
        },
        "wall_time_seconds": round(wall_time, 3),
        "checks": checks or {},
        "argv": sys.argv[1:],
    }
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _axes_grid(n_panels):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n_cols = 2
    n_rows = (n_panels + n_cols - 1) // n_cols
    fig, axes = plt.subplots(n_rows, n_cols, figsize=(5.0 * n_cols, 3.2 * n_rows))
    return fig, np.atleast_1d(axes).ravel()


def render_quantile_figures(
    outdir,
    ens,
    variables=("T_AT", "SCC", "mu", "C"),
    base_year: int = BASE_YEAR,
    step_years: float = 5.0,
    stem: str = "ensemble",
):
    """Fan charts of per-period quantile bands, one panel per variable.

    ``ens`` is a PathEnsemble or a mapping of variable name to a
    (n_paths, n_periods) array.
    """
    arrays = _ensemble_arrays(ens) if isinstance(ens, PathEnsemble) else ens
    variables = [v for v in variables if v in arrays]
    fig, axes = _axes_grid(len(variables))
    for ax, name in zip(axes, variables):
        arr = arrays[name]
        years = base_year + step_years * np.arange(arr.shape[1])
        q = np.quantile(arr, QUANTILES, axis=0)
        ax.fill_between(years, q[0], q[-1], alpha=0.2, label="q05-q95")
        ax.fill_between(years, q[1], q[-2], alpha=0.35, label="q25-q75")
        ax.plot(years, q[2], lw=1.5, label="median")
        ax.set_title(name)
        ax.set_xlabel("year")
    for ax in axes[len(variables):]:
        ax.set_visible(False)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / f"{stem}_quantiles.png"
    fig.savefig(path, dpi=120)
    _close(fig)
    return [path]


def render_trajectory_figures(
    outdir, params, paths, traj, base_year: int = BASE_YEAR, stem: str = "trajectory"
):
    """Line plots of the deterministic solution paths."""
    rows = np.array(
        [r[2:] for r in trajectory_table(params, paths, traj, base_year)], dtype=float
    )
    years = base_year + params.step_years * np.arange(rows.shape[0])
    panels = [("T_AT", rows[:, 4]), ("SCC", rows[:, 9]), ("mu", rows[:, 7]), ("C", rows[:, 6])]
    fig, axes = _axes_grid(len(panels))
    for ax, (name, series) in zip(axes, panels):
        ax.plot(years, series, lw=1.5)
        ax.set_title(name)
        ax.set_xlabel("year")
    fig.tight_layout()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / f"{stem}.png"
    fig.savefig(path, dpi=120)
    _close(fig)
    return [path]


def _close(fig):
    import matplotlib.pyplot as plt

    plt.close(fig)
