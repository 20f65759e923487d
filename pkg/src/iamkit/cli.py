"""Batch command-line front end.

One run per invocation: load a calibration, dispatch to a solver or
simulator, and write CSV artifacts plus a manifest that records enough
to re-run the job exactly.  Exit codes: 0 success, 1 numerical failure,
2 usage or configuration error.

Defaults can be collected in a TOML config file (``--config``); flags
given on the command line win over the file.  The environment variable
IAM_THREADS caps BLAS worker threads.
"""

from __future__ import annotations

import argparse
import csv
import os
import pickle
import sys
import time
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - Python < 3.11
    import tomli as tomllib

from .calibration import Calibration, CalibrationError, load_calibration
from .core import DomainError, FeasibilityError
from .det_solver import Horizon, scc_deterministic, solve_deterministic
from .optimize import SolverError
from .robust import (
    Scenario,
    ScenarioSet,
    expected_welfare_decision,
    max_min,
    min_max_regret,
    monte_carlo,
)
from .simulate import PathEnsemble, sceq_path, simulate_policy
from .stochastic import ConfigurationError, build_tipping_chain, discretize_lrr
from .vfi import DiscreteStates, scc_stochastic, solve_vfi
from . import report

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2

_MODES = (
    "solve-det", "solve-vfi", "simulate", "sceq",
    "regret", "maxmin", "montecarlo", "expected",
    "scc", "summarize",
)

_DEFAULTS = {
    "horizon": 100,
    "seed": 0,
    "out": "iam_out",
    "degree": 4,
    "paths": 1000,
    "tol": None,  # per-mode default chosen at dispatch
    "multistart": 3,
}


def _cap_threads():
    n = os.environ.get("IAM_THREADS")
    if not n:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, n)
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=int(n))
    except ImportError:
        pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="iam",
        description="Climate-economy integrated assessment solver kit.",
    )
    p.add_argument("mode", choices=_MODES, help="what to run")
    p.add_argument("--calib", help="calibration TOML file")
    p.add_argument("--scenarios", help="scenario-set TOML file (robust modes)")
    p.add_argument("--config", help="TOML file of flag defaults; flags win")
    p.add_argument("--horizon", type=int, help="decision periods")
    p.add_argument("--seed", type=int, help="RNG seed (stochastic modes)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--degree", type=int, help="Chebyshev total degree (VFI)")
    p.add_argument("--paths", type=int, help="simulated paths / Monte Carlo draws")
    p.add_argument("--tol", type=float, help="solver tolerance")
    p.add_argument("--multistart", type=int, help="VFI optimizer starts per node")
    p.add_argument("--vfi", help="directory with saved solve-vfi artifacts")
    p.add_argument("--input", help="ensemble CSV to summarize")
    p.add_argument("--no-lrr", action="store_true", help="drop the productivity chain")
    p.add_argument("--no-tipping", action="store_true", help="drop the tipping chain")
    p.add_argument("--verbose", action="store_true")
    return p


def _merge_config(args: argparse.Namespace) -> dict:
    cfg = dict(_DEFAULTS)
    if args.config:
        with open(args.config, "rb") as fh:
            file_cfg = tomllib.load(fh)
        unknown = set(file_cfg) - set(vars(args))
        if unknown:
            raise CalibrationError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key, val in vars(args).items():
        if val is not None and val is not False:
            cfg[key] = val
    return cfg


def load_scenario_set(path, base: Calibration):
    """Parse a scenario-set file: scenarios, optional weights and beliefs."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    scenarios = [
        Scenario(label=sc["label"], overrides=sc.get("overrides", {}))
        for sc in raw.get("scenario", [])
    ]
    weights = raw.get("weights")
    ss = ScenarioSet(base=base, scenarios=scenarios, weights=weights) if scenarios else None
    belief = {k: tuple(v) for k, v in raw.get("belief", {}).items()} or None
    return ss, belief


def _discrete_states(cal: Calibration, cfg) -> DiscreteStates:
    lrr = None if cfg.get("no_lrr") else discretize_lrr(cal.lrr)
    tip = None if cfg.get("no_tipping") else build_tipping_chain(cal.params, cal.tipping)
    return DiscreteStates(lrr=lrr, tip=tip)


def _ensemble_from_records(recs, seed) -> PathEnsemble:
    return PathEnsemble(
        states=np.stack([r["states"] for r in recs]),
        disc_index=np.stack([r["disc_index"] for r in recs]),
        s=np.stack([r["s"] for r in recs]),
        mu=np.stack([r["mu"] for r in recs]),
        C=np.stack([r["C"] for r in recs]),
        E=np.stack([r["E"] for r in recs]),
        scc=np.stack([r["scc"] for r in recs]),
        tax=np.stack([r["tax"] for r in recs]),
        seed=seed,
    )


def _write_decision_csv(path, decision, base_year=report.BASE_YEAR, step_years=5.0):
    rows = [
        [t, int(base_year + t * step_years), report._fmt(decision.s_path[t]),
         report._fmt(decision.mu_path[t])]
        for t in range(decision.n_periods)
    ]
    return report._write_rows(path, ("t", "year", "s", "mu"), rows)


def _write_scenario_values_csv(path, result, value_name):
    rows = [
        [lab, report._fmt(v)] for lab, v in zip(result.labels, result.scenario_values)
    ]
    return report._write_rows(path, ("scenario", value_name), rows)


def _run_solve_det(cal, cfg, outdir):
    hor = Horizon(n_periods=cfg["horizon"])
    tol = cfg["tol"] or 1e-6
    traj = solve_deterministic(cal.params, cal.paths, hor, cal.init_state, tol=tol)
    report.write_trajectory_csv(outdir / "trajectory.csv", cal.params, cal.paths, traj)
    report.render_trajectory_figures(outdir, cal.params, cal.paths, traj)
    return {"welfare": traj.welfare, "converged": traj.converged,
            "scc0": float(traj.scc_path[0])}


def _run_scc(cal, cfg, outdir):
    hor = Horizon(n_periods=cfg["horizon"])
    tol = cfg["tol"] or 1e-6
    traj = solve_deterministic(cal.params, cal.paths, hor, cal.init_state, tol=tol)
    emission = scc_deterministic(cal.params, cal.paths, hor, traj, timing="emission")
    stock = scc_deterministic(cal.params, cal.paths, hor, traj, timing="stock")
    rows = [
        [t, int(report.BASE_YEAR + t * cal.params.step_years),
         report._fmt(emission[t]), report._fmt(stock[t]), report._fmt(traj.tax_path[t])]
        for t in range(hor.n_periods)
    ]
    report._write_rows(
        outdir / "scc.csv", ("t", "year", "scc_emission", "scc_stock", "tax"), rows
    )
    return {"scc0": float(emission[0])}


def _run_solve_vfi(cal, cfg, outdir):
    hor = Horizon(n_periods=cfg["horizon"])
    tol = cfg["tol"] or 1e-5
    disc = _discrete_states(cal, cfg)
    vf, pol = solve_vfi(
        cal.params, cal.paths, hor, cal.init_state, disc=disc,
        degree=cfg["degree"], multistart=cfg["multistart"], tol=tol,
        checkpoint_dir=outdir / "checkpoints", verbose=cfg.get("verbose", False),
    )
    with open(outdir / "vfi_artifacts.pkl", "wb") as fh:
        pickle.dump({"vf": vf, "pol": pol, "disc": disc, "horizon": hor}, fh)
    x0 = cal.init_state.continuous()
    return {
        "n_discrete_states": disc.n_states,
        "value_at_init": float(vf.value(0, x0, 0)),
        "scc_at_init": float(scc_stochastic(vf, 0, x0, 0, cal.params.scc_unit_factor)),
        "max_projected_gradient": float(vf.diagnostics["max_projected_gradient"]),
    }


def _load_vfi(cfg, cal, outdir):
    if cfg.get("vfi"):
        with open(Path(cfg["vfi"]) / "vfi_artifacts.pkl", "rb") as fh:
            art = pickle.load(fh)
        return art["vf"], art["pol"], art["disc"], art["horizon"]
    sub = dict(cfg)
    vf_dir = outdir / "vfi"
    vf_dir.mkdir(parents=True, exist_ok=True)
    _run_solve_vfi(cal, sub, vf_dir)
    with open(vf_dir / "vfi_artifacts.pkl", "rb") as fh:
        art = pickle.load(fh)
    return art["vf"], art["pol"], art["disc"], art["horizon"]


def _run_simulate(cal, cfg, outdir):
    vf, pol, disc, hor = _load_vfi(cfg, cal, outdir)
    ens = simulate_policy(
        cal.params, cal.paths, vf, pol, cal.init_state,
        n_paths=cfg["paths"], seed=cfg["seed"],
    )
    report.write_ensemble_csv(outdir / "ensemble.csv", ens)
    report.write_quantile_csv(outdir / "quantiles.csv", ens)
    return {"n_paths": ens.n_paths, "clamp_count": ens.clamp_count,
            "median_scc0": float(np.median(ens.scc[:, 0]))}


def _run_sceq(cal, cfg, outdir):
    hor = Horizon(n_periods=cfg["horizon"])
    tol = cfg["tol"] or 1e-6
    disc = _discrete_states(cal, cfg)
    recs, failed = [], []
    for p in range(cfg["paths"]):
        try:
            recs.append(
                sceq_path(cal.params, cal.paths, hor, cal.init_state,
                          disc=disc, seed=cfg["seed"], path_index=p, tol=tol)
            )
        except SolverError as err:
            failed.append((p, str(err)))
    if failed and len(failed) > 0.01 * cfg["paths"]:
        raise SolverError(f"{len(failed)}/{cfg['paths']} certainty-equivalent paths failed")
    ens = _ensemble_from_records(recs, cfg["seed"])
    report.write_ensemble_csv(outdir / "ensemble.csv", ens)
    report.write_quantile_csv(outdir / "quantiles.csv", ens)
    return {"n_paths": len(recs), "n_failed": len(failed),
            "median_scc0": float(np.median(ens.scc[:, 0]))}


def _run_robust(mode, cal, cfg, outdir):
    if not cfg.get("scenarios"):
        raise CalibrationError(f"{mode} requires --scenarios")
    ss, belief = load_scenario_set(cfg["scenarios"], cal)
    hor = Horizon(n_periods=cfg["horizon"])
    tol = cfg["tol"] or 1e-6
    if mode == "montecarlo":
        if belief is None:
            raise CalibrationError("montecarlo requires a [belief] table in the scenario file")
        rep = monte_carlo(cal, belief, n_draws=cfg["paths"], seed=cfg["seed"],
                          horizon=hor, tol=tol)
        report.write_monte_carlo_csv(outdir / "draws.csv", rep)
        q = rep.quantiles("scc0").ravel()
        report._write_rows(
            outdir / "scc0_quantiles.csv",
            tuple(f"q{int(round(x * 100)):02d}" for x in report.QUANTILES),
            [list(map(report._fmt, q))],
        )
        return {"n_draws": rep.n_draws, "n_failed": rep.n_failed,
                "scc0_median": float(np.median(rep.scc0))}
    if ss is None:
        raise CalibrationError("scenario file lists no scenarios")
    fn = {"maxmin": max_min, "regret": min_max_regret,
          "expected": expected_welfare_decision}[mode]
    result = fn(ss, hor, tol=tol)
    _write_decision_csv(outdir / "decision.csv", result.decision,
                        step_years=cal.params.step_years)
    value_name = "regret" if mode == "regret" else "welfare"
    _write_scenario_values_csv(outdir / "scenario_values.csv", result, value_name)
    if result.candidate_matrix is not None:
        report.write_regret_csv(outdir / "regret_matrix.csv", result.labels,
                                result.candidate_matrix)
    return {"objective": result.objective, "converged": result.converged}


def _run_summarize(cfg, outdir):
    src = cfg.get("input")
    if not src:
        raise CalibrationError("summarize requires --input ensemble.csv")
    arrays = _read_ensemble_csv(src)
    report.write_quantile_csv(outdir / "quantiles.csv", arrays)
    figures = report.render_quantile_figures(outdir, arrays)
    return {"variables": sorted(arrays), "figures": [f.name for f in figures]}


def _read_ensemble_csv(path):
    cells = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"path", "t", "variable", "value"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise CalibrationError(f"{path} is not a long-format ensemble CSV")
        for row in reader:
            cells.setdefault(row["variable"], {})[
                (int(row["path"]), int(row["t"]))
            ] = float(row["value"])
    arrays = {}
    for name, vals in cells.items():
        n_p = max(k[0] for k in vals) + 1
        n_t = max(k[1] for k in vals) + 1
        arr = np.full((n_p, n_t), np.nan)
        for (p, t), v in vals.items():
            arr[p, t] = v
        arrays[name] = arr
    return arrays


def run(argv=None) -> int:
    _cap_threads()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge_config(args)
    except (OSError, CalibrationError, tomllib.TOMLDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE

    outdir = Path(cfg["out"])
    mode = args.mode
    started = time.time()
    try:
        if mode == "summarize":
            checks = _run_summarize(cfg, outdir)
        else:
            if not cfg.get("calib"):
                print("error: --calib is required", file=sys.stderr)
                return EXIT_USAGE
            cal = load_calibration(cfg["calib"])
            if mode == "solve-det":
                checks = _run_solve_det(cal, cfg, outdir)
            elif mode == "scc":
                checks = _run_scc(cal, cfg, outdir)
            elif mode == "solve-vfi":
                checks = _run_solve_vfi(cal, cfg, outdir)
            elif mode == "simulate":
                checks = _run_simulate(cal, cfg, outdir)
            elif mode == "sceq":
                checks = _run_sceq(cal, cfg, outdir)
            else:
                checks = _run_robust(mode, cal, cfg, outdir)
    except (OSError, CalibrationError, ConfigurationError, tomllib.TOMLDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, DomainError, FeasibilityError) as err:
        outdir.mkdir(parents=True, exist_ok=True)
        report.write_manifest(
            outdir, mode, _public_config(cfg), time.time() - started,
            checks={"error": str(err)},
        )
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL

    report.write_manifest(outdir, mode, _public_config(cfg), time.time() - started, checks)
    return EXIT_OK


def _public_config(cfg):
    return {k: v for k, v in sorted(cfg.items()) if not k.startswith("_") and v is not None}


def main():  # console entry point
    sys.exit(run())


if __name__ == "__main__":
    main()
