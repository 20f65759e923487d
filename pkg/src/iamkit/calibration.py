"""Calibration file loading and validation.

The calibration is a TOML file with sections [params], [initial],
[paths], [tipping], and [lrr].  [params] holds primitive scalars (the
carbon and temperature transfer matrices are built from them), [paths]
holds columnar per-period arrays.  All numbers are treated as data:
invariants are enforced at load and violations are reported with the
offending key and its line in the file.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tomli

from .core import DomainError, ExogenousPaths, ModelParams, StateVector

__all__ = ["Calibration", "CalibrationError", "load_calibration", "TippingSpec", "LrrParams"]


class CalibrationError(ValueError):
    """A calibration file failed to parse or violates an invariant."""


@dataclass(frozen=True)
class TippingSpec:
    """Hazard, threshold, duration, and the absorbing damage lottery."""

    lambda_tip: float
    T_bar: float
    Gamma_bar: float
    D_inf_bar: float
    q: float
    levels: tuple
    weights: tuple


@dataclass(frozen=True)
class LrrParams:
    """Long-run productivity risk process parameters and grid sizes."""

    varrho: float
    r: float
    varsigma: float
    n_zeta: int = 31
    n_chi: int = 7
    truncation_k: float = 3.0
    log_zeta_span: float | None = None

    def __post_init__(self):
        if abs(self.r) >= 1:
            raise DomainError(f"lrr persistence |r| must be < 1, got {self.r}")
        if self.varrho < 0 or self.varsigma < 0:
            raise DomainError("lrr volatilities must be nonnegative")
        if self.n_zeta < 1 or self.n_chi < 1:
            raise DomainError("lrr grid sizes must be >= 1")


@dataclass(frozen=True)
class Calibration:
    """Validated model inputs plus the raw dictionary they came from."""

    params: ModelParams
    paths: ExogenousPaths
    init_state: StateVector
    tipping: TippingSpec
    lrr: LrrParams
    raw: dict

    def with_overrides(self, overrides: dict) -> "Calibration":
        """Rebuild with primitive-level overrides, e.g. {"params.t2xco2": 4.0}.

        Keys are dotted section.key names; path overrides replace whole
        arrays.  Derived quantities (Phi_M, Phi_T, xi1) are recomputed.
        """
        raw = copy.deepcopy(self.raw)
        for key, value in overrides.items():
            section, _, name = key.partition(".")
            if not name or section not in raw:
                raise CalibrationError(f"unknown override section in {key!r}")
            raw[section][name] = value
        return _build(raw, source_text=None, path="<overrides>")


def _key_line(text: str | None, key: str) -> str:
    if text is None:
        return ""
    for i, line in enumerate(text.splitlines(), start=1):
        if line.strip().startswith(key):
            return f" (line {i})"
    return ""


def _require(section: dict, section_name: str, key: str, text, path):
    if key not in section:
        raise CalibrationError(f"{path}: missing [{section_name}].{key}")
    return section[key]


def _build(raw: dict, source_text: str | None, path: str) -> Calibration:
    def fail(section, key, msg):
        where = _key_line(source_text, key)
        raise CalibrationError(f"{path}: [{section}].{key}{where}: {msg}")

    p = raw.get("params")
    if p is None:
        raise CalibrationError(f"{path}: missing [params] section")

    def get(section_name, key):
        return _require(raw[section_name], section_name, key, source_text, path)

    # Transfer matrices from primitive transfer rates and equilibrium stocks.
    b12, b23 = get("params", "b12"), get("params", "b23")
    mateq, mueq, mleq = get("params", "mateq"), get("params", "mueq"), get("params", "mleq")
    b21 = b12 * mateq / mueq
    b32 = b23 * mueq / mleq
    Phi_M = np.array(
        [
            [1.0 - b12, b21, 0.0],
            [b12, 1.0 - b21 - b23, b32],
            [0.0, b23, 1.0 - b32],
        ]
    )
    if "Phi_M" in p:  # explicit matrix wins over the derived one
        Phi_M = np.asarray(p["Phi_M"], dtype=float)
    eta = get("params", "eta")
    t2xco2 = get("params", "t2xco2")
    c1, c3, c4 = get("params", "c1"), get("params", "c3"), get("params", "c4")
    lam = eta / t2xco2
    Phi_T = np.array([[1.0 - c1 * lam - c1 * c3, c1 * c3], [c4, 1.0 - c4]])

    tip = raw.get("tipping", {})
    lrr_raw = raw.get("lrr", {})

    try:
        params = ModelParams(
            beta=get("params", "beta"),
            psi=get("params", "psi"),
            gamma=p.get("gamma", 10.0),
            delta=get("params", "delta"),
            alpha=get("params", "alpha"),
            pi1=get("params", "pi1"),
            pi2=get("params", "pi2"),
            pi_hi=p.get("pi_hi", 0.0),
            exp_hi=p.get("exp_hi", 6.754),
            weitzman=bool(p.get("weitzman", False)),
            theta2=get("params", "theta2"),
            eta=eta,
            M_AT_star=get("params", "M_AT_star"),
            xi1=c1,
            Phi_M=Phi_M,
            Phi_T=Phi_T,
            lambda_tip=tip.get("lambda_tip", 0.0),
            T_bar=tip.get("T_bar", 1.0),
            Gamma_bar=tip.get("Gamma_bar", 50.0),
            D_inf_bar=tip.get("D_inf_bar", 0.1),
            q=tip.get("q", 0.125),
            mu_max=p.get("mu_max", 1.0),
            step_years=p.get("step_years", 5.0),
            log_utility=bool(p.get("log_utility", False)),
            scc_unit_factor=p.get("scc_unit_factor", 1000.0),
        )
    except DomainError as e:
        raise CalibrationError(f"{path}: [params]: {e}") from e

    paths_raw = raw.get("paths")
    if paths_raw is None:
        raise CalibrationError(f"{path}: missing [paths] section")
    series = {}
    for name in ("A", "L", "sigma", "theta1", "E_land", "F_ex"):
        if name not in paths_raw:
            raise CalibrationError(f"{path}: missing [paths].{name}{_key_line(source_text, name)}")
        series[name] = np.asarray(paths_raw[name], dtype=float)
    try:
        paths = ExogenousPaths(**series)
    except DomainError as e:
        raise CalibrationError(f"{path}: [paths]: {e}") from e

    init_raw = raw.get("initial")
    if init_raw is None:
        raise CalibrationError(f"{path}: missing [initial] section")
    try:
        init_state = StateVector(
            K=_require(init_raw, "initial", "K0", source_text, path),
            M=np.asarray(_require(init_raw, "initial", "M0", source_text, path), dtype=float),
            T=np.asarray(_require(init_raw, "initial", "T0", source_text, path), dtype=float),
        )
    except DomainError as e:
        raise CalibrationError(f"{path}: [initial]: {e}") from e

    levels = tuple(tip.get("levels", (params.D_inf_bar,)))
    weights = tuple(tip.get("weights", (1.0,)))
    if len(levels) != len(weights):
        fail("tipping", "weights", "levels and weights must have equal length")
    wsum = math.fsum(weights)
    if abs(wsum - 1.0) > 1e-10:
        fail("tipping", "weights", f"weights sum to {wsum}, expected 1")
    mean = math.fsum(w * l for w, l in zip(weights, levels))
    var = math.fsum(w * (l - mean) ** 2 for w, l in zip(weights, levels))
    if abs(mean - params.D_inf_bar) > 1e-10:
        fail("tipping", "levels", f"level mean {mean} != D_inf_bar {params.D_inf_bar}")
    if abs(var - params.q * params.D_inf_bar**2) > 1e-10:
        fail("tipping", "levels", f"level variance {var} != q*D_inf_bar^2 {params.q * params.D_inf_bar ** 2}")
    tipping = TippingSpec(
        lambda_tip=params.lambda_tip,
        T_bar=params.T_bar,
        Gamma_bar=params.Gamma_bar,
        D_inf_bar=params.D_inf_bar,
        q=params.q,
        levels=levels,
        weights=weights,
    )

    try:
        lrr = LrrParams(
            varrho=lrr_raw.get("varrho", 0.0),
            r=lrr_raw.get("r", 0.0),
            varsigma=lrr_raw.get("varsigma", 0.0),
            n_zeta=int(lrr_raw.get("n_zeta", 31)),
            n_chi=int(lrr_raw.get("n_chi", 7)),
            truncation_k=lrr_raw.get("truncation_k", 3.0),
            log_zeta_span=lrr_raw.get("log_zeta_span"),
        )
    except DomainError as e:
        raise CalibrationError(f"{path}: [lrr]: {e}") from e

    return Calibration(
        params=params, paths=paths, init_state=init_state, tipping=tipping, lrr=lrr, raw=raw
    )


def load_calibration(path) -> Calibration:
    """Load and validate a calibration file.

    Raises CalibrationError with the offending key (and its line where
    possible) on any parse failure or invariant violation.
    """
    path = Path(path)
    text = path.read_text()
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        raise CalibrationError(f"{path}: parse error: {e}") from e
    return _build(raw, source_text=text, path=str(path))
