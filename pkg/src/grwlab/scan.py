"""Parameter-plane scanning, rate bounds, and exclusion-curve overlays.

Every cell of the (lam, r_c) plane gets the collapse-to-quantum ratio at a
reference time and a phase label: below the lower threshold the cell is
strongly quantum, above the upper threshold strongly classical, quasi in
between.  The ratio-equals-one locus is the coexistence curve
lam = 3 r_c^2 / (2 dq0^2 t), a slope-2 line in log-log coordinates.
External experimental exclusion curves are ingested from two-column CSV
files and merged by pointwise minimum into the most restrictive envelope.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .analytic import collapse_quantum_ratio, coexistence_rate
from .core import (NUCLEON_MASS_SI, CollapseParams, ConfigError,
                   WavepacketParams)

PHASE_QUANTUM = "strongly_quantum"
PHASE_QUASI = "quasi"
PHASE_CLASSICAL = "strongly_classical"

DEFAULT_THRESHOLDS = (1e-2, 1e2)
DEFAULT_SCAN_TIME = 1e17          # s, age-of-the-universe reference
DEFAULT_R_C_RANGE = (1e-8, 10.0 ** -4.5)
DEFAULT_LAMBDA_RANGE = (1e-16, 1e-2)

SCAN_CSV_COLUMNS = ("lambda", "r_c", "cqr", "phase")

CONVENTIONS = ("plain", "mass_proportional")


def classify_phase(cqr: float, low: float = DEFAULT_THRESHOLDS[0],
                   high: float = DEFAULT_THRESHOLDS[1]) -> str:
    if not low < high:
        raise ValueError("thresholds must satisfy low < high")
    if cqr < low:
        return PHASE_QUANTUM
    if cqr > high:
        return PHASE_CLASSICAL
    return PHASE_QUASI


@dataclass(frozen=True)
class ScanPoint:
    """One (lam, r_c) cell with its ratio and phase label."""

    lam: float
    r_c: float
    cqr: float
    phase: str


@dataclass(frozen=True)
class ScanResult:
    """Full scan grid plus the coexistence polyline and settings echo."""

    lambdas: np.ndarray           # scan axis, ascending
    r_cs: np.ndarray              # scan axis, ascending
    cqr: np.ndarray               # shape (len(lambdas), len(r_cs))
    phases: np.ndarray            # same shape, strings
    coexistence_r_c: np.ndarray
    coexistence_lambda: np.ndarray
    t: float
    dq0_sq: float
    thresholds: tuple[float, float]

    def points(self) -> list[ScanPoint]:
        out = []
        for i, lam in enumerate(self.lambdas):
            for j, rc in enumerate(self.r_cs):
                out.append(ScanPoint(float(lam), float(rc),
                                     float(self.cqr[i, j]),
                                     str(self.phases[i, j])))
        return out


def _axis(values, name: str) -> np.ndarray:
    """Accept (lo, hi, n) for a log-spaced axis or an explicit array.

    Explicit arrays may include a 0.0 edge (useful for the no-collapse
    limit); log-spaced ranges must be strictly positive.
    """
    if isinstance(values, tuple) and len(values) == 3:
        lo, hi, n = values
        if not (lo > 0 and hi > lo):
            raise ValueError(f"{name}: log-spaced range needs 0 < lo < hi")
        if n < 2:
            raise ValueError(f"{name}: resolution must be >= 2")
        return np.logspace(math.log10(lo), math.log10(hi), int(n))
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or len(arr) < 2:
        raise ValueError(f"{name}: need at least 2 values")
    if np.any(arr < 0) or np.any(np.diff(arr) <= 0):
        raise ValueError(f"{name}: values must be ascending and >= 0")
    return arr


def scan_plane(lambda_axis, r_c_axis, wp: WavepacketParams, t: float,
               thresholds: tuple[float, float] = DEFAULT_THRESHOLDS
               ) -> ScanResult:
    """Evaluate the ratio and phase over the (lam, r_c) grid at time t.

    Axes are (lo, hi, n) log-spaced tuples or explicit ascending arrays.
    The coexistence polyline is sampled at the r_c axis values.
    """
    lambdas = _axis(lambda_axis, "lambda axis")
    r_cs = _axis(r_c_axis, "r_c axis")
    if np.any(r_cs <= 0):
        raise ValueError("r_c axis must be strictly positive")
    if not t > 0:
        raise ValueError("scan time must be > 0")
    low, high = thresholds
    cqr = np.empty((len(lambdas), len(r_cs)))
    phases = np.empty(cqr.shape, dtype=object)
    for i, lam in enumerate(lambdas):
        for j, rc in enumerate(r_cs):
            value = collapse_quantum_ratio(
                wp, CollapseParams(lam=float(lam), r_c=float(rc)), t)
            cqr[i, j] = value
            phases[i, j] = classify_phase(value, low, high)
    dq0_sq = wp.dq0 * wp.dq0
    coex = np.array([coexistence_rate(float(rc), dq0_sq, t) for rc in r_cs])
    return ScanResult(lambdas=lambdas, r_cs=r_cs, cqr=cqr, phases=phases,
                      coexistence_r_c=r_cs.copy(), coexistence_lambda=coex,
                      t=t, dq0_sq=dq0_sq, thresholds=(low, high))


@dataclass(frozen=True)
class BoundResult:
    """Largest collapse rate compatible with ratio <= 1 at time t."""

    lambda_max: float
    convention: str
    t_used: float
    r_c: float
    dq0_sq: float
    mass: float

    def __post_init__(self):
        if not self.lambda_max > 0:
            raise ValueError("lambda_max must be > 0")


def _species_factor(mass: float, nucleon_mass: float) -> float:
    return mass / nucleon_mass


def collapse_rate_bound(wp: WavepacketParams, r_c: float, t: float,
                        convention: str = "plain",
                        nucleon_mass: float = NUCLEON_MASS_SI) -> BoundResult:
    """Rate bound from requiring the ratio to stay at or below 1 until t.

    In the mass-proportional convention the plain bound is multiplied by the
    species factor mass / nucleon_mass (2 for a two-nucleon packet).
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}; "
                         f"expected one of {CONVENTIONS}")
    dq0_sq = wp.dq0 * wp.dq0
    lam = coexistence_rate(r_c, dq0_sq, t)
    if convention == "mass_proportional":
        lam *= _species_factor(wp.mass, nucleon_mass)
    return BoundResult(lambda_max=lam, convention=convention, t_used=t,
                       r_c=r_c, dq0_sq=dq0_sq, mass=wp.mass)


def collapse_dominance_time(wp: WavepacketParams, cp: CollapseParams,
                            convention: str = "plain",
                            nucleon_mass: float = NUCLEON_MASS_SI) -> float:
    """Time at which the ratio reaches 1; inverse of collapse_rate_bound.

    With the mass-proportional convention cp.lam is read as the
    mass-proportional rate and divided by the species factor first.
    Returns inf for lam = 0.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}; "
                         f"expected one of {CONVENTIONS}")
    lam = cp.lam
    if lam == 0.0:
        return math.inf
    if convention == "mass_proportional":
        lam /= _species_factor(wp.mass, nucleon_mass)
    return 3.0 * cp.r_c * cp.r_c / (2.0 * lam * wp.dq0 * wp.dq0)


# --- external exclusion curves ----------------------------------------------

@dataclass(frozen=True)
class BoundCurve:
    """External exclusion curve: rate upper bound per localization length."""

    label: str
    r_c: np.ndarray
    lam: np.ndarray


def read_curve_csv(path, label: str | None = None) -> BoundCurve:
    """Two-column (r_c, lambda) CSV; a non-numeric first line is treated as
    a header.  Malformed lines raise ConfigError with their line number."""
    r_vals: list[float] = []
    l_vals: list[float] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise ConfigError(
                    f"{path}: line {lineno}: expected two columns, "
                    f"got {len(parts)}")
            try:
                r, lam = float(parts[0]), float(parts[1])
            except ValueError:
                if lineno == 1:
                    continue   # header row
                raise ConfigError(
                    f"{path}: line {lineno}: non-numeric value") from None
            if r <= 0 or lam <= 0:
                raise ConfigError(
                    f"{path}: line {lineno}: r_c and lambda must be positive")
            r_vals.append(r)
            l_vals.append(lam)
    if len(r_vals) < 2:
        raise ConfigError(f"{path}: need at least two data rows")
    order = np.argsort(r_vals)
    name = label if label is not None else str(path)
    return BoundCurve(label=name, r_c=np.array(r_vals)[order],
                      lam=np.array(l_vals)[order])


@dataclass(frozen=True)
class OverlayResult:
    """Scan coexistence merged with external curves and their envelope."""

    scan: ScanResult
    curves: tuple[BoundCurve, ...]
    envelope_r_c: np.ndarray
    envelope_lambda: np.ndarray


def _interp_loglog(curve: BoundCurve, r_targets: np.ndarray) -> np.ndarray:
    """Log-log linear interpolation, NaN outside the curve's domain."""
    out = np.full(len(r_targets), np.nan)
    inside = (r_targets >= curve.r_c[0]) & (r_targets <= curve.r_c[-1])
    if np.any(inside):
        out[inside] = 10.0 ** np.interp(np.log10(r_targets[inside]),
                                        np.log10(curve.r_c),
                                        np.log10(curve.lam))
    return out


def overlay_bounds(scan: ScanResult,
                   curves: list[BoundCurve] | tuple[BoundCurve, ...] = ()
                   ) -> OverlayResult:
    """Merge external curves with the coexistence curve.

    The envelope at each scanned r_c is the pointwise minimum over the
    coexistence rate and every curve defined there; with no curves the scan
    output is returned unchanged under an envelope equal to the coexistence
    line.
    """
    r_targets = scan.coexistence_r_c
    candidates = [scan.coexistence_lambda]
    for curve in curves:
        candidates.append(_interp_loglog(curve, r_targets))
    stacked = np.vstack(candidates)
    envelope = np.nanmin(stacked, axis=0)
    return OverlayResult(scan=scan, curves=tuple(curves),
                         envelope_r_c=r_targets.copy(),
                         envelope_lambda=envelope)


# --- serialization ----------------------------------------------------------

def write_scan_csv(scan: ScanResult, path) -> None:
    """lambda, r_c, cqr, phase rows; floats use repr for exact round-trip."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(SCAN_CSV_COLUMNS) + "\n")
        for point in scan.points():
            fh.write(f"{point.lam!r},{point.r_c!r},{point.cqr!r},"
                     f"{point.phase}\n")


def read_scan_csv(path) -> list[ScanPoint]:
    points = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != ",".join(SCAN_CSV_COLUMNS):
            raise ConfigError(f"{path}: unexpected header {header!r}")
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ConfigError(f"{path}: line {lineno}: expected 4 columns")
            try:
                points.append(ScanPoint(float(parts[0]), float(parts[1]),
                                        float(parts[2]), parts[3]))
            except ValueError:
                raise ConfigError(
                    f"{path}: line {lineno}: non-numeric value") from None
    return points


def write_coexistence_csv(scan: ScanResult, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("r_c,lambda_coex\n")
        for r, lam in zip(scan.coexistence_r_c, scan.coexistence_lambda):
            fh.write(f"{float(r)!r},{float(lam)!r}\n")


def write_envelope_csv(overlay: OverlayResult, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("r_c,lambda_envelope\n")
        for r, lam in zip(overlay.envelope_r_c, overlay.envelope_lambda):
            fh.write(f"{float(r)!r},{float(lam)!r}\n")


def write_bound_json(bound: BoundResult, path, extra: dict | None = None) -> None:
    payload = {
        "lambda_max": bound.lambda_max,
        "convention": bound.convention,
        "t_used": bound.t_used,
        "r_c": bound.r_c,
        "dq0_sq": bound.dq0_sq,
        "mass": bound.mass,
    }
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
