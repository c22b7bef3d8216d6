"""Parameter records, unit systems, and configuration shared by every engine.

All records are frozen dataclasses: once constructed they are immutable and
can be shared freely between threads, processes, or concurrent scan cells.

Two unit modes are supported.  In SI mode lengths are meters, times seconds,
masses kilograms and hbar carries its CODATA value.  In natural mode hbar is
exactly 1 and the caller is responsible for scaling inputs; the helper
``natural_scales`` / ``to_natural`` pair builds a scale set in which both
hbar and the particle mass equal 1, which is how the dynamical engines run
internally (SI-scale collapse rates combined with hbar^2 factors are far too
small for a naive double-precision grid evolution).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

HBAR_SI = 1.054571817e-34            # J s (CODATA 2018)
NUCLEON_MASS_SI = 1.67262192369e-27  # kg (proton mass, CODATA 2018)

# Hydrogen-molecule style defaults used by the CLI when a key is not given:
# two nucleons, initial spread 1e-10 m (dq0^2 = 1e-20 m^2).
DEFAULT_LAMBDA = 1e-16
DEFAULT_R_C = 1e-7
DEFAULT_MASS = 2.0 * NUCLEON_MASS_SI
DEFAULT_DQ0 = 1e-10


class UnitError(ValueError):
    """Invalid unit scale or inconsistent unit-system request."""


class ConfigError(ValueError):
    """Malformed or unknown configuration input."""


class GridDomainError(ValueError):
    """State does not fit the requested position grid."""


class FormulaDomainError(ValueError):
    """Input leaves the validity domain of a closed-form expression."""


class NumericalCheckError(RuntimeError):
    """A numerical cross-check failed beyond its tolerance."""

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


class EvolutionAbort(RuntimeError):
    """Grid evolution breached an invariant and was stopped."""

    def __init__(self, message: str, step: int, time: float, drift: float):
        super().__init__(f"{message} (step {step}, t={time:g}, drift={drift:.3e})")
        self.step = step
        self.time = time
        self.drift = drift


class ResourceLimitError(RuntimeError):
    """Work exceeded a configured resource cap; carries the completed count."""

    def __init__(self, message: str, completed: int):
        super().__init__(message)
        self.completed = completed


@dataclass(frozen=True)
class UnitSystem:
    """Unit mode tag plus the value of hbar in that mode."""

    mode: str                 # "si" or "natural"
    hbar: float
    description: str = ""

    def __post_init__(self):
        if self.mode not in ("si", "natural"):
            raise UnitError(f"unknown unit mode {self.mode!r}")
        if not self.hbar > 0:
            raise UnitError("hbar must be positive")
        if self.mode == "natural" and self.hbar != 1.0:
            raise UnitError("natural units require hbar == 1 exactly")


SI = UnitSystem("si", HBAR_SI, "SI units, hbar in J s")
NATURAL = UnitSystem("natural", 1.0, "nondimensional units, hbar = 1")


def unit_system(name: str) -> UnitSystem:
    if name == "si":
        return SI
    if name == "natural":
        return NATURAL
    raise UnitError(f"unknown unit system {name!r}")


@dataclass(frozen=True)
class CollapseParams:
    """Localization-noise parameters: hit rate and localization length.

    ``lam`` is the mean number of localization events per particle per unit
    time; ``r_c`` is the spatial width of the localization kernel.  The
    ``mass_proportional`` flag records which rate convention the value of
    ``lam`` was quoted in; it does not change any dynamics by itself.
    """

    lam: float
    r_c: float
    mass_proportional: bool = False

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("collapse rate lam must be >= 0")
        if not self.r_c > 0:
            raise ValueError("collapse length r_c must be > 0")

    def alpha(self) -> float:
        """Inverse-square localization length 1 / r_c**2."""
        return 1.0 / (self.r_c * self.r_c)

    @classmethod
    def from_alpha(cls, alpha: float, lam: float,
                   mass_proportional: bool = False) -> "CollapseParams":
        if not alpha > 0:
            raise ValueError("alpha must be > 0")
        return cls(lam=lam, r_c=1.0 / math.sqrt(alpha),
                   mass_proportional=mass_proportional)


@dataclass(frozen=True)
class WavepacketParams:
    """Free-particle wavepacket: mass, initial spread, means, particle count.

    ``n_particles`` feeds the composite-system amplification: every engine
    uses the effective hit rate ``n_particles * lam``.
    """

    mass: float
    dq0: float
    q0: float = 0.0
    p0: float = 0.0
    n_particles: int = 1

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("mass must be > 0")
        if not self.dq0 > 0:
            raise ValueError("initial width dq0 must be > 0")
        if not (isinstance(self.n_particles, int) and self.n_particles >= 1):
            raise ValueError("n_particles must be an integer >= 1")


def effective_rate(wp: WavepacketParams, cp: CollapseParams) -> float:
    """Hit rate seen by an N-particle composite: n_particles * lam."""
    return wp.n_particles * cp.lam


@dataclass(frozen=True)
class ScaleSet:
    """Length/time scales defining a nondimensionalization.

    The induced mass and momentum scales are fixed by requiring hbar -> 1:
    mass_scale = hbar * time / length**2, momentum_scale = hbar / length.
    """

    length: float
    time: float
    hbar: float = HBAR_SI

    def __post_init__(self):
        if not (self.length > 0 and self.time > 0 and self.hbar > 0):
            raise UnitError("unit scales must be strictly positive")

    @property
    def mass(self) -> float:
        return self.hbar * self.time / (self.length * self.length)

    @property
    def momentum(self) -> float:
        return self.hbar / self.length


def natural_scales(wp: WavepacketParams, hbar: float = HBAR_SI,
                   length: float | None = None) -> ScaleSet:
    """Scales that map a wavepacket to hbar = mass = 1.

    The length scale defaults to the initial spread; the time scale is then
    forced to mass * length**2 / hbar.
    """
    if length is None:
        length = wp.dq0
    if not length > 0:
        raise UnitError("length scale must be strictly positive")
    return ScaleSet(length=length, time=wp.mass * length * length / hbar,
                    hbar=hbar)


def to_natural(cp: CollapseParams, wp: WavepacketParams,
               scales: ScaleSet) -> tuple[CollapseParams, WavepacketParams]:
    """Rescale parameters by the given scale set (rates by time, lengths
    by length, masses/momenta by the induced scales)."""
    cp_n = replace(cp, lam=cp.lam * scales.time, r_c=cp.r_c / scales.length)
    wp_n = replace(wp,
                   mass=wp.mass / scales.mass,
                   dq0=wp.dq0 / scales.length,
                   q0=wp.q0 / scales.length,
                   p0=wp.p0 / scales.momentum)
    return cp_n, wp_n


def from_natural(cp: CollapseParams, wp: WavepacketParams,
                 scales: ScaleSet) -> tuple[CollapseParams, WavepacketParams]:
    """Inverse of :func:`to_natural`; round-trips to < 1e-12 relative."""
    cp_s = replace(cp, lam=cp.lam / scales.time, r_c=cp.r_c * scales.length)
    wp_s = replace(wp,
                   mass=wp.mass * scales.mass,
                   dq0=wp.dq0 * scales.length,
                   q0=wp.q0 * scales.length,
                   p0=wp.p0 * scales.momentum)
    return cp_s, wp_s


# --- configuration files ---------------------------------------------------
#
# Plain "key = value" lines; '#' starts a comment, blank lines are ignored.
# Core keys (shared by every subcommand): lambda, r_c, mass, dq0, q0, p0,
# n_particles, units.  Measurement scenarios reuse the same format with
# their own key set (see measurement.read_scenario).

CORE_CONFIG_KEYS = frozenset(
    {"lambda", "r_c", "mass", "dq0", "q0", "p0", "n_particles", "units"})


def read_config(path: str | Path,
                allowed: frozenset[str] | set[str] | None = None) -> dict[str, str]:
    """Parse a key-value config file into a string map.

    Raises ConfigError with the offending line number on malformed lines or,
    when ``allowed`` is given, on unknown keys.
    """
    result: dict[str, str] = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"{path}: line {lineno}: empty key or value")
        if allowed is not None and key not in allowed:
            raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
        if key in result:
            raise ConfigError(f"{path}: line {lineno}: duplicate key {key!r}")
        result[key] = value
    return result


def _as_float(mapping: dict[str, str], key: str, default: float) -> float:
    if key not in mapping:
        return default
    try:
        return float(mapping[key])
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: not a number: {mapping[key]!r}") from exc


def _as_int(mapping: dict[str, str], key: str, default: int) -> int:
    if key not in mapping:
        return default
    try:
        return int(mapping[key])
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: not an integer: {mapping[key]!r}") from exc


def params_from_config(mapping: dict[str, str]) -> tuple[
        CollapseParams, WavepacketParams, UnitSystem]:
    """Build parameter records from a parsed config map, with hydrogen-style
    defaults for missing keys."""
    units = unit_system(mapping.get("units", "si"))
    try:
        cp = CollapseParams(lam=_as_float(mapping, "lambda", DEFAULT_LAMBDA),
                            r_c=_as_float(mapping, "r_c", DEFAULT_R_C))
        wp = WavepacketParams(mass=_as_float(mapping, "mass", DEFAULT_MASS),
                              dq0=_as_float(mapping, "dq0", DEFAULT_DQ0),
                              q0=_as_float(mapping, "q0", 0.0),
                              p0=_as_float(mapping, "p0", 0.0),
                              n_particles=_as_int(mapping, "n_particles", 1))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cp, wp, units
