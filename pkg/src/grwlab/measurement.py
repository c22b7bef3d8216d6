"""Toy pointer-measurement chain with collapse-driven diagonalization.

A discrete observable with outcomes O_n and amplitudes c_n couples
impulsively to a heavy Gaussian pointer: during the interaction ramp each
outcome branch displaces the pointer by ramp(t) * shift(O_n), so the system
and pointer end up entangled.  The system's reduced density matrix before
reduction carries off-diagonals proportional to the pointer overlaps; after
reduction it is the diagonal of Born weights.  With localization noise on
the pointer the off-diagonal blocks decay at rate
N * lam * (1 - exp(-alpha s^2 / 4)) for branch separation s, which predicts
the diagonalization time checked against the grid engine.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .core import CollapseParams, ConfigError, WavepacketParams, read_config
from .trajectories import GaussianState, free_evolve

WEIGHT_TOL = 1e-12

SCENARIO_KEYS = frozenset({
    "outcomes", "amplitudes", "f_values", "pointer_mass", "pointer_dq0",
    "pointer_q0", "pointer_p0", "t0", "t1", "ramp"})


@dataclass(frozen=True)
class InteractionRamp:
    """Coupling profile: 0 before t0, 1 after t1, monotone in between."""

    t0: float
    t1: float
    shape: str = "smoothstep"

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError("ramp requires t1 > t0")
        if self.shape not in ("smoothstep", "linear"):
            raise ValueError(f"unknown ramp shape {self.shape!r}")

    def beta(self, t: float) -> float:
        if t <= self.t0:
            return 0.0
        if t >= self.t1:
            return 1.0
        x = (t - self.t0) / (self.t1 - self.t0)
        if self.shape == "linear":
            return x
        return x * x * (3.0 - 2.0 * x)


@dataclass(frozen=True)
class MeasurementSetup:
    """Outcome spectrum, amplitudes, pointer shifts and pointer packet."""

    outcomes: tuple[float, ...]
    amplitudes: tuple[complex, ...]
    pointer_shifts: tuple[float, ...]    # shift length per outcome, m
    pointer: WavepacketParams
    ramp: InteractionRamp

    def __post_init__(self):
        n = len(self.outcomes)
        if n == 0:
            raise ValueError("need at least one outcome")
        if len(self.amplitudes) != n or len(self.pointer_shifts) != n:
            raise ValueError("outcomes, amplitudes and pointer_shifts must "
                             "have equal length")
        total = sum(abs(c) ** 2 for c in self.amplitudes)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"amplitudes are not normalized: sum|c|^2 = {total!r}")


@dataclass(frozen=True)
class BranchState:
    """Per-outcome pointer states with their amplitudes at one time."""

    amplitudes: tuple[complex, ...]
    pointers: tuple[GaussianState, ...]
    time: float

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(abs(c) ** 2 for c in self.amplitudes)


def entangle(setup: MeasurementSetup, t: float,
             hbar: float = 1.0) -> BranchState:
    """Branch pointers at time t: displaced by beta(t) * shift, freely
    evolved with the pointer mass.

    The displacement commutes with free pointer evolution, so the order of
    the two operations does not matter.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    beta = setup.ramp.beta(t)
    base = GaussianState.from_wavepacket(setup.pointer)
    pointers = []
    for shift in setup.pointer_shifts:
        displaced = GaussianState(inv_width=base.inv_width,
                                  center=base.center + beta * shift,
                                  momentum=base.momentum, time=0.0)
        pointers.append(free_evolve(displaced, t, setup.pointer.mass, hbar))
    return BranchState(amplitudes=setup.amplitudes, pointers=tuple(pointers),
                       time=t)


def gaussian_overlap(s1: GaussianState, s2: GaussianState,
                     hbar: float = 1.0) -> complex:
    """<s1|s2> in closed form, with the real-positive-prefactor convention.

    Both states are written with normalization (Re a / pi)^(1/4); the
    overlap is the Gaussian integral
    N1 N2 sqrt(pi/A) exp(B^2/(4A) + C) for the combined quadratic form.
    """
    a1 = s1.inv_width.conjugate()
    a2 = s2.inv_width
    big_a = 0.5 * (a1 + a2)
    b = (a1 * s1.center + a2 * s2.center
         + 1j * (s2.momentum - s1.momentum) / hbar)
    c = (-0.5 * a1 * s1.center ** 2 - 0.5 * a2 * s2.center ** 2
         + 1j * (s1.momentum * s1.center - s2.momentum * s2.center) / hbar)
    norm = (s1.inv_width.real / math.pi) ** 0.25 \
        * (s2.inv_width.real / math.pi) ** 0.25
    return norm * cmath.sqrt(math.pi / big_a) * cmath.exp(b * b / (4.0 * big_a) + c)


def pointer_overlap(branches: BranchState, n: int, m: int,
                    hbar: float = 1.0) -> complex:
    """Closed-form <A_n|A_m>; its magnitude sets the off-diagonal survival."""
    return gaussian_overlap(branches.pointers[n], branches.pointers[m], hbar)


def reduced_density(branches: BranchState, mode: str = "pre",
                    hbar: float = 1.0) -> np.ndarray:
    """System-space density matrix.

    "pre" traces the pointer out of the entangled pure state: entry (n, m)
    is c_n conj(c_m) <A_m|A_n>.  "post" is the reduced state after pointer
    registration: diag of the Born weights.  The diagonals agree exactly.
    """
    n_out = len(branches.amplitudes)
    if mode == "post":
        return np.diag(np.array(branches.weights, dtype=np.complex128))
    if mode != "pre":
        raise ValueError(f"mode must be 'pre' or 'post', got {mode!r}")
    c = np.array(branches.amplitudes, dtype=np.complex128)
    rho = np.empty((n_out, n_out), dtype=np.complex128)
    for i in range(n_out):
        for j in range(n_out):
            if i == j:
                rho[i, j] = abs(c[i]) ** 2
            else:
                rho[i, j] = c[i] * c[j].conjugate() \
                    * pointer_overlap(branches, j, i, hbar)
    return rho


def pointer_diagonalization_time(setup: MeasurementSetup, cp: CollapseParams,
                                 n_pointer_particles: int = 1) -> float:
    """Predicted 1/e time for the slowest off-diagonal block.

    1 / (N lam (1 - exp(-alpha s^2 / 4))) with s the smallest distinct
    branch separation at full coupling; reduces to 1/(N lam) for s >> r_c.
    Returns inf when lam = 0 (or no separated branches exist).
    """
    if n_pointer_particles < 1:
        raise ValueError("n_pointer_particles must be >= 1")
    if cp.lam == 0.0:
        return math.inf
    shifts = setup.pointer_shifts
    seps = [abs(shifts[i] - shifts[j])
            for i in range(len(shifts)) for j in range(i + 1, len(shifts))]
    seps = [s for s in seps if s > 0]
    if not seps:
        return math.inf
    s_min = min(seps)
    damping = 1.0 - math.exp(-0.25 * cp.alpha() * s_min * s_min)
    if damping == 0.0:
        return math.inf
    return 1.0 / (n_pointer_particles * cp.lam * damping)


def superposed_pointer_wavefunction(branches: BranchState, q: np.ndarray,
                                    hbar: float = 1.0) -> np.ndarray:
    """Pointer-space wavefunction sum_n c_n A_n(q) (not normalized)."""
    psi = np.zeros_like(np.asarray(q, dtype=float), dtype=np.complex128)
    for c, state in zip(branches.amplitudes, branches.pointers):
        psi = psi + c * state.psi(q, hbar)
    return psi


def _parse_float_list(text: str, key: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: expected comma-separated numbers, "
                          f"got {text!r}") from exc


def _parse_complex_list(text: str, key: str) -> tuple[complex, ...]:
    try:
        return tuple(complex(tok.strip()) for tok in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: expected comma-separated complex "
                          f"numbers, got {text!r}") from exc


def read_scenario(path) -> MeasurementSetup:
    """Load a measurement scenario from a key-value config file.

    Keys: outcomes, amplitudes, f_values (comma lists), pointer_mass,
    pointer_dq0, optional pointer_q0/pointer_p0, t0, t1, optional ramp.
    """
    raw = read_config(path, allowed=SCENARIO_KEYS)
    for key in ("outcomes", "amplitudes", "f_values", "pointer_mass",
                "pointer_dq0", "t0", "t1"):
        if key not in raw:
            raise ConfigError(f"{path}: missing required key {key!r}")
    outcomes = _parse_float_list(raw["outcomes"], "outcomes")
    amplitudes = _parse_complex_list(raw["amplitudes"], "amplitudes")
    f_values = _parse_float_list(raw["f_values"], "f_values")
    pointer = WavepacketParams(mass=float(raw["pointer_mass"]),
                               dq0=float(raw["pointer_dq0"]),
                               q0=float(raw.get("pointer_q0", "0")),
                               p0=float(raw.get("pointer_p0", "0")))
    ramp = InteractionRamp(t0=float(raw["t0"]), t1=float(raw["t1"]),
                           shape=raw.get("ramp", "smoothstep"))
    try:
        return MeasurementSetup(outcomes=outcomes, amplitudes=amplitudes,
                                pointer_shifts=f_values, pointer=pointer,
                                ramp=ramp)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _complex_pair(z: complex) -> list[float]:
    return [z.real, z.imag]


def measurement_report(setup: MeasurementSetup, cp: CollapseParams, t: float,
                       n_pointer_particles: int = 1,
                       hbar: float = 1.0) -> dict:
    """JSON-ready report: overlaps, pre/post matrices, diagonalization time."""
    branches = entangle(setup, t, hbar)
    n = len(setup.outcomes)
    overlaps = [[_complex_pair(pointer_overlap(branches, i, j, hbar))
                 for j in range(n)] for i in range(n)]
    pre = reduced_density(branches, "pre", hbar)
    post = reduced_density(branches, "post", hbar)
    return {
        "time": t,
        "outcomes": list(setup.outcomes),
        "weights": list(branches.weights),
        "pointer_means": [s.center for s in branches.pointers],
        "overlaps": overlaps,
        "reduced_pre": [[_complex_pair(z) for z in row] for row in pre],
        "reduced_post": [[_complex_pair(z) for z in row] for row in post],
        "diagonalization_time": pointer_diagonalization_time(
            setup, cp, n_pointer_particles),
        "n_pointer_particles": n_pointer_particles,
        "collapse": {"lambda": cp.lam, "r_c": cp.r_c},
    }
