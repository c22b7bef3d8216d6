"""Stochastic unraveling: exact Gaussian pure states punctuated by hits.

A state psi(q) ~ exp(-a (q - center)^2 / 2 + i momentum (q - center) / hbar)
stays Gaussian under both free evolution (1/a gains i hbar dt / m) and a
localization hit (a gains alpha), so trajectories are propagated in closed
form with no time-discretization error.  Hit times are exponential waiting
times at rate n_particles * lam; hit centers are drawn from the predictive
density, a Gaussian at the state's position mean with variance
var_q + 1/(2 alpha).  Global phase and norm are not tracked.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analytic import MomentSet
from .core import (NATURAL, CollapseParams, ResourceLimitError, UnitSystem,
                   WavepacketParams, effective_rate, natural_scales,
                   to_natural)

__all__ = [
    "GaussianState", "HitEvent", "EnsembleStats", "free_evolve",
    "sample_hit_time", "apply_hit", "run_trajectory", "run_ensemble",
    "write_ensemble_csv", "write_ensemble_json",
]

ENSEMBLE_CSV_COLUMNS = ("time", "mean_q", "se_q", "mean_q2", "se_q2",
                        "mean_p2", "se_p2", "mean_qp", "se_qp")


@dataclass(frozen=True)
class GaussianState:
    """Complex-Gaussian pure state, psi ~ exp(-a u^2/2 + i p u / hbar)."""

    inv_width: complex       # a, units 1/m^2, Re(a) > 0
    center: float            # position mean, m
    momentum: float          # momentum mean, kg m/s
    time: float = 0.0

    def __post_init__(self):
        if not self.inv_width.real > 0:
            raise ValueError("Re(inv_width) must be > 0 (normalizable state)")

    @property
    def var_q(self) -> float:
        """Position variance of |psi|^2: 1 / (2 Re a)."""
        return 1.0 / (2.0 * self.inv_width.real)

    def var_p(self, hbar: float = 1.0) -> float:
        """Momentum variance: hbar^2 |a|^2 / (2 Re a)."""
        a = self.inv_width
        return hbar * hbar * (a.real * a.real + a.imag * a.imag) / (2.0 * a.real)

    def cov_qp(self, hbar: float = 1.0) -> float:
        """Symmetrized position-momentum covariance: -hbar Im a / (2 Re a)."""
        return -hbar * self.inv_width.imag / (2.0 * self.inv_width.real)

    def moments(self, hbar: float = 1.0) -> MomentSet:
        return MomentSet(
            mean_q=self.center,
            mean_q2=self.var_q + self.center * self.center,
            mean_p=self.momentum,
            mean_p2=self.var_p(hbar) + self.momentum * self.momentum,
            mean_qp_sym=self.cov_qp(hbar) + self.center * self.momentum,
            time=self.time)

    def psi(self, q: np.ndarray, hbar: float = 1.0) -> np.ndarray:
        """Normalized wavefunction samples (real positive prefactor)."""
        u = np.asarray(q, dtype=float) - self.center
        norm = (self.inv_width.real / math.pi) ** 0.25
        return norm * np.exp(-0.5 * self.inv_width * u * u
                             + 1j * self.momentum * u / hbar)

    @classmethod
    def from_wavepacket(cls, wp: WavepacketParams) -> "GaussianState":
        """Minimum-uncertainty initial state: a = 1 / (2 dq0^2), real."""
        return cls(inv_width=complex(1.0 / (2.0 * wp.dq0 * wp.dq0), 0.0),
                   center=wp.q0, momentum=wp.p0, time=0.0)


@dataclass(frozen=True)
class HitEvent:
    """One localization event: when it fired and where it localized."""

    time: float
    center: float


def free_evolve(state: GaussianState, dt: float, mass: float,
                hbar: float = 1.0) -> GaussianState:
    """Exact free propagation: 1/a -> 1/a + i hbar dt / m, classical drift.

    Composable: two successive steps equal one combined step exactly.
    """
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if dt == 0.0:
        return state
    a_new = 1.0 / (1.0 / state.inv_width + 1j * hbar * dt / mass)
    return GaussianState(inv_width=a_new,
                         center=state.center + state.momentum * dt / mass,
                         momentum=state.momentum,
                         time=state.time + dt)


def sample_hit_time(rate: float, rng: np.random.Generator) -> float:
    """Exponential waiting time with mean 1/rate; inf sentinel for rate 0."""
    if rate < 0:
        raise ValueError("rate must be >= 0")
    if rate == 0.0:
        return math.inf
    return rng.exponential(1.0 / rate)


def apply_hit(state: GaussianState, cp: CollapseParams,
              rng: np.random.Generator,
              hbar: float = 1.0) -> tuple[GaussianState, HitEvent]:
    """Sample a hit center and return the renormalized post-hit state.

    The predictive density of the center x is the Gaussian
    N(mean, var_q + 1/(2 alpha)); multiplying by the localization kernel
    exp(-(alpha/2)(q - x)^2) then shifts a -> a + alpha, pulls the center
    toward x with weights (Re a, alpha), and kicks the momentum by
    hbar Im(a) (old_center - new_center).
    """
    alpha = cp.alpha()
    a = state.inv_width
    predictive_sd = math.sqrt(state.var_q + 1.0 / (2.0 * alpha))
    x = rng.normal(state.center, predictive_sd)
    new_center = (state.center * a.real + alpha * x) / (a.real + alpha)
    new_momentum = state.momentum + hbar * a.imag * (state.center - new_center)
    hit_state = GaussianState(inv_width=a + alpha, center=new_center,
                              momentum=new_momentum, time=state.time)
    return hit_state, HitEvent(time=state.time, center=x)


def run_trajectory(wp: WavepacketParams, cp: CollapseParams,
                   t_grid: np.ndarray, rng: np.random.Generator,
                   hbar: float = 1.0, max_hits: int = 1_000_000,
                   record_hits: bool = False):
    """Propagate one trajectory, recording moments at each grid time.

    Returns a (n_times, 5) array of (q, q2, p, p2, qp_sym); with
    ``record_hits`` also returns the list of HitEvent.
    """
    state = GaussianState.from_wavepacket(wp)
    rate = effective_rate(wp, cp)
    out = np.empty((len(t_grid), 5))
    hits: list[HitEvent] = []
    n_hits = 0
    next_hit = sample_hit_time(rate, rng)
    for i, t in enumerate(t_grid):
        while next_hit <= t:
            state = free_evolve(state, next_hit - state.time, wp.mass, hbar)
            state, event = apply_hit(state, cp, rng, hbar)
            if record_hits:
                hits.append(event)
            n_hits += 1
            if n_hits > max_hits:
                raise ResourceLimitError(
                    f"trajectory exceeded {max_hits} hits", completed=0)
            next_hit = state.time + sample_hit_time(rate, rng)
        state = free_evolve(state, t - state.time, wp.mass, hbar)
        ms = state.moments(hbar)
        out[i] = (ms.mean_q, ms.mean_q2, ms.mean_p, ms.mean_p2,
                  ms.mean_qp_sym)
    if record_hits:
        return out, hits
    return out


@dataclass(frozen=True)
class EnsembleStats:
    """Per-time moment estimates with standard errors over an ensemble."""

    n_traj: int
    seed: int
    times: np.ndarray
    mean_q: np.ndarray
    se_q: np.ndarray
    mean_q2: np.ndarray
    se_q2: np.ndarray
    mean_p: np.ndarray
    se_p: np.ndarray
    mean_p2: np.ndarray
    se_p2: np.ndarray
    mean_qp: np.ndarray
    se_qp: np.ndarray

    def moments(self, i: int) -> MomentSet:
        return MomentSet(mean_q=float(self.mean_q[i]),
                         mean_q2=float(self.mean_q2[i]),
                         mean_p=float(self.mean_p[i]),
                         mean_p2=float(self.mean_p2[i]),
                         mean_qp_sym=float(self.mean_qp[i]),
                         time=float(self.times[i]))


def _simulate_chunk(wp, cp, t_grid, seed_seqs, start, max_hits):
    out = np.empty((len(seed_seqs), len(t_grid), 5))
    for j, ss in enumerate(seed_seqs):
        rng = np.random.default_rng(ss)
        try:
            out[j] = run_trajectory(wp, cp, t_grid, rng, hbar=1.0,
                                    max_hits=max_hits)
        except ResourceLimitError as exc:
            raise ResourceLimitError(str(exc), completed=start + j) from None
    return start, out


def run_ensemble(wp: WavepacketParams, cp: CollapseParams,
                 t_grid: np.ndarray, n_traj: int, seed: int, *,
                 workers: int = 1, max_hits: int = 1_000_000,
                 units: UnitSystem = NATURAL) -> EnsembleStats:
    """Seeded ensemble of trajectories with deterministic aggregation.

    Each trajectory owns a SeedSequence-spawned stream keyed by its index,
    and the reduction runs in index order over the assembled array, so the
    result is bit-identical for a fixed seed regardless of worker count or
    completion order.  In SI mode the run is nondimensionalized to
    hbar = mass = 1 internally and converted back at the boundary.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if t_grid.ndim != 1 or len(t_grid) == 0:
        raise ValueError("t_grid must be a non-empty 1-d array")
    if np.any(np.diff(t_grid) < 0) or t_grid[0] < 0:
        raise ValueError("t_grid must be ascending and non-negative")

    scales = None
    wp_run, cp_run, times_run = wp, cp, t_grid
    if units.mode == "si":
        scales = natural_scales(wp, hbar=units.hbar)
        cp_run, wp_run = to_natural(cp, wp, scales)
        times_run = t_grid / scales.time

    root = np.random.SeedSequence(seed)
    children = root.spawn(n_traj)
    data = np.empty((n_traj, len(times_run), 5))
    if workers <= 1:
        _, block = _simulate_chunk(wp_run, cp_run, times_run, children, 0,
                                   max_hits)
        data[:] = block
    else:
        chunk = (n_traj + workers - 1) // workers
        jobs = [(i, children[i:i + chunk]) for i in range(0, n_traj, chunk)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_simulate_chunk, wp_run, cp_run, times_run,
                                   seqs, start, max_hits)
                       for start, seqs in jobs]
            for fut in futures:
                start, block = fut.result()
                data[start:start + block.shape[0]] = block

    mean = data.mean(axis=0)
    if n_traj > 1:
        se = data.std(axis=0, ddof=1) / math.sqrt(n_traj)
    else:
        se = np.zeros_like(mean)

    if scales is not None:
        # convert moments back to SI: q-like by L, p-like by hbar/L, qp by hbar
        ls, ps = scales.length, scales.momentum
        conv = np.array([ls, ls * ls, ps, ps * ps, scales.hbar])
        mean = mean * conv
        se = se * conv
        times_out = times_run * scales.time
    else:
        times_out = times_run

    return EnsembleStats(
        n_traj=n_traj, seed=seed, times=np.asarray(times_out, dtype=float),
        mean_q=mean[:, 0], se_q=se[:, 0],
        mean_q2=mean[:, 1], se_q2=se[:, 1],
        mean_p=mean[:, 2], se_p=se[:, 2],
        mean_p2=mean[:, 3], se_p2=se[:, 3],
        mean_qp=mean[:, 4], se_qp=se[:, 4])


def write_ensemble_csv(stats: EnsembleStats, path) -> None:
    """Fixed-column CSV; floats use repr so re-parsing is exact."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(ENSEMBLE_CSV_COLUMNS) + "\n")
        for i in range(len(stats.times)):
            row = (stats.times[i], stats.mean_q[i], stats.se_q[i],
                   stats.mean_q2[i], stats.se_q2[i], stats.mean_p2[i],
                   stats.se_p2[i], stats.mean_qp[i], stats.se_qp[i])
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def write_ensemble_json(stats: EnsembleStats, wp: WavepacketParams,
                        cp: CollapseParams, units: UnitSystem, path,
                        timestamp: str, version: str) -> None:
    import json
    payload = {
        "engine": "trajectories",
        "version": version,
        "timestamp": timestamp,
        "seed": stats.seed,
        "n_traj": stats.n_traj,
        "units": units.mode,
        "parameters": {
            "lambda": cp.lam, "r_c": cp.r_c,
            "mass_proportional": cp.mass_proportional,
            "mass": wp.mass, "dq0": wp.dq0, "q0": wp.q0, "p0": wp.p0,
            "n_particles": wp.n_particles,
        },
        "times": [float(t) for t in stats.times],
        "mean_p": [float(v) for v in stats.mean_p],
        "se_p": [float(v) for v in stats.se_p],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
