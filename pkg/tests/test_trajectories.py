import math

import numpy as np
import pytest
from scipy import stats as scipy_stats

from grwlab.analytic import grw_moments, schrodinger_moments
from grwlab.core import (SI, CollapseParams, ResourceLimitError,
                         WavepacketParams)
from grwlab.master_equation import evolve, grid_moments, render_state
from grwlab.trajectories import (EnsembleStats, GaussianState, apply_hit,
                                 free_evolve, run_ensemble, run_trajectory,
                                 sample_hit_time, write_ensemble_csv)

WP = WavepacketParams(mass=1.0, dq0=math.sqrt(0.5))
CP = CollapseParams(lam=1.0, r_c=1.0)


# --- Gaussian state -----------------------------------------------------------

def test_state_requires_normalizable_width():
    with pytest.raises(ValueError):
        GaussianState(inv_width=complex(-0.1, 0.3), center=0.0, momentum=0.0)


def test_state_variance_matches_grid_rendering():
    state = GaussianState(inv_width=complex(0.9, -0.4), center=0.3,
                          momentum=-0.7)
    grid = render_state(state, 10.0, 512)
    gm = grid_moments(grid, 1.0)
    assert gm.var_q == pytest.approx(state.var_q, abs=1e-10)
    assert gm.var_p == pytest.approx(state.var_p(1.0), abs=1e-10)
    assert gm.cov_qp == pytest.approx(state.cov_qp(1.0), abs=1e-10)
    assert state.var_q > 0


def test_initial_state_saturates_uncertainty():
    state = GaussianState.from_wavepacket(WP)
    assert state.var_q == pytest.approx(0.5, rel=1e-14)
    assert state.var_p(1.0) * state.var_q == pytest.approx(0.25, rel=1e-14)
    assert state.cov_qp(1.0) == 0.0


# --- free evolution -----------------------------------------------------------

def test_free_evolve_identity_at_dt0():
    state = GaussianState(inv_width=complex(1.0, 0.2), center=0.5,
                          momentum=1.5)
    assert free_evolve(state, 0.0, 1.0) is state
    with pytest.raises(ValueError):
        free_evolve(state, -0.1, 1.0)


def test_free_evolve_variance_growth():
    state = GaussianState.from_wavepacket(WP)
    for t in (0.3, 1.0, 2.5):
        evolved = free_evolve(state, t, WP.mass, 1.0)
        assert evolved.var_q == pytest.approx(0.5 + t * t / 2.0, rel=1e-13)
        assert evolved.momentum == 0.0


def test_free_evolve_composition_is_exact():
    state = GaussianState(inv_width=complex(0.8, -0.1), center=-0.2,
                          momentum=0.9)
    once = free_evolve(state, 1.7, 1.3, 1.0)
    twice = free_evolve(free_evolve(state, 0.9, 1.3, 1.0), 0.8, 1.3, 1.0)
    assert twice.inv_width == pytest.approx(once.inv_width, rel=1e-14)
    assert twice.center == pytest.approx(once.center, rel=1e-14)


def test_free_evolve_means_match_grid_oracle():
    # independent propagation oracle: evolve rendered grid with lam = 0
    state = GaussianState(inv_width=complex(0.8, 0.3), center=-0.4,
                          momentum=0.6)
    t_end = 0.8
    grid = render_state(state, 10.0, 256)
    dt = 1e-3
    steps = int(round(t_end / dt))
    evolved_grid = evolve(grid, WavepacketParams(mass=1.0, dq0=1.0),
                          CollapseParams(lam=0.0, r_c=1.0), dt, steps)
    closed = free_evolve(state, t_end, 1.0, 1.0)
    gm = grid_moments(evolved_grid, 1.0)
    assert gm.mean_q == pytest.approx(closed.center, abs=1e-8)
    assert gm.mean_p == pytest.approx(closed.momentum, abs=1e-8)
    assert gm.var_q == pytest.approx(closed.var_q, abs=1e-8)


# --- hit sampling ---------------------------------------------------------------

def test_sample_hit_time_zero_rate_sentinel():
    rng = np.random.default_rng(0)
    assert sample_hit_time(0.0, rng) == math.inf
    with pytest.raises(ValueError):
        sample_hit_time(-1.0, rng)


def test_sample_hit_time_mean():
    rng = np.random.default_rng(123)
    draws = np.array([sample_hit_time(1.0, rng) for _ in range(100_000)])
    assert draws.mean() == pytest.approx(1.0, abs=0.01)


def test_sample_hit_time_deterministic_under_seed():
    a = [sample_hit_time(2.0, np.random.default_rng(7)) for _ in range(1)]
    b = [sample_hit_time(2.0, np.random.default_rng(7)) for _ in range(1)]
    assert a == b


# --- hits -----------------------------------------------------------------------

def test_apply_hit_inv_width_increment_exact():
    state = GaussianState(inv_width=complex(0.7, -0.3), center=0.4,
                          momentum=0.2)
    post, event = apply_hit(state, CP, np.random.default_rng(1))
    assert post.inv_width.real == state.inv_width.real + CP.alpha()
    assert post.inv_width.imag == state.inv_width.imag
    assert event.time == state.time


def test_apply_hit_weak_kernel_limit_is_identity():
    state = GaussianState(inv_width=complex(0.7, -0.3), center=0.4,
                          momentum=0.2)
    # center kick scales as sqrt(alpha)/Re(a); alpha = 1e-20 pushes it
    # far below the 1e-8 identity tolerance
    weak = CollapseParams(lam=1.0, r_c=1e10)
    post, _ = apply_hit(state, weak, np.random.default_rng(2))
    assert post.center == pytest.approx(state.center, abs=1e-8)
    assert post.momentum == pytest.approx(state.momentum, abs=1e-8)
    assert post.inv_width == pytest.approx(state.inv_width, abs=1e-8)


def test_apply_hit_center_distribution_ks():
    # predictive density: Gaussian at the state mean with variance
    # var_q + 1/(2 alpha)
    state = GaussianState(inv_width=complex(0.6, 0.2), center=-0.3,
                          momentum=0.5)
    rng = np.random.default_rng(20260810)
    centers = np.array([apply_hit(state, CP, rng)[1].center
                        for _ in range(100_000)])
    sd = math.sqrt(state.var_q + 0.5 / CP.alpha())
    result = scipy_stats.kstest(centers, "norm", args=(state.center, sd))
    assert result.pvalue > 0.01


def test_apply_hit_preserves_ensemble_q2_and_p():
    # averaging over hit centers must leave <q^2> and <p> unchanged
    state = GaussianState(inv_width=complex(0.7, -0.5), center=0.4,
                          momentum=0.2)
    rng = np.random.default_rng(99)
    n = 200_000
    q2 = np.empty(n)
    p = np.empty(n)
    for i in range(n):
        post, _ = apply_hit(state, CP, rng)
        q2[i] = post.center ** 2 + post.var_q
        p[i] = post.momentum
    pre_q2 = state.center ** 2 + state.var_q
    assert q2.mean() == pytest.approx(pre_q2, abs=4 * q2.std() / math.sqrt(n))
    assert p.mean() == pytest.approx(state.momentum,
                                     abs=4 * p.std() / math.sqrt(n))


def test_hit_times_strictly_increasing():
    rng = np.random.default_rng(5)
    _, hits = run_trajectory(WP, CP, np.array([5.0]), rng, record_hits=True)
    times = [h.time for h in hits]
    assert len(times) > 1
    assert all(b > a for a, b in zip(times, times[1:]))


# --- ensembles ------------------------------------------------------------------

def test_run_ensemble_zero_rate_matches_closed_form():
    cp0 = CollapseParams(lam=0.0, r_c=1.0)
    times = np.array([0.0, 0.5, 1.0, 2.0])
    stats = run_ensemble(WP, cp0, times, n_traj=8, seed=1)
    for i, t in enumerate(times):
        ms = schrodinger_moments(WP, float(t), hbar=1.0)
        assert stats.mean_q[i] == pytest.approx(ms.mean_q, abs=1e-10)
        assert stats.mean_q2[i] == pytest.approx(ms.mean_q2, rel=1e-10)
        assert stats.mean_p2[i] == pytest.approx(ms.mean_p2, rel=1e-10)
        assert stats.mean_qp[i] == pytest.approx(ms.mean_qp_sym, abs=1e-10)
        assert stats.se_q2[i] == 0.0


def test_run_ensemble_matches_moment_corrections():
    times = np.array([0.5, 1.0, 2.0])
    stats = run_ensemble(WP, CP, times, n_traj=4000, seed=2)
    for i, t in enumerate(times):
        base = schrodinger_moments(WP, float(t), hbar=1.0)
        target = grw_moments(WP, CP, base, hbar=1.0)
        assert abs(stats.mean_q2[i] - target.mean_q2) < 3 * stats.se_q2[i]
        assert abs(stats.mean_p2[i] - target.mean_p2) < 3 * stats.se_p2[i]
        assert abs(stats.mean_qp[i] - target.mean_qp_sym) < 3 * stats.se_qp[i]
        assert abs(stats.mean_q[i] - base.mean_q) < 3 * stats.se_q[i]
        assert abs(stats.mean_p[i] - base.mean_p) < 3 * stats.se_p[i]


def test_run_ensemble_p2_growth_slope():
    # kinetic moment grows linearly at rate alpha lam hbar^2 / 2
    times = np.linspace(0.0, 5.0, 11)
    stats = run_ensemble(WP, CP, times, n_traj=4000, seed=3)
    slope, intercept = np.polyfit(times, stats.mean_p2, 1)
    expected = CP.alpha() * CP.lam / 2.0
    resid = stats.mean_p2 - (slope * times + intercept)
    slope_se = math.sqrt(np.sum(stats.se_p2 ** 2)) / math.sqrt(
        np.sum((times - times.mean()) ** 2))
    assert abs(slope - expected) < 3 * max(slope_se, np.abs(resid).max())


def test_run_ensemble_deterministic_and_worker_independent():
    times = np.array([0.3, 0.9])
    a = run_ensemble(WP, CP, times, n_traj=40, seed=11, workers=1)
    b = run_ensemble(WP, CP, times, n_traj=40, seed=11, workers=1)
    c = run_ensemble(WP, CP, times, n_traj=40, seed=11, workers=3)
    assert np.array_equal(a.mean_q2, b.mean_q2)
    assert np.array_equal(a.mean_q2, c.mean_q2)
    assert np.array_equal(a.se_qp, c.se_qp)


def test_run_ensemble_se_scales_with_sqrt_n():
    small = run_ensemble(WP, CP, np.array([1.0]), n_traj=500, seed=4)
    large = run_ensemble(WP, CP, np.array([1.0]), n_traj=2000, seed=4)
    ratio = small.se_q2[0] / large.se_q2[0]
    assert 1.0 <= ratio <= 4.0   # expected 2, allow factor-2 band


def test_run_ensemble_resource_limit():
    with pytest.raises(ResourceLimitError) as excinfo:
        run_ensemble(WP, CollapseParams(lam=50.0, r_c=1.0),
                     np.array([100.0]), n_traj=4, seed=5, max_hits=10)
    assert excinfo.value.completed >= 0


def test_run_ensemble_validates_grid():
    with pytest.raises(ValueError):
        run_ensemble(WP, CP, np.array([1.0, 0.5]), n_traj=2, seed=0)
    with pytest.raises(ValueError):
        run_ensemble(WP, CP, np.array([1.0]), n_traj=0, seed=0)


def test_run_ensemble_si_units_roundtrip():
    # SI run converts to natural internally; lam = 0 must reproduce the
    # SI closed form at the boundary
    wp = WavepacketParams(mass=3.3e-27, dq0=1e-10)
    cp = CollapseParams(lam=0.0, r_c=1e-7)
    t = 1e-6
    stats = run_ensemble(wp, cp, np.array([t]), n_traj=4, seed=6, units=SI)
    ms = schrodinger_moments(wp, t, hbar=SI.hbar)
    assert stats.mean_q2[0] == pytest.approx(ms.mean_q2, rel=1e-10)
    assert stats.mean_p2[0] == pytest.approx(ms.mean_p2, rel=1e-10)


def test_ensemble_csv_exact_roundtrip(tmp_path):
    stats = run_ensemble(WP, CP, np.array([0.5, 1.0]), n_traj=16, seed=7)
    path = tmp_path / "ens.csv"
    write_ensemble_csv(stats, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ("time,mean_q,se_q,mean_q2,se_q2,mean_p2,se_p2,"
                        "mean_qp,se_qp")
    row = lines[1].split(",")
    assert float(row[3]) == stats.mean_q2[0]
