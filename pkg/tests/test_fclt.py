"""Tail-sum process construction: grids, accumulation, covariance targets."""

import math

import numpy as np
import pytest

from urnlab.errors import ConfigError, ShortTrajectory
from urnlab.fclt import (
    TimeGrid,
    Trajectory,
    accumulate_g,
    collect_trajectory,
    drift_term_diagnostic,
    increment_bound_check,
    theoretical_covariance,
)
from urnlab.martingale import normalizer_advance, normalizer_init, z_increment
from urnlab.rng import CounterRng, stream_seed
from urnlab.spectral import hadamard_spectral_matrix, spectrum, validate_matrix
from urnlab.urn import UrnState, init_urn, step

HM = hadamard_spectral_matrix()
EXACT_PAIRS = spectrum(
    HM,
    supplied=[
        (0.25, np.array([1.0, -1.0, 1.0, -1.0])),
        (0.5, np.array([1.0, 1.0, -1.0, -1.0])),
        (0.75, np.array([1.0, -1.0, -1.0, 1.0])),
    ],
    normalize=False,
).pairs

M2 = validate_matrix(np.array([[0.9, 0.1], [0.2, 0.8]]))
PAIR2 = spectrum(M2, supplied=[(0.7, np.array([1.0, -2.0]))], normalize=False).pairs


def test_time_grid_cuts():
    grid = TimeGrid(100, (0.0, 0.25, 0.5, 0.75, 1.0))
    assert grid.cuts == (100, 128, 164, 211, 271)
    assert grid.n_final == 271
    assert TimeGrid(2000, (0.0, 1.0)).cuts == (2000, 5436)


def test_time_grid_validation():
    with pytest.raises(ConfigError):
        TimeGrid(1, (0.0, 1.0))
    with pytest.raises(ConfigError):
        TimeGrid(100, (0.5, 1.0))  # must start at 0
    with pytest.raises(ConfigError):
        TimeGrid(100, (0.0, 0.5, 0.5))  # strictly increasing
    with pytest.raises(ConfigError):
        TimeGrid(100, (0.0, 3.5))  # horizon cap
    with pytest.raises(ConfigError):
        TimeGrid(100, ())


def test_accumulate_single_increment():
    # one nonzero increment at m = 100 contributes m**(lam - 1/2) * dz
    grid = TimeGrid(100, (0.0, 1.0))
    steps = grid.n_final - 100
    P = 3
    dz = np.zeros((steps, P))
    dz[0, :] = 1e-3
    traj = Trajectory(m0=100, dz=dz, proj=np.zeros((steps, P)), colors=np.zeros(steps, dtype=np.int64))
    g = accumulate_g(traj, EXACT_PAIRS, grid)
    assert g.shape == (3, 2)
    assert np.all(g[:, 0] == 0.0)
    expect = np.exp((np.array([0.25, 0.5, 0.75]) - 0.5) * math.log(100.0)) * 1e-3
    assert np.array_equal(g[:, 1], expect)
    assert g[2, 1] == pytest.approx(math.sqrt(math.sqrt(100.0)) * 1e-3, rel=1e-15)


def test_accumulate_increment_tiling():
    # g(t2) - g(t1) depends only on trial window [cut(t1), cut(t2))
    rng = CounterRng(stream_seed(17, 0))
    grid = TimeGrid(50, (0.0, 0.5, 1.0))
    traj, _ = collect_trajectory(HM, EXACT_PAIRS, 0, grid.n_final, rng)
    g = accumulate_g(traj, EXACT_PAIRS, grid)
    lams = np.array([p.lam for p in EXACT_PAIRS])
    for i in range(3):
        lo, hi = grid.cuts[1], grid.cuts[2]
        ms = np.arange(lo, hi, dtype=float)
        window = np.sum(ms ** (lams[i] - 0.5) * traj.dz[lo - traj.m0 : hi - traj.m0, i])
        assert g[i, 2] - g[i, 1] == pytest.approx(window, rel=1e-12, abs=1e-15)


def test_collect_trajectory_matches_manual_replay():
    rng = CounterRng(stream_seed(29, 1))
    traj, final = collect_trajectory(HM, EXACT_PAIRS, 0, 40, rng)
    assert traj.m0 == 0 and traj.steps == 40 and final.n == 40

    state = init_urn(0, 4)
    norms = [normalizer_init(p.lam) for p in EXACT_PAIRS]
    rng2 = CounterRng(stream_seed(29, 1))
    for m in range(40):
        u = rng2.u01(m)
        new_state, rec = step(state, HM, u, pairs=EXACT_PAIRS)
        norms = [normalizer_advance(nm) for nm in norms]
        assert rec.color == traj.colors[m]
        for i, p in enumerate(EXACT_PAIRS):
            assert traj.proj[m, i] == rec.prev_w_dot_xi[i]
            dz = z_increment(state, rec.color, p, norms[i], w_dot_xi=rec.prev_w_dot_xi[i])
            assert traj.dz[m, i] == dz
        state = new_state
    assert np.array_equal(state.w, final.w)


def test_collect_trajectory_deterministic():
    a, _ = collect_trajectory(HM, EXACT_PAIRS, 0, 100, CounterRng(stream_seed(4, 2)))
    b, _ = collect_trajectory(HM, EXACT_PAIRS, 0, 100, CounterRng(stream_seed(4, 2)))
    assert np.array_equal(a.dz, b.dz)
    assert np.array_equal(a.colors, b.colors)


def test_short_trajectory_raises():
    grid = TimeGrid(50, (0.0, 1.0))
    traj, _ = collect_trajectory(HM, EXACT_PAIRS, 0, 100, CounterRng(stream_seed(4, 2)))
    with pytest.raises(ShortTrajectory):
        accumulate_g(traj, EXACT_PAIRS, grid)


def test_increment_bound_holds_on_real_trajectory():
    traj, _ = collect_trajectory(HM, EXACT_PAIRS, 0, 300, CounterRng(stream_seed(9, 0)))
    assert increment_bound_check(traj, EXACT_PAIRS) <= 1.0


def test_increment_bound_flags_corruption():
    traj, _ = collect_trajectory(HM, EXACT_PAIRS, 0, 50, CounterRng(stream_seed(9, 1)))
    bad = Trajectory(m0=traj.m0, dz=traj.dz * 100.0, proj=traj.proj, colors=traj.colors)
    assert increment_bound_check(bad, EXACT_PAIRS) > 1.0


def test_theoretical_covariance_hadamard_values():
    pi = np.full(4, 0.25)
    times = (0.0, 0.25, 0.5, 0.75, 1.0)
    target = theoretical_covariance(EXACT_PAIRS, pi, times)
    # Hadamard coordinates square to all-ones, so <xi_i xi_j, pi> = delta_ij
    for i, lam in enumerate((0.25, 0.5, 0.75)):
        for s, t in enumerate(times):
            assert target.tensor[i, s, i, s] == pytest.approx(lam * lam * t, abs=1e-14)
    assert target.tensor[0, 4, 1, 4] == pytest.approx(0.0, abs=1e-14)
    assert target.tensor[0, 4, 2, 4] == pytest.approx(0.0, abs=1e-14)
    # cross-time blocks follow min(s, t)
    assert target.tensor[2, 1, 2, 4] == pytest.approx(0.5625 * 0.25, abs=1e-14)
    assert target.tensor[2, 4, 2, 1] == target.tensor[2, 1, 2, 4]


def test_theoretical_covariance_two_color():
    pi = np.array([2.0 / 3.0, 1.0 / 3.0])
    target = theoretical_covariance(PAIR2, pi, (0.0, 0.5, 1.0))
    assert target.tensor[0, 2, 0, 2] == pytest.approx(0.98, abs=1e-12)
    assert target.tensor[0, 1, 0, 2] == pytest.approx(0.49, abs=1e-12)


def test_theoretical_covariance_stacked_symmetric():
    pi = np.full(4, 0.25)
    target = theoretical_covariance(EXACT_PAIRS, pi, (0.0, 0.5, 1.0))
    stacked = target.stacked
    assert stacked.shape == (9, 9)
    assert np.array_equal(stacked, stacked.T)
    eigs = np.linalg.eigvalsh(stacked)
    assert eigs.min() > -1e-12


def test_drift_diagnostic_monotone():
    grid = TimeGrid(50, (0.0, 0.25, 0.5, 1.0))
    traj, _ = collect_trajectory(HM, EXACT_PAIRS, 0, grid.n_final, CounterRng(stream_seed(2, 0)))
    d = drift_term_diagnostic(traj, EXACT_PAIRS, grid)
    assert d.shape == (3, 4)
    assert np.all(d[:, 0] == 0.0)
    assert np.all(np.diff(d, axis=1) >= 0.0)
    assert np.all(np.isfinite(d))
