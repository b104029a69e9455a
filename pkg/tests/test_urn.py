"""Urn dynamics: sampling rule, mass conservation, projections, determinism."""

import math

import numpy as np
import pytest

from urnlab.errors import BadColor
from urnlab.rng import CounterRng, stream_seed
from urnlab.spectral import hadamard_spectral_matrix, spectrum, validate_matrix
from urnlab.urn import (
    MassObserver,
    ProjectionDriftObserver,
    UrnState,
    choose_color,
    evolve,
    init_urn,
    step,
)

HM = hadamard_spectral_matrix()

# exact Hadamard pairs: supplied values are dyadic, so every projection
# update below stays exactly representable
EXACT_PAIRS = spectrum(
    HM,
    supplied=[
        (0.25, np.array([1.0, -1.0, 1.0, -1.0])),
        (0.5, np.array([1.0, 1.0, -1.0, -1.0])),
        (0.75, np.array([1.0, -1.0, -1.0, 1.0])),
    ],
    normalize=False,
).pairs


def test_init_urn_single_ball():
    s = init_urn(2, 4)
    assert s.n == 0
    assert s.total == 1.0
    assert np.array_equal(s.w, [0.0, 0.0, 1.0, 0.0])
    with pytest.raises(BadColor):
        init_urn(4, 4)
    with pytest.raises(BadColor):
        init_urn(-1, 4)
    with pytest.raises(BadColor):
        init_urn(0, 1)


def test_choose_color_inverse_cdf():
    w = np.array([1.625, 0.125, 0.0, 0.25])
    # cumulative masses 1.625, 1.75, 1.75, 2.0 against threshold u * 2
    assert choose_color(w, 2.0, 0.0) == 0
    assert choose_color(w, 2.0, 0.8) == 0
    assert choose_color(w, 2.0, 0.8126) == 1
    assert choose_color(w, 2.0, 0.88) == 3
    assert choose_color(w, 2.0, 0.9) == 3


def test_choose_color_zero_mass_never_chosen():
    w = np.array([0.5, 0.0, 0.5])
    for u in np.linspace(0.0, 0.999999, 101):
        assert choose_color(w, 1.0, float(u)) in (0, 2)


def test_choose_color_rounding_fallback():
    # threshold at or above the full sum: fall back to last positive color
    w = np.array([1.0, 1.0, 0.0])
    assert choose_color(w, 2.0000000000000004, 0.9999999999999999) == 1


def test_step_known_transition():
    s0 = init_urn(0, 4)
    s1, rec1 = step(s0, HM, 0.5)
    assert rec1.color == 0
    assert np.array_equal(s1.w, [1.625, 0.125, 0.0, 0.25])
    assert s1.n == 1 and s1.total == 2.0
    s2, rec2 = step(s1, HM, 0.9)
    assert rec2.color == 3
    assert np.array_equal(s2.w, [1.875, 0.125, 0.125, 0.875])
    assert s2.total == 3.0


def test_step_records_prestep_projections():
    s0 = init_urn(0, 4)
    _, rec = step(s0, HM, 0.5, pairs=EXACT_PAIRS)
    assert rec.n == 0
    assert rec.prev_w_dot_xi == (1.0, 1.0, 1.0)


def test_step_rejects_bad_u():
    with pytest.raises(ValueError):
        step(init_urn(0, 4), HM, 1.0)
    with pytest.raises(ValueError):
        step(init_urn(0, 4), HM, -0.1)


def test_projection_recursion_exact():
    # W_{n+1}' xi - W_n' xi = lam * xi[color] exactly for dyadic data
    state = init_urn(0, 4)
    rng = CounterRng(stream_seed(11, 0))
    for n in range(50):
        u = rng.u01(n)
        new, rec = step(state, HM, u, pairs=EXACT_PAIRS)
        for p, before in zip(EXACT_PAIRS, rec.prev_w_dot_xi):
            after = float(new.w @ p.xi)
            assert after - before == p.lam * p.xi[rec.color]
        state = new


def test_mass_conservation_long_run():
    obs = MassObserver()
    state = init_urn(0, 4)
    rng = CounterRng(stream_seed(3, 0))
    final = evolve(state, HM, 1_000_000, rng, observers=[obs])
    assert final.n == 1_000_000
    assert abs(final.total - 1_000_001.0) < 1e-9
    assert obs.worst < 1e-9


def test_evolve_counter_resume_bitwise():
    rng = CounterRng(stream_seed(21, 4))
    full = evolve(init_urn(1, 4), HM, 100, rng)
    part = evolve(init_urn(1, 4), HM, 60, rng)
    part = evolve(part, HM, 40, rng)
    assert full.n == part.n == 100
    assert np.array_equal(full.w, part.w)


def test_evolve_observer_sees_every_step():
    seen = []
    evolve(init_urn(0, 4), HM, 25, CounterRng(stream_seed(8, 0)), observers=[lambda r, s: seen.append((r.n, s.n))])
    assert seen == [(n, n + 1) for n in range(25)]


def test_projection_drift_observer_stays_tiny():
    obs = ProjectionDriftObserver(EXACT_PAIRS)
    evolve(init_urn(0, 4), HM, 2000, CounterRng(stream_seed(5, 0)), observers=[obs], pairs=EXACT_PAIRS)
    assert obs.worst <= 1e-12


def test_projection_refresh_matches_running_value():
    # nondyadic matrix: run across the 2**16 boundary and verify refreshed
    # projections agree with a direct dot to rounding accumulation level
    m2 = validate_matrix(np.array([[0.9, 0.1], [0.2, 0.8]]))
    pair = spectrum(m2, supplied=[(0.7, np.array([1.0, -2.0]))], normalize=False).pairs
    got = {}

    def capture(rec, new_state):
        if rec.n == 65537:
            got["incremental"] = rec.prev_w_dot_xi[0]
            got["fresh"] = float(new_state.w @ pair[0].xi) - pair[0].lam * pair[0].xi[rec.color]

    evolve(init_urn(0, 2), m2, 65538, CounterRng(stream_seed(13, 0)), observers=[capture], pairs=pair)
    assert got["incremental"] == pytest.approx(got["fresh"], abs=1e-9)


def test_evolve_rejects_negative_steps():
    with pytest.raises(ValueError):
        evolve(init_urn(0, 4), HM, -1, CounterRng(0))
