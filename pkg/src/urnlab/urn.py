"""The urn process: composition vector, sampling rule, evolution loop.

State after n draws is the composition vector W_n with total mass n + 1
(one initial ball, each draw adds one row of the replacement matrix, rows sum
to 1).  A draw picks color c with probability w_c / (n+1), realized by
inverse CDF over the cumulative masses: the minimal index whose cumulative
mass exceeds u * (n+1).

Projections W_n' xi for tracked eigenpairs satisfy the exact one-step
recursion W_{n+1}' xi = W_n' xi + lam * xi[c]; ``evolve`` maintains them
incrementally (one multiply-add per pair per step) and records the pre-step
values on each DrawRecord so martingale increments can be formed without
re-dotting the state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import BadColor
from .spectral import Eigenpair, ReplacementMatrix

# Incremental projections are refreshed from the composition at this cadence
# to bound float drift on very long runs.  The refresh accumulates in color
# order so scalar and vectorized evolutions stay bit-identical.
_REFRESH_EVERY = 65536


def _ordered_dot(w: np.ndarray, xi: np.ndarray) -> float:
    acc = float(w[0]) * float(xi[0])
    for c in range(1, w.shape[0]):
        acc += float(w[c]) * float(xi[c])
    return acc


@dataclass(frozen=True)
class UrnState:
    n: int
    w: np.ndarray

    @property
    def k(self) -> int:
        return self.w.shape[0]

    @property
    def total(self) -> float:
        return float(self.w.sum())


@dataclass(frozen=True)
class DrawRecord:
    """What happened at trial index n (the step taking state n to n+1)."""

    n: int
    color: int
    prev_w_dot_xi: tuple[float, ...]


Observer = Callable[[DrawRecord, UrnState], None]


def init_urn(color: int, k: int) -> UrnState:
    if k < 2:
        raise BadColor(color, k)
    if not (0 <= color < k):
        raise BadColor(color, k)
    w = np.zeros(k)
    w[color] = 1.0
    return UrnState(n=0, w=w)


def choose_color(w: np.ndarray, total: float, u: float) -> int:
    """Minimal index whose cumulative mass exceeds u * total."""
    threshold = u * total
    acc = 0.0
    last_positive = 0
    for c, wc in enumerate(w):
        acc += wc
        if acc > threshold:
            return c
        if wc > 0.0:
            last_positive = c
    # float drift can leave the full sum at or below the threshold when u is
    # within rounding of 1; fall back to the last color with positive mass
    return last_positive


def step(
    state: UrnState,
    matrix: ReplacementMatrix,
    u: float,
    pairs: Sequence[Eigenpair] = (),
) -> tuple[UrnState, DrawRecord]:
    """One draw: sample a color from W_n/(n+1), add its replacement row."""
    if not (0.0 <= u < 1.0):
        raise ValueError(f"u must lie in [0, 1), got {u!r}")
    w = state.w
    color = choose_color(w, state.n + 1.0, u)
    record = DrawRecord(
        n=state.n,
        color=color,
        prev_w_dot_xi=tuple(float(w @ p.xi) for p in pairs),
    )
    new_state = UrnState(n=state.n + 1, w=w + matrix.entries[color])
    return new_state, record


def evolve(
    state: UrnState,
    matrix: ReplacementMatrix,
    steps: int,
    rng_stream,
    observers: Sequence[Observer] = (),
    pairs: Sequence[Eigenpair] = (),
) -> UrnState:
    """Apply ``steps`` draws, feeding each (record, new_state) to observers.

    ``rng_stream`` must provide ``u01(counter)``; the counter used for the
    step out of state n is n itself, so a trajectory can be resumed from any
    intermediate state and reproduce the original draws.  Projections for
    ``pairs`` are carried incrementally across steps and refreshed from the
    composition every 2**16 steps.

    Memory is constant in ``steps``; whatever observers retain is their own.
    """
    if steps < 0:
        raise ValueError(f"steps must be nonnegative, got {steps}")
    R = matrix.entries
    n = state.n
    w = state.w.copy()
    lams = [p.lam for p in pairs]
    xis = [np.asarray(p.xi, dtype=float) for p in pairs]
    proj = [float(w @ xi) for xi in xis]
    for _ in range(steps):
        u = rng_stream.u01(n)
        color = choose_color(w, n + 1.0, u)
        record = DrawRecord(n=n, color=color, prev_w_dot_xi=tuple(proj))
        w = w + R[color]
        n += 1
        for i, (lam, xi) in enumerate(zip(lams, xis)):
            proj[i] += lam * float(xi[color])
        if n % _REFRESH_EVERY == 0:
            for i, xi in enumerate(xis):
                proj[i] = _ordered_dot(w, xi)
        if observers:
            new_state = UrnState(n=n, w=w)
            for obs in observers:
                obs(record, new_state)
    return UrnState(n=n, w=w)


class MassObserver:
    """Tracks the worst deviation of total mass from n + 1."""

    def __init__(self) -> None:
        self.worst = 0.0

    def __call__(self, record: DrawRecord, state: UrnState) -> None:
        dev = abs(state.total - (state.n + 1.0))
        if dev > self.worst:
            self.worst = dev


class ProjectionDriftObserver:
    """Compares carried projections against fresh dot products.

    ``evolve`` hands each record the pre-step carried projection; the fresh
    dot product of the new state lags it by exactly lam * xi[color], so the
    drift observed here is pure float accumulation error.
    """

    def __init__(self, pairs: Sequence[Eigenpair]):
        self.pairs = list(pairs)
        self.worst = 0.0

    def __call__(self, record: DrawRecord, state: UrnState) -> None:
        for carried, pair in zip(record.prev_w_dot_xi, self.pairs):
            fresh = float(state.w @ pair.xi)
            expected = carried + pair.lam * float(pair.xi[record.color])
            dev = abs(fresh - expected)
            if dev > self.worst:
                self.worst = dev
