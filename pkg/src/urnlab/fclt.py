"""Partial-sum process built from weighted martingale increments.

For an eigenpair (lam, xi) the process observed on a logarithmic clock is

    G_i(t) = sum over m in [n0, floor(n0 e^t)) of m**(lam - 1/2) dZ_{i,m},

where dZ_{i,m} = Z_{i,m+1} - Z_{i,m}.  As n0 grows this converges to a
centered Gaussian process with independent increments and covariance
min(s, t) lam_i lam_j <xi_i xi_j, pi>, where the bracket is the stationary
mean of the coordinatewise product.  This module computes G exactly from a
recorded trajectory and evaluates the limiting covariance target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, ShortTrajectory
from .martingale import normalizer_advance, normalizer_init, normalizer_closed_form, z_increment
from .spectral import Eigenpair, ReplacementMatrix
from .urn import UrnState, init_urn, evolve

MAX_TIME = 3.0


@dataclass(frozen=True)
class TimeGrid:
    """Observation times on the log clock, anchored at trial index n0."""

    n0: int
    times: tuple[float, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.n0, int) or self.n0 < 2:
            raise ConfigError(f"n0 must be an integer >= 2, got {self.n0!r}")
        ts = tuple(float(t) for t in self.times)
        if not ts or ts[0] != 0.0:
            raise ConfigError("time grid must start at 0.0")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigError(f"time grid must be strictly increasing, got {ts}")
        if ts[-1] > MAX_TIME:
            raise ConfigError(f"time horizon capped at {MAX_TIME}, got {ts[-1]}")
        object.__setattr__(self, "times", ts)

    def cut(self, t: float) -> int:
        return int(math.floor(self.n0 * math.exp(t)))

    @property
    def cuts(self) -> tuple[int, ...]:
        return tuple(self.cut(t) for t in self.times)

    @property
    def n_final(self) -> int:
        return self.cut(self.times[-1])


@dataclass(frozen=True)
class Trajectory:
    """Per-step records for trials m = m0 .. m0 + S - 1.

    dz[s, i] is the martingale increment Z_{i, m0+s+1} - Z_{i, m0+s} and
    proj[s, i] the projection W'xi_i of the state before that draw.
    """

    m0: int
    dz: np.ndarray
    proj: np.ndarray
    colors: np.ndarray

    @property
    def steps(self) -> int:
        return self.dz.shape[0]

    @property
    def npairs(self) -> int:
        return self.dz.shape[1]


def collect_trajectory(
    matrix: ReplacementMatrix,
    pairs: Sequence[Eigenpair],
    initial_color: int,
    steps: int,
    rng_stream,
) -> tuple[Trajectory, UrnState]:
    """Run the scalar urn for ``steps`` draws recording increments from m = 0."""
    P = len(pairs)
    dz = np.empty((steps, P))
    proj = np.empty((steps, P))
    colors = np.empty(steps, dtype=np.int64)
    norms = [normalizer_init(p.lam) for p in pairs]
    state = init_urn(initial_color, matrix.k)
    prev = state

    def record(rec, new_state):
        nonlocal prev
        s = rec.n
        colors[s] = rec.color
        for i, pair in enumerate(pairs):
            norms[i] = normalizer_advance(norms[i])
            proj[s, i] = rec.prev_w_dot_xi[i]
            dz[s, i] = z_increment(prev, rec.color, pair, norms[i], w_dot_xi=rec.prev_w_dot_xi[i])
        prev = new_state

    final = evolve(state, matrix, steps, rng_stream, observers=(record,), pairs=pairs)
    return Trajectory(m0=0, dz=dz, proj=proj, colors=colors), final


def _window(traj: Trajectory, grid: TimeGrid) -> tuple[np.ndarray, int]:
    cuts = grid.cuts
    need = cuts[-1]
    if traj.m0 > grid.n0 or traj.m0 + traj.steps < need:
        raise ShortTrajectory(have=traj.m0 + traj.steps, need=need)
    return np.asarray(cuts, dtype=np.int64), need


def accumulate_g(traj: Trajectory, pairs: Sequence[Eigenpair], grid: TimeGrid) -> np.ndarray:
    """G_i(t) for every pair and grid time; shape (P, T).

    Sums are half open: the increment at trial cut(t) is excluded.  Uses a
    padded cumulative sum so all grid times come from one pass.
    """
    cuts, need = _window(traj, grid)
    P = len(pairs)
    if traj.npairs != P:
        raise ShortTrajectory(have=traj.npairs, need=P)
    lo = grid.n0 - traj.m0
    hi = need - traj.m0
    logm = np.log(np.arange(grid.n0, need, dtype=float))
    out = np.empty((P, len(cuts)))
    for i, pair in enumerate(pairs):
        terms = np.exp((pair.lam - 0.5) * logm) * traj.dz[lo:hi, i]
        cs = np.concatenate(([0.0], np.cumsum(terms)))
        out[i] = cs[cuts - grid.n0]
    return out


def increment_bound_check(traj: Trajectory, pairs: Sequence[Eigenpair]) -> float:
    """Worst ratio of |dz| to its exact cap 2 lam max|xi| / Pi_{m+1}.

    The projection of a normalized composition lies in [-max|xi|, max|xi|],
    so every increment obeys the cap; a ratio above 1 means the trajectory
    was not produced by the increment formula (corruption or misalignment).
    """
    ms = np.arange(traj.m0, traj.m0 + traj.steps, dtype=np.int64)
    worst = 0.0
    for i, pair in enumerate(pairs):
        if pair.lam <= 0.0:
            continue
        cap = 2.0 * pair.lam * float(np.max(np.abs(pair.xi))) / normalizer_closed_form(pair.lam, ms + 1)
        ratios = np.abs(traj.dz[:, i]) / cap
        worst = max(worst, float(ratios.max(initial=0.0)))
    return worst


@dataclass(frozen=True)
class CovarianceTarget:
    """Limiting covariance of the stacked vector (G_i(t_s))_{i,s}."""

    times: tuple[float, ...]
    lams: tuple[float, ...]
    coeff: np.ndarray
    tensor: np.ndarray

    @property
    def stacked(self) -> np.ndarray:
        P, T = self.tensor.shape[0], self.tensor.shape[1]
        return self.tensor.reshape(P * T, P * T)


def theoretical_covariance(pairs: Sequence[Eigenpair], pi: np.ndarray, times: Sequence[float]) -> CovarianceTarget:
    """min(s, t) lam_i lam_j <xi_i xi_j, pi> as a (P, T, P, T) tensor."""
    P = len(pairs)
    ts = tuple(float(t) for t in times)
    lams = np.array([p.lam for p in pairs])
    XI = np.stack([np.asarray(p.xi, float) for p in pairs])
    bracket = (XI * pi) @ XI.T
    coeff = np.outer(lams, lams) * bracket
    tmin = np.minimum.outer(np.asarray(ts), np.asarray(ts))
    tensor = coeff[:, None, :, None] * tmin[None, :, None, :]
    return CovarianceTarget(times=ts, lams=tuple(float(l) for l in lams), coeff=coeff, tensor=tensor)


def drift_term_diagnostic(traj: Trajectory, pairs: Sequence[Eigenpair], grid: TimeGrid) -> np.ndarray:
    """Accumulated squared-projection drift entering the remainder bounds.

    For each pair the sum over m in [n0, cut(t)) of proj_m^2 / m^3, with an
    extra 1/log m factor for Critical pairs.  Shape (P, T); nondecreasing in
    t because every term is nonnegative.
    """
    cuts, need = _window(traj, grid)
    lo = grid.n0 - traj.m0
    hi = need - traj.m0
    ms = np.arange(grid.n0, need, dtype=float)
    inv3 = 1.0 / ms**3
    invlog = 1.0 / np.log(ms)
    out = np.empty((len(pairs), len(cuts)))
    for i, pair in enumerate(pairs):
        damp = inv3 * invlog if pair.regime.value == "Critical" else inv3
        terms = traj.proj[lo:hi, i] ** 2 * damp
        cs = np.concatenate(([0.0], np.cumsum(terms)))
        out[i] = cs[cuts - grid.n0]
    return out
