"""Exact small-horizon oracles, independent of the simulation path.

Everything here computes expectations by exhaustive enumeration of color
sequences or by exact deterministic moment recursions, never by sampling, so
it can certify the simulator and the martingale algebra at tolerances near
rounding error.

Enumeration walks the tree of color sequences depth-first, pruning branches
whose conditional probability is exactly zero.  The guard refuses horizons
beyond 12 or beyond k**horizon = 2e7 nodes; the oracle is a desk-scale tool.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import HorizonTooLarge, InvalidConstants
from .martingale import normalizer_advance, normalizer_init
from .spectral import Eigenpair, ReplacementMatrix
from .urn import UrnState, init_urn

MAX_HORIZON = 12
MAX_LEAVES = 20_000_000


@dataclass(frozen=True)
class PathNode:
    depth: int
    prob: float
    state: UrnState


def _check_horizon(k: int, horizon: int) -> None:
    if horizon < 0 or horizon > MAX_HORIZON or k**horizon > MAX_LEAVES:
        raise HorizonTooLarge(horizon, k)


def enumerate_paths(matrix: ReplacementMatrix, initial_color: int, horizon: int) -> Iterator[PathNode]:
    """All reachable states at depth ``horizon`` with their path probabilities.

    Probabilities over the yielded leaves sum to 1 (within rounding); branches
    with exactly zero mass are pruned and never yielded.
    """
    k = matrix.k
    _check_horizon(k, horizon)
    R = matrix.entries
    root = init_urn(initial_color, k)
    stack = [(0, 1.0, root.w)]
    while stack:
        depth, prob, w = stack.pop()
        if depth == horizon:
            yield PathNode(depth=depth, prob=prob, state=UrnState(n=depth, w=w))
            continue
        total = depth + 1.0
        for c in range(k):
            if w[c] > 0.0:
                stack.append((depth + 1, prob * (w[c] / total), w + R[c]))


def exact_expectation(matrix: ReplacementMatrix, initial_color: int, horizon: int, f: Callable[[UrnState], object]):
    """Probability-weighted sum of ``f`` over all depth-``horizon`` states."""
    acc = None
    for node in enumerate_paths(matrix, initial_color, horizon):
        term = np.asarray(f(node.state), dtype=float) * node.prob
        acc = term if acc is None else acc + term
    if acc is None:
        raise HorizonTooLarge(horizon, matrix.k)
    return float(acc) if acc.ndim == 0 else acc


def exact_expectation_profile(
    matrix: ReplacementMatrix, initial_color: int, horizon: int, f: Callable[[UrnState], object]
) -> np.ndarray:
    """E[f(state_n)] for every n = 0..horizon, from one tree walk.

    Returns an array of shape (horizon+1,) for scalar ``f`` or
    (horizon+1, dim) for vector ``f``.
    """
    k = matrix.k
    _check_horizon(k, horizon)
    R = matrix.entries
    root = init_urn(initial_color, k)
    probe = np.asarray(f(UrnState(n=0, w=root.w)), dtype=float)
    acc = np.zeros((horizon + 1,) + probe.shape)
    stack = [(0, 1.0, root.w)]
    while stack:
        depth, prob, w = stack.pop()
        acc[depth] += prob * np.asarray(f(UrnState(n=depth, w=w)), dtype=float)
        if depth == horizon:
            continue
        total = depth + 1.0
        for c in range(k):
            if w[c] > 0.0:
                stack.append((depth + 1, prob * (w[c] / total), w + R[c]))
    return acc


@dataclass(frozen=True)
class MartingaleCheck:
    worst: tuple[float, ...]
    nodes: int
    tol: float

    @property
    def passed(self) -> bool:
        return max(self.worst, default=0.0) <= self.tol


def verify_martingale(
    matrix: ReplacementMatrix,
    pairs: Sequence[Eigenpair],
    initial_color: int,
    horizon: int,
    tol: float = 1e-12,
    normalizer_shift: int = 0,
) -> MartingaleCheck:
    """Check E[Z_{n+1} | state] = Z_n at every internal node of the tree.

    The conditional expectation is formed exactly from the child values and
    the draw distribution w_c/(n+1); the worst absolute violation per pair is
    reported.  ``normalizer_shift`` offsets the normalizer index and is a
    debug control: any nonzero shift must break the identity at size ~lam/n.
    """
    k = matrix.k
    _check_horizon(k, horizon)
    if normalizer_shift < 0:
        raise ValueError("normalizer_shift must be nonnegative")
    R = matrix.entries
    lams = [p.lam for p in pairs]
    xis = [np.asarray(p.xi, float) for p in pairs]
    norms: list[list[float]] = []
    for lam in lams:
        ns = normalizer_init(lam)
        vals = [ns.value]
        for _ in range(horizon + 1 + max(0, normalizer_shift)):
            ns = normalizer_advance(ns)
            vals.append(ns.value)
        norms.append(vals)
    worst = [0.0] * len(pairs)
    nodes = 0
    root = init_urn(initial_color, k)
    proj0 = tuple(float(root.w @ xi) for xi in xis)
    stack = [(0, root.w, proj0)]
    while stack:
        depth, w, proj = stack.pop()
        nodes += 1
        total = depth + 1.0
        child_projs = []
        for c in range(k):
            if w[c] > 0.0:
                cp = tuple(proj[i] + lams[i] * float(xis[i][c]) for i in range(len(pairs)))
                child_projs.append((c, cp))
        for i in range(len(pairs)):
            z_here = proj[i] / norms[i][depth + normalizer_shift]
            z_next = sum((w[c] / total) * cp[i] for c, cp in child_projs) / norms[i][depth + 1 + normalizer_shift]
            dev = abs(z_next - z_here)
            if dev > worst[i]:
                worst[i] = dev
        if depth + 1 < horizon:
            for c, cp in child_projs:
                stack.append((depth + 1, w + R[c], cp))
    return MartingaleCheck(worst=tuple(worst), nodes=nodes, tol=tol)


@dataclass(frozen=True)
class KerstingReport:
    betas: np.ndarray
    bound: float
    tail_max: float
    slack: float
    hypothesis_ok: bool

    @property
    def passed(self) -> bool:
        return self.tail_max <= self.bound + self.slack


def kersting_iterate(alpha: Callable[[int], float], beta0: float, c: float, d: float, steps: int) -> KerstingReport:
    """Iterate beta_{n+1} = beta_n (1 - c a_n) + d a_n and test the limsup bound.

    The contraction argument gives limsup beta <= d/c when a_n -> 0,
    sum a_n = inf and c, d > 0.  The verdict checks the max of the last 10%
    of iterates against d/c plus a slack of 10 (d/c) max(tail a).  Both
    hypotheses are only checkable on the evaluated prefix: the decay check
    compares head and tail maxima of a, and the divergence check requires the
    second half of the partial sums to contribute at least 1% of the total.
    """
    if c <= 0.0 or d <= 0.0:
        raise InvalidConstants(c, d)
    if steps < 10:
        raise InvalidConstants(float(steps), d)
    alphas = np.array([float(alpha(n)) for n in range(1, steps + 1)])
    betas = np.empty(steps + 1)
    betas[0] = beta0
    b = float(beta0)
    for idx in range(steps):
        a = alphas[idx]
        b = b * (1.0 - c * a) + d * a
        betas[idx + 1] = b
    tail_from = steps - max(1, steps // 10)
    tail_max = float(betas[tail_from:].max())
    bound = d / c
    slack = 10.0 * bound * float(alphas[tail_from - 1 :].max())
    head_alpha = float(alphas[: max(1, steps // 10)].max())
    tail_alpha = float(alphas[tail_from - 1 :].max())
    decays = tail_alpha == 0.0 or tail_alpha <= 0.5 * head_alpha
    s_full = float(alphas.sum())
    s_half = float(alphas[: steps // 2].sum())
    diverges = s_full > 0.0 and (s_full - s_half) >= 0.01 * s_full
    return KerstingReport(betas=betas, bound=bound, tail_max=tail_max, slack=slack, hypothesis_ok=decays and diverges)


def critical_rate_limit(n):
    """kappa_n = (n+1)log(n+1) - n log n - log(n+1), simplified to n log1p(1/n).

    Strictly increasing toward 1; log1p keeps the value accurate to rounding
    even at n = 1e6 where the plain expression loses ~1e-10.
    """
    n_arr = np.asarray(n, dtype=float)
    if np.any(n_arr < 1):
        raise ValueError("kappa_n requires n >= 1")
    result = n_arr * np.log1p(1.0 / n_arr)
    return float(result) if result.ndim == 0 else result


@dataclass(frozen=True)
class RecursionCheck:
    regime: str
    ns: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    tol: float
    monotone_ok: bool

    @property
    def worst(self) -> float:
        if self.lhs.size == 0:
            return 0.0
        return float(np.max(np.abs(self.lhs - self.rhs)))

    @property
    def passed(self) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.lhs), initial=0.0)))
        return self.worst <= self.tol * scale and self.monotone_ok


def second_moment_recursion_check(
    matrix: ReplacementMatrix,
    pair: Eigenpair,
    initial_color: int,
    horizon: int,
    tol: float = 1e-12,
) -> RecursionCheck:
    """Check the exact one-step second-moment recursion against enumeration.

    The underlying identity is
    E[(W'xi)^2_{n+1}] = E[(W'xi)^2_n] (1 + 2 lam/(n+1)) + lam^2 <E W_n/(n+1), xi^2>,
    presented in the normalization matching the pair's regime: X^2 = (W'xi)^2/n
    for Sub, Y^2 = (W'xi)^2/(n log n) for Critical (natural log, n >= 2), and
    Z^2 = (W'xi)^2 / normalizer^2 for Super, where the recursion contracts as
    (1 - lam^2/(n+1+lam)^2) and the sequence E Z^2 must be nondecreasing.
    """
    lam = pair.lam
    xi = np.asarray(pair.xi, float)
    xi2 = xi * xi

    def f(state: UrnState):
        proj = float(state.w @ xi)
        return (proj * proj, float(state.w @ xi2) / (state.n + 1.0))

    prof = exact_expectation_profile(matrix, initial_color, horizon, f)
    e_proj2 = prof[:, 0]
    v = prof[:, 1]
    regime = pair.regime.value
    if regime == "Sub":
        start = 1
        scale = np.arange(horizon + 1, dtype=float)
        scale[0] = np.nan
    elif regime == "Critical":
        start = 2
        ns_all = np.arange(horizon + 1, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = ns_all * np.log(ns_all)
        scale[:2] = np.nan
    else:
        start = 0
        norm = normalizer_init(lam)
        vals = [norm.value]
        for _ in range(horizon):
            norm = normalizer_advance(norm)
            vals.append(norm.value)
        scale = np.asarray(vals) ** 2
    if horizon < start + 1:
        raise HorizonTooLarge(horizon, matrix.k)
    with np.errstate(invalid="ignore"):
        moment = e_proj2 / scale
    ns = np.arange(start, horizon, dtype=float)
    lhs = moment[start + 1 : horizon + 1]
    if regime == "Sub":
        rhs = moment[start:horizon] * (1.0 - 1.0 / (ns + 1.0)) * (1.0 + 2.0 * lam / (ns + 1.0)) + (
            lam * lam / (ns + 1.0)
        ) * v[start:horizon]
        monotone_ok = True
    elif regime == "Critical":
        shrink = (ns * np.log(ns)) / ((ns + 1.0) * np.log(ns + 1.0))
        rhs = moment[start:horizon] * shrink * (1.0 + 2.0 * lam / (ns + 1.0)) + (
            lam * lam / ((ns + 1.0) * np.log(ns + 1.0))
        ) * v[start:horizon]
        monotone_ok = True
    else:
        contract = 1.0 - (lam / (ns + 1.0 + lam)) ** 2
        rhs = moment[start:horizon] * contract + (lam * lam) * v[start:horizon] / scale[start + 1 : horizon + 1]
        monotone_ok = bool(np.all(np.diff(moment[start:]) >= -tol))
    return RecursionCheck(regime=regime, ns=ns.astype(int), lhs=lhs, rhs=rhs, tol=tol, monotone_ok=monotone_ok)


def exact_mean_w(matrix: ReplacementMatrix, initial_color: int, n_max: int) -> np.ndarray:
    """E W_n for n = 0..n_max via the deterministic recursion
    E W_{n+1} = (I + R'/(n+1)) E W_n.  Shape (n_max+1, k)."""
    Rt = matrix.entries.T
    out = np.zeros((n_max + 1, matrix.k))
    w = np.zeros(matrix.k)
    w[initial_color] = 1.0
    out[0] = w
    for n in range(n_max):
        w = w + (Rt @ w) / (n + 1.0)
        out[n + 1] = w
    return out


def exact_g_covariance(
    matrix: ReplacementMatrix,
    pairs: Sequence[Eigenpair],
    initial_color: int,
    n0: int,
    cuts: Sequence[int],
) -> np.ndarray:
    """Exact finite-n covariance of the partial-sum process G.

    G_i(t) sums m^{lam_i - 1/2} (Z_{i,m+1} - Z_{i,m}) over m in [n0, cut(t)).
    Because increments are martingale differences, Cov(G_i(s), G_j(t)) is the
    sum over m < cut(min(s,t)) of the expected conditional cross moment, and
    every ingredient follows a closed linear recursion in the first and second
    moments of the projections.  Exact up to rounding; no sampling.

    Returns an array of shape (P, T, P, T) over (pair, time, pair, time).
    """
    P = len(pairs)
    T = len(cuts)
    lams = np.array([p.lam for p in pairs])
    XI = np.stack([np.asarray(p.xi, float) for p in pairs])
    cross = XI[:, None, :] * XI[None, :, :]  # (P, P, k) coordinate products
    Rt = matrix.entries.T
    n_end = max(cuts) if cuts else n0
    ew = np.zeros(matrix.k)
    ew[initial_color] = 1.0
    u = np.outer(XI @ ew, XI @ ew)  # E[(W'xi_i)(W'xi_j)] at n=0
    norm = np.ones(P)
    acc = np.zeros((P, P))
    snaps = np.zeros((T, P, P))
    cut_list = sorted((c, idx) for idx, c in enumerate(cuts))
    ci = 0
    for m in range(n_end):
        while ci < T and cut_list[ci][0] == m:
            snaps[cut_list[ci][1]] = acc
            ci += 1
        norm = norm * (1.0 + lams / (m + 1.0))
        if m >= n0:
            a = cross @ ew / (m + 1.0)  # (P,P): E <xi_i xi_j, W/(m+1)>
            cond = a - u / ((m + 1.0) ** 2)
            weight = np.exp((lams - 0.5) * math.log(m))
            acc = acc + np.outer(weight * lams / norm, weight * lams / norm) * cond
        a_now = cross @ ew / (m + 1.0)
        u = u * (1.0 + (lams[:, None] + lams[None, :]) / (m + 1.0)) + np.outer(lams, lams) * a_now
        ew = ew + (Rt @ ew) / (m + 1.0)
    while ci < T and cut_list[ci][0] == n_end:
        snaps[cut_list[ci][1]] = acc
        ci += 1
    out = np.zeros((P, T, P, T))
    for s in range(T):
        for t in range(T):
            earlier = s if cuts[s] <= cuts[t] else t
            out[:, s, :, t] = snaps[earlier]
    return out
