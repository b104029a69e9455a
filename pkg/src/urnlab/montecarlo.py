"""Replicated simulation engine and statistical verdicts.

Replications evolve in lockstep inside fixed-size blocks: one vectorized
draw per trial index across the whole block, with per-replication counter
streams so any single replication replays bit-identically under the scalar
``evolve`` loop.  Blocks are folded into running moment statistics in block
order, single threaded, so the merged report is byte identical for any
worker count.  Per-replication work never depends on how replications are
grouped: stream seeds are a pure function of the master seed and the global
replication index.

Moments are held as central sums (count, mean, comoment matrix, third and
fourth central sums) and merged with the standard parallel update formulas.
Comoments are contracted with einsum(optimize=False), which stays on the
single-threaded code path; BLAS reductions may reorder sums between runs.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegenerateVariance, InsufficientReplications
from .fclt import CovarianceTarget, TimeGrid
from .rng import stream_seeds, uniforms_at
from .spectral import Eigenpair, ReplacementMatrix, stationary_distribution
from .urn import _REFRESH_EVERY

_DEGENERATE_EPS = 1e-14


@dataclass(frozen=True)
class TestThresholds:
    cov_z: float = 4.0
    indep_stat: float = 4.0
    jb_max: float = 13.8
    plateau_ratio: float = 1.1
    pi_dev: float = 0.02


@dataclass(frozen=True)
class EnsembleConfig:
    replications: int
    grid: TimeGrid
    initial_color: int = 0
    master_seed: int = 0
    probe_checkpoints: tuple[int, ...] = ()
    block_size: int = 1024
    thresholds: TestThresholds = field(default_factory=TestThresholds)

    def __post_init__(self) -> None:
        if self.replications < 2:
            raise InsufficientReplications(self.replications, 2)
        if self.grid.n0 < 10:
            raise ConfigError(f"ensemble runs need n0 >= 10, got {self.grid.n0}")
        if self.block_size < 1:
            raise ConfigError(f"block_size must be positive, got {self.block_size}")
        cps = tuple(int(c) for c in self.probe_checkpoints)
        if any(c < 2 for c in cps):
            raise ConfigError(f"probe checkpoints must be >= 2, got {cps}")
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise ConfigError("probe checkpoints must be strictly increasing")
        object.__setattr__(self, "probe_checkpoints", cps)

    @property
    def n_end(self) -> int:
        last = self.probe_checkpoints[-1] if self.probe_checkpoints else 0
        return max(self.grid.n_final, last)


@dataclass(frozen=True)
class EnsembleStats:
    """Central-moment sums of the stacked G vector, probes and pi deviation.

    The stacked index is a = pair_index * T + time_index.  g_m2 is the full
    comoment matrix sum((x - mean)(x - mean)'); g_m3 and g_m4 are per
    coordinate central sums.  Probe sums are per (checkpoint, pair).
    """

    count: int
    g_mean: np.ndarray
    g_m2: np.ndarray
    g_m3: np.ndarray
    g_m4: np.ndarray
    probe_mean: np.ndarray
    probe_m2: np.ndarray
    dev_mean: float
    dev_m2: float

    @classmethod
    def from_samples(cls, g: np.ndarray, probe: np.ndarray, dev: np.ndarray) -> "EnsembleStats":
        n = g.shape[0]
        mean = g.mean(axis=0)
        d = g - mean
        m2 = np.einsum("ni,nj->ij", d, d, optimize=False)
        m3 = (d**3).sum(axis=0)
        m4 = (d**4).sum(axis=0)
        pmean = probe.mean(axis=0)
        pm2 = ((probe - pmean) ** 2).sum(axis=0)
        dmean = float(dev.mean())
        dm2 = float(((dev - dmean) ** 2).sum())
        return cls(n, mean, m2, m3, m4, pmean, pm2, dmean, dm2)

    def merge(self, other: "EnsembleStats") -> "EnsembleStats":
        na, nb = self.count, other.count
        n = na + nb
        fa, fb = float(na), float(nb)
        delta = other.g_mean - self.g_mean
        mean = self.g_mean + delta * (fb / n)
        m2 = self.g_m2 + other.g_m2 + np.outer(delta, delta) * (fa * fb / n)
        d2a = np.diag(self.g_m2).copy()
        d2b = np.diag(other.g_m2).copy()
        m3 = (
            self.g_m3
            + other.g_m3
            + delta**3 * (fa * fb * (fa - fb) / n**2)
            + 3.0 * delta * (fa * d2b - fb * d2a) / n
        )
        m4 = (
            self.g_m4
            + other.g_m4
            + delta**4 * (fa * fb * (fa * fa - fa * fb + fb * fb) / n**3)
            + 6.0 * delta**2 * (fa * fa * d2b + fb * fb * d2a) / n**2
            + 4.0 * delta * (fa * other.g_m3 - fb * self.g_m3) / n
        )
        pdelta = other.probe_mean - self.probe_mean
        pmean = self.probe_mean + pdelta * (fb / n)
        pm2 = self.probe_m2 + other.probe_m2 + pdelta**2 * (fa * fb / n)
        ddelta = other.dev_mean - self.dev_mean
        dmean = self.dev_mean + ddelta * (fb / n)
        dm2 = self.dev_m2 + other.dev_m2 + ddelta * ddelta * (fa * fb / n)
        return EnsembleStats(n, mean, m2, m3, m4, pmean, pm2, dmean, dm2)

    def covariance(self) -> np.ndarray:
        if self.count < 2:
            raise InsufficientReplications(self.count, 2)
        return self.g_m2 / (self.count - 1.0)


def _simulate_block(
    matrix: ReplacementMatrix,
    pairs: Sequence[Eigenpair],
    config: EnsembleConfig,
    start: int,
    count: int,
    want_samples: bool,
):
    k = matrix.k
    if not (0 <= config.initial_color < k):
        raise ConfigError(f"initial_color {config.initial_color} out of range for k={k}")
    P = len(pairs)
    grid = config.grid
    n0, n_final, n_end = grid.n0, grid.n_final, config.n_end
    cuts = grid.cuts
    T = len(cuts)
    cut_at = {}
    for t_idx, cval in enumerate(cuts):
        cut_at.setdefault(cval, []).append(t_idx)
    cp_at = {c: i for i, c in enumerate(config.probe_checkpoints)}
    C = len(config.probe_checkpoints)

    lams = np.array([p.lam for p in pairs])
    XI = np.stack([np.asarray(p.xi, float) for p in pairs])  # (P, k)
    regimes = [p.regime.value for p in pairs]
    R = matrix.entries
    seeds = stream_seeds(config.master_seed, start, count)

    # weight table shared with the scalar accumulator: identical expressions
    # on identical arrays keep the two paths bit-for-bit interchangeable
    logm = np.log(np.arange(n0, n_final, dtype=float))
    weights = np.stack([np.exp((lam - 0.5) * logm) for lam in lams]) if n_final > n0 else np.zeros((P, 0))

    W = np.zeros((count, k))
    W[:, config.initial_color] = 1.0
    proj = np.repeat(XI[:, config.initial_color][:, None], count, axis=1)  # (P, count)
    norms = np.ones(P)
    g_run = np.zeros((P, count))
    g_snap = np.zeros((T, P, count))
    probe_snap = np.zeros((C, P, count))

    def take_probe(ci: int, n: int) -> None:
        for i in range(P):
            if regimes[i] == "Sub":
                scale = math.sqrt(n)
            elif regimes[i] == "Critical":
                scale = math.sqrt(n * math.log(n))
            else:
                scale = norms[i]
            v = proj[i] / scale
            probe_snap[ci, i] = v * v

    for n in range(n_end):
        for t_idx in cut_at.get(n, ()):
            g_snap[t_idx] = g_run
        if n in cp_at:
            take_probe(cp_at[n], n)
        u = uniforms_at(seeds, n)
        cs = np.cumsum(W, axis=1)
        thr = u * (n + 1.0)
        hit = cs > thr[:, None]
        colors = np.argmax(hit, axis=1)
        stuck = ~hit[:, -1]
        if stuck.any():
            # same fallback as the scalar sampler: last positive-mass color
            colors[stuck] = k - 1 - np.argmax((W[stuck] > 0.0)[:, ::-1], axis=1)
        norms = norms * (1.0 + lams / (n + 1.0))
        xi_g = XI[:, colors]  # (P, count)
        if n0 <= n < n_final:
            dz = lams[:, None] * (xi_g - proj / (n + 1.0)) / norms[:, None]
            g_run = g_run + weights[:, n - n0][:, None] * dz
        W += R[colors]
        proj = proj + lams[:, None] * xi_g
        if (n + 1) % _REFRESH_EVERY == 0:
            # same color-order accumulation as the scalar refresh
            for i in range(P):
                fresh = W[:, 0] * XI[i, 0]
                for c in range(1, k):
                    fresh = fresh + W[:, c] * XI[i, c]
                proj[i] = fresh
    for t_idx in cut_at.get(n_end, ()):
        g_snap[t_idx] = g_run
    if n_end in cp_at:
        take_probe(cp_at[n_end], n_end)

    dev = np.max(np.abs(W / (n_end + 1.0) - stationary_distribution(matrix)), axis=1)
    g = g_snap.transpose(2, 1, 0).reshape(count, P * T)
    probe = probe_snap.transpose(2, 0, 1)  # (count, C, P)
    stats = EnsembleStats.from_samples(g, probe, dev)
    return (stats, g if want_samples else None)


def _block_worker(args):
    return _simulate_block(*args)


@dataclass(frozen=True)
class EnsembleResult:
    stats: EnsembleStats
    g_samples: np.ndarray | None


def run_ensemble(
    matrix: ReplacementMatrix,
    pairs: Sequence[Eigenpair],
    config: EnsembleConfig,
    workers: int = 1,
    want_samples: bool = False,
) -> EnsembleResult:
    """Simulate all replications and fold the statistics in block order.

    ``workers`` only parallelizes block simulation; the fold is sequential
    and ordered, so results do not depend on the worker count.
    """
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    N = config.replications
    bs = config.block_size
    tasks = []
    start = 0
    while start < N:
        cnt = min(bs, N - start)
        tasks.append((matrix, pairs, config, start, cnt, want_samples))
        start += cnt
    if workers == 1 or len(tasks) == 1:
        outs = [_simulate_block(*t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_block_worker, tasks))
    stats = outs[0][0]
    for s, _ in outs[1:]:
        stats = stats.merge(s)
    samples = np.concatenate([g for _, g in outs], axis=0) if want_samples else None
    return EnsembleResult(stats=stats, g_samples=samples)


@dataclass(frozen=True)
class CovRow:
    pair_a: int
    time_a: int
    pair_b: int
    time_b: int
    estimate: float
    target: float
    stderr: float
    z: float
    ok: bool


@dataclass(frozen=True)
class CovarianceVerdict:
    rows: tuple[CovRow, ...]
    z_max: float

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.rows)

    @property
    def worst_z(self) -> float:
        return max((abs(r.z) for r in self.rows), default=0.0)


def covariance_test(stats: EnsembleStats, target: CovarianceTarget, z_max: float = 4.0) -> CovarianceVerdict:
    """Compare every entry of the sample covariance against the limit target.

    The standard error of a Gaussian covariance entry is
    sqrt((V_a V_b + c_ab^2)/(N-1)) with the empirical values plugged in.
    Entries whose two variances are both numerically zero are exact-zero
    coordinates (G at t=0); they must carry a zero target and count as z=0.
    """
    N = stats.count
    if N < 1000:
        raise InsufficientReplications(N, 1000)
    shat = stats.covariance()
    tgt = target.stacked
    P = target.tensor.shape[0]
    T = target.tensor.shape[1]
    if shat.shape != tgt.shape:
        raise ConfigError(f"target shape {tgt.shape} does not match stats {shat.shape}")
    rows = []
    for a in range(P * T):
        for b in range(a, P * T):
            est = float(shat[a, b])
            want = float(tgt[a, b])
            va, vb = float(shat[a, a]), float(shat[b, b])
            if va <= _DEGENERATE_EPS or vb <= _DEGENERATE_EPS:
                if abs(want) > _DEGENERATE_EPS:
                    raise DegenerateVariance(f"entry ({a},{b}) has zero variance but target {want}")
                z = 0.0
                se = 0.0
            else:
                se = math.sqrt((va * vb + est * est) / (N - 1.0))
                z = (est - want) / se
            rows.append(
                CovRow(a // T, a % T, b // T, b % T, est, want, se, z, abs(z) <= z_max)
            )
    return CovarianceVerdict(rows=tuple(rows), z_max=z_max)


@dataclass(frozen=True)
class IncrementRow:
    pair: int
    interval: int
    corr: float
    stat: float
    ok: bool


@dataclass(frozen=True)
class IncrementVerdict:
    rows: tuple[IncrementRow, ...]
    stat_max: float

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.rows)


def independent_increments_test(
    stats: EnsembleStats, npairs: int, ntimes: int, stat_max: float = 4.0
) -> IncrementVerdict:
    """Correlation between adjacent increments of each tracked process.

    Row (i, s) correlates G_i(t_{s+1}) - G_i(t_s) with G_i(t_{s+2}) -
    G_i(t_{s+1}).  The limit process has independent increments, so
    |corr| sqrt(N) is asymptotically standard normal; values above
    ``stat_max`` flag dependence.
    """
    N = stats.count
    if N < 1000:
        raise InsufficientReplications(N, 1000)
    if ntimes < 3:
        raise ConfigError(f"increment test needs at least 3 grid times, got {ntimes}")
    C = stats.covariance()
    T = ntimes

    def inc_cov(i: int, s: int, t: int) -> float:
        a1, a2 = i * T + s, i * T + s + 1
        b1, b2 = i * T + t, i * T + t + 1
        return float(C[a2, b2] - C[a2, b1] - C[a1, b2] + C[a1, b1])

    rows = []
    for i in range(npairs):
        for s in range(T - 2):
            va = inc_cov(i, s, s)
            vb = inc_cov(i, s + 1, s + 1)
            if va <= _DEGENERATE_EPS or vb <= _DEGENERATE_EPS:
                raise DegenerateVariance(f"increment ({i},{s}) or ({i},{s + 1}) has zero variance")
            corr = inc_cov(i, s, s + 1) / math.sqrt(va * vb)
            stat = abs(corr) * math.sqrt(N)
            rows.append(IncrementRow(i, s, corr, stat, stat <= stat_max))
    return IncrementVerdict(rows=tuple(rows), stat_max=stat_max)


@dataclass(frozen=True)
class NormalityRow:
    pair: int
    time: int
    skew: float
    excess_kurtosis: float
    jb: float
    ok: bool


@dataclass(frozen=True)
class NormalityVerdict:
    rows: tuple[NormalityRow, ...]
    jb_max: float

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.rows)


def normality_test(stats: EnsembleStats, npairs: int, ntimes: int, jb_max: float = 13.8) -> NormalityVerdict:
    """Jarque-Bera statistic per stacked coordinate, skipping t = 0.

    JB = N (skew^2/6 + excess^2/24) is asymptotically chi-squared with two
    degrees of freedom; 13.8 is its 0.999 quantile.
    """
    N = stats.count
    if N < 1000:
        raise InsufficientReplications(N, 1000)
    rows = []
    for i in range(npairs):
        for s in range(1, ntimes):
            a = i * ntimes + s
            m2 = float(stats.g_m2[a, a]) / N
            if m2 <= _DEGENERATE_EPS:
                raise DegenerateVariance(f"coordinate ({i},{s}) has zero variance")
            skew = (float(stats.g_m3[a]) / N) / m2**1.5
            kurt = (float(stats.g_m4[a]) / N) / (m2 * m2) - 3.0
            jb = N * (skew * skew / 6.0 + kurt * kurt / 24.0)
            rows.append(NormalityRow(i, s, skew, kurt, jb, jb <= jb_max))
    return NormalityVerdict(rows=tuple(rows), jb_max=jb_max)


@dataclass(frozen=True)
class PlateauRow:
    pair: int
    head_max: float
    tail_max: float
    ok: bool


@dataclass(frozen=True)
class PlateauVerdict:
    rows: tuple[PlateauRow, ...]
    ratio: float
    checkpoints: tuple[int, ...]

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.rows)


def moment_boundedness_probe(
    stats: EnsembleStats, checkpoints: Sequence[int], ratio: float = 1.1
) -> PlateauVerdict:
    """Bounded-growth check on the normalized second-moment probes.

    The mean probe value over the last decade of checkpoints must not exceed
    ``ratio`` times the maximum seen at the earlier checkpoints: a diverging
    normalization shows up as a tail that keeps climbing past its own history,
    while a bounded one plateaus.
    """
    if stats.count < 1000:
        raise InsufficientReplications(stats.count, 1000)
    cps = tuple(int(c) for c in checkpoints)
    if len(cps) != stats.probe_mean.shape[0]:
        raise ConfigError("checkpoint list does not match probe statistics")
    if cps and cps[-1] < 100 * cps[0]:
        raise ConfigError(f"probe checkpoints must span at least two decades, got {cps}")
    means = stats.probe_mean
    tail_lo = cps[-1] / 10.0
    tail_idx = [ci for ci, c in enumerate(cps) if c >= tail_lo]
    head_idx = [ci for ci, c in enumerate(cps) if c < tail_lo]
    rows = []
    for p in range(means.shape[1]):
        head = float(means[head_idx, p].max())
        tail = float(means[tail_idx, p].max())
        rows.append(PlateauRow(p, head, tail, tail <= ratio * head + 1e-12))
    return PlateauVerdict(rows=tuple(rows), ratio=ratio, checkpoints=cps)


@dataclass(frozen=True)
class PiVerdict:
    mean_dev: float
    n_end: int
    threshold: float
    informational: bool

    @property
    def passed(self) -> bool:
        return True if self.informational else self.mean_dev < self.threshold


def convergence_to_pi_probe(
    stats: EnsembleStats, n_end: int, threshold: float = 0.02, min_n: int = 5000
) -> PiVerdict:
    """Mean over replications of max_c |W_c/(n+1) - pi_c| at the horizon.

    Composition convergence is slow (polynomial rates); below ``min_n`` the
    verdict is informational only and never fails the run.
    """
    return PiVerdict(
        mean_dev=stats.dev_mean, n_end=n_end, threshold=threshold, informational=n_end < min_n
    )


@dataclass(frozen=True)
class TestReport:
    """All verdicts for one ensemble plus enough metadata to rerun it."""

    covariance: CovarianceVerdict
    increments: IncrementVerdict
    normality: NormalityVerdict
    plateau: PlateauVerdict | None
    pi: PiVerdict
    meta: dict

    @property
    def passed(self) -> bool:
        parts = [self.covariance.passed, self.increments.passed, self.normality.passed, self.pi.passed]
        if self.plateau is not None:
            parts.append(self.plateau.passed)
        return all(parts)

    def to_dict(self) -> dict:
        times = self.meta["times"]
        n = self.meta["replications"]
        claims = []
        for r in self.covariance.rows:
            claims.append(
                {
                    "name": f"cov[G{r.pair_a}({times[r.time_a]}),G{r.pair_b}({times[r.time_b]})]",
                    "estimate": r.estimate,
                    "theory": r.target,
                    "stderr": r.stderr,
                    "zscore": r.z,
                    "pass": r.ok,
                }
            )
        se = 1.0 / math.sqrt(n)
        for r in self.increments.rows:
            claims.append(
                {
                    "name": f"indep[G{r.pair}:({times[r.interval]},{times[r.interval + 1]})x"
                    f"({times[r.interval + 1]},{times[r.interval + 2]})]",
                    "estimate": r.corr,
                    "theory": 0.0,
                    "stderr": se,
                    "zscore": r.stat,
                    "pass": r.ok,
                }
            )
        if self.plateau is not None:
            for r in self.plateau.rows:
                claims.append(
                    {
                        "name": f"plateau[pair{r.pair}]",
                        "estimate": r.tail_max,
                        "theory": self.plateau.ratio * r.head_max,
                        "stderr": None,
                        "zscore": None,
                        "pass": r.ok,
                    }
                )
        claims.append(
            {
                "name": "pi_convergence",
                "estimate": self.pi.mean_dev,
                "theory": self.pi.threshold,
                "stderr": None,
                "zscore": None,
                "pass": self.pi.passed,
            }
        )
        normality = [
            {
                "pair": r.pair,
                "t": times[r.time],
                "skewness": r.skew,
                "excess_kurtosis": r.excess_kurtosis,
                "jb_statistic": r.jb,
                "pass": r.ok,
            }
            for r in self.normality.rows
        ]
        return {
            "claims": claims,
            "normality": normality,
            "config": self.meta,
            "passed": self.passed,
        }


def build_report(
    matrix: ReplacementMatrix,
    pairs: Sequence[Eigenpair],
    pi: np.ndarray,
    config: EnsembleConfig,
    stats: EnsembleStats,
) -> TestReport:
    """Run every statistical verdict against one ensemble's statistics."""
    from .fclt import theoretical_covariance

    th = config.thresholds
    grid = config.grid
    target = theoretical_covariance(pairs, pi, grid.times)
    cov = covariance_test(stats, target, z_max=th.cov_z)
    inc = independent_increments_test(stats, len(pairs), len(grid.times), stat_max=th.indep_stat)
    nrm = normality_test(stats, len(pairs), len(grid.times), jb_max=th.jb_max)
    plateau = (
        moment_boundedness_probe(stats, config.probe_checkpoints, ratio=th.plateau_ratio)
        if config.probe_checkpoints
        else None
    )
    piv = convergence_to_pi_probe(stats, config.n_end, threshold=th.pi_dev)
    meta = {
        "replications": config.replications,
        "n0": grid.n0,
        "times": list(grid.times),
        "master_seed": config.master_seed,
        "block_size": config.block_size,
        "initial_color": config.initial_color,
        "probe_checkpoints": list(config.probe_checkpoints),
        "thresholds": {
            "cov_z": th.cov_z,
            "indep_stat": th.indep_stat,
            "jb_max": th.jb_max,
            "plateau_ratio": th.plateau_ratio,
            "pi_dev": th.pi_dev,
        },
        "pairs": [
            {"lambda": p.lam, "regime": p.regime.value, "xi": [float(x) for x in p.xi]} for p in pairs
        ],
        "pi": [float(x) for x in pi],
        "n_end": config.n_end,
    }
    return TestReport(covariance=cov, increments=inc, normality=nrm, plateau=plateau, pi=piv, meta=meta)
