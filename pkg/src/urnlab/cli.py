"""Command line entry point: config parsing, dispatch, file emission.

Subcommands:
  spectrum   validate the matrix, print stationary distribution + eigenpairs
  verify     exact oracle suite (martingale, normalizer, contraction, rates)
  fclt       full replication ensemble with statistical verdicts
  simulate   raw single-trajectory dump for inspection

Exit codes: 0 success, 1 check/verdict failure, 2 config error, 3 spectral
computation failure (spectrum subcommand only).  stdout carries exactly one
machine-readable JSON document; human diagnostics go to stderr.

Config files are JSON with these fields (all optional except matrix):
  matrix, initial_color, eigenpairs ([{"lambda":, "xi":}] taken at the given
  scale), n0, t_grid, replications, master_seed, probes (moment checkpoint
  trial indices), thresholds ({cov_z, indep_stat, jb_max, plateau_ratio,
  pi_dev}), out_dir, block_size, horizon + normalizer_shift (verify), steps
  (simulate).  Unknown fields are rejected.

CSV columns:
  covariance.csv  i, j, s, t, empirical, theory, stderr, z
  moments.csv     statistic, n, value, stderr
  trajectory.csv  m, color, then proj_<i> and dz_<i> per tracked pair
  diagnostics.csv n, then z_<i> and scaled_<i> per tracked pair
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, replace as dataclass_replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, SpectralError, UrnlabError
from .fclt import TimeGrid, collect_trajectory
from .martingale import normalizer_advance, normalizer_closed_form, normalizer_init
from .montecarlo import EnsembleConfig, TestThresholds, build_report, run_ensemble
from .oracle import critical_rate_limit, kersting_iterate, second_moment_recursion_check, verify_martingale
from .rng import CounterRng, stream_seed
from .spectral import ReplacementMatrix, Spectrum, spectrum, validate_matrix

_DEFAULT_TGRID = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class RunConfig:
    matrix: tuple[tuple[float, ...], ...]
    initial_color: int = 0
    eigenpairs: tuple[tuple[float, tuple[float, ...]], ...] | None = None
    n0: int = 2000
    t_grid: tuple[float, ...] = _DEFAULT_TGRID
    replications: int = 10000
    master_seed: int = 0
    probes: tuple[int, ...] = ()
    thresholds: TestThresholds = TestThresholds()
    out_dir: str = "."
    block_size: int = 1024
    horizon: int = 6
    normalizer_shift: int = 0
    steps: int = 1000


_THRESHOLD_FIELDS = ("cov_z", "indep_stat", "jb_max", "plateau_ratio", "pi_dev")
_TOP_FIELDS = (
    "matrix",
    "initial_color",
    "eigenpairs",
    "n0",
    "t_grid",
    "replications",
    "master_seed",
    "probes",
    "thresholds",
    "out_dir",
    "block_size",
    "horizon",
    "normalizer_shift",
    "steps",
)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _as_int(raw, field: str) -> int:
    _require(isinstance(raw, int) and not isinstance(raw, bool), f"{field} must be an integer, got {raw!r}")
    return raw


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON config document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "config root must be a JSON object")
    unknown = sorted(set(doc) - set(_TOP_FIELDS))
    _require(not unknown, f"unknown config fields: {unknown}")
    _require("matrix" in doc, "config requires a matrix")
    try:
        return _build_config(doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


def _build_config(doc: dict) -> RunConfig:
    matrix = doc["matrix"]
    _require(
        isinstance(matrix, list) and matrix and all(isinstance(r, list) for r in matrix),
        "matrix must be a list of rows",
    )
    rows = tuple(tuple(float(x) for x in r) for r in matrix)

    pairs = None
    if doc.get("eigenpairs") is not None:
        raw_pairs = doc["eigenpairs"]
        _require(isinstance(raw_pairs, list) and raw_pairs, "eigenpairs must be a nonempty list")
        pairs = []
        for entry in raw_pairs:
            _require(isinstance(entry, dict), "each eigenpair must be an object")
            extra = sorted(set(entry) - {"lambda", "xi"})
            _require(not extra, f"unknown eigenpair fields: {extra}")
            _require("lambda" in entry and "xi" in entry, "eigenpair needs lambda and xi")
            pairs.append((float(entry["lambda"]), tuple(float(x) for x in entry["xi"])))
        pairs = tuple(pairs)

    th = doc.get("thresholds", {})
    _require(isinstance(th, dict), "thresholds must be an object")
    extra = sorted(set(th) - set(_THRESHOLD_FIELDS))
    _require(not extra, f"unknown threshold fields: {extra}")
    thresholds = TestThresholds(**{k: float(v) for k, v in th.items()})

    t_grid = tuple(float(t) for t in doc.get("t_grid", _DEFAULT_TGRID))
    probes = tuple(_as_int(p, "probes") for p in doc.get("probes", ()))
    out_dir = doc.get("out_dir", ".")
    _require(isinstance(out_dir, str), "out_dir must be a string")

    return RunConfig(
        matrix=rows,
        initial_color=_as_int(doc.get("initial_color", 0), "initial_color"),
        eigenpairs=pairs,
        n0=_as_int(doc.get("n0", 2000), "n0"),
        t_grid=t_grid,
        replications=_as_int(doc.get("replications", 10000), "replications"),
        master_seed=_as_int(doc.get("master_seed", 0), "master_seed"),
        probes=probes,
        thresholds=thresholds,
        out_dir=out_dir,
        block_size=_as_int(doc.get("block_size", 1024), "block_size"),
        horizon=_as_int(doc.get("horizon", 6), "horizon"),
        normalizer_shift=_as_int(doc.get("normalizer_shift", 0), "normalizer_shift"),
        steps=_as_int(doc.get("steps", 1000), "steps"),
    )


def serialize_config(cfg: RunConfig) -> str:
    """Canonical JSON for a config; parse(serialize(parse(x))) == parse(x)."""
    doc = {
        "matrix": [list(r) for r in cfg.matrix],
        "initial_color": cfg.initial_color,
        "eigenpairs": None
        if cfg.eigenpairs is None
        else [{"lambda": lam, "xi": list(xi)} for lam, xi in cfg.eigenpairs],
        "n0": cfg.n0,
        "t_grid": list(cfg.t_grid),
        "replications": cfg.replications,
        "master_seed": cfg.master_seed,
        "probes": list(cfg.probes),
        "thresholds": {
            "cov_z": cfg.thresholds.cov_z,
            "indep_stat": cfg.thresholds.indep_stat,
            "jb_max": cfg.thresholds.jb_max,
            "plateau_ratio": cfg.thresholds.plateau_ratio,
            "pi_dev": cfg.thresholds.pi_dev,
        },
        "out_dir": cfg.out_dir,
        "block_size": cfg.block_size,
        "horizon": cfg.horizon,
        "normalizer_shift": cfg.normalizer_shift,
        "steps": cfg.steps,
    }
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _build_matrix(cfg: RunConfig) -> ReplacementMatrix:
    return validate_matrix(np.array(cfg.matrix, dtype=float))


def _build_spectrum(cfg: RunConfig, matrix: ReplacementMatrix) -> Spectrum:
    # supplied eigenpairs are certified but kept at the caller's scale; the
    # covariance target scales with xi, so the scale is part of the contract
    if cfg.eigenpairs is not None:
        return spectrum(matrix, supplied=cfg.eigenpairs, normalize=False)
    return spectrum(matrix)


def _plain(obj):
    """Reduce numpy scalars and containers to JSON-native types."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _emit(doc: dict, path: Path | None) -> None:
    text = json.dumps(_plain(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"
    sys.stdout.write(text)
    if path is not None:
        path.write_text(text)


def _out_dir(cfg: RunConfig, override: str | None) -> Path:
    out = Path(override) if override is not None else Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_spectrum(cfg: RunConfig, out_override: str | None) -> int:
    try:
        matrix = _build_matrix(cfg)
    except SpectralError as exc:
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    try:
        spec = _build_spectrum(cfg, matrix)
    except SpectralError as exc:
        print(f"spectral error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    out = _out_dir(cfg, out_override)
    _emit(spec.as_dict(), out / "spectrum.json")
    return 0


def cmd_verify(cfg: RunConfig, out_override: str | None) -> int:
    matrix = _build_matrix(cfg)
    spec = _build_spectrum(cfg, matrix)
    pairs = spec.pairs

    chk = verify_martingale(
        matrix, pairs, cfg.initial_color, cfg.horizon, normalizer_shift=cfg.normalizer_shift
    )
    martingale = {
        "worst": [float(w) for w in chk.worst],
        "nodes": chk.nodes,
        "tol": chk.tol,
        "normalizer_shift": cfg.normalizer_shift,
        "pass": chk.passed,
    }

    n_max = 10000
    ns = np.arange(1, n_max + 1)
    worst_rel = 0.0
    for p in pairs:
        factors = 1.0 + p.lam / ns
        running = np.cumprod(factors)
        closed = normalizer_closed_form(p.lam, ns)
        worst_rel = max(worst_rel, float(np.max(np.abs(running - closed) / closed)))
    normalizer = {"n_max": n_max, "max_rel_err": worst_rel, "tol": 1e-10, "pass": worst_rel < 1e-10}

    k_fixed = kersting_iterate(lambda n: 1.0 / n, 1.0, 1.0, 1.0, 10000)
    k_reach = kersting_iterate(lambda n: 1.0 / n, 5.0, 1.0, 1.0, 10000)
    k_flag = kersting_iterate(lambda n: 1.0 / n**2, 5.0, 1.0, 1.0, 10000)
    kersting = [
        {
            "name": "fixed_point_exact",
            "tail_max": k_fixed.tail_max,
            "bound": k_fixed.bound,
            "pass": bool(np.all(k_fixed.betas == 1.0)),
        },
        {
            "name": "harmonic_reaches_bound",
            "final": float(k_reach.betas[-1]),
            "bound": k_reach.bound,
            "pass": bool(abs(k_reach.betas[-1] - k_reach.bound) < 0.01 and k_reach.passed and k_reach.hypothesis_ok),
        },
        {
            "name": "summable_alpha_flags_hypothesis",
            "hypothesis_ok": k_flag.hypothesis_ok,
            "pass": not k_flag.hypothesis_ok,
        },
    ]

    grid_ns = np.arange(1, 10001)
    kappas = critical_rate_limit(grid_ns)
    at_big = float(critical_rate_limit(10**6))
    kappa = {
        "monotone": bool(np.all(np.diff(kappas) > 0.0)),
        "at_1e6": at_big,
        "dev_from_1": abs(1.0 - at_big),
        "pass": bool(np.all(np.diff(kappas) > 0.0) and abs(1.0 - at_big) < 1e-6),
    }

    recursions = []
    for p in pairs:
        rc = second_moment_recursion_check(matrix, p, cfg.initial_color, cfg.horizon)
        recursions.append(
            {
                "lambda": p.lam,
                "regime": rc.regime,
                "worst": rc.worst,
                "monotone_ok": rc.monotone_ok,
                "pass": rc.passed,
            }
        )

    passed = (
        martingale["pass"]
        and normalizer["pass"]
        and all(e["pass"] for e in kersting)
        and kappa["pass"]
        and all(e["pass"] for e in recursions)
    )
    doc = {
        "martingale": martingale,
        "normalizer": normalizer,
        "kersting": kersting,
        "kappa": kappa,
        "recursions": recursions,
        "passed": passed,
    }
    out = _out_dir(cfg, out_override)
    _emit(doc, out / "verify.json")
    return 0 if passed else 1


def _write_covariance_csv(path: Path, report) -> None:
    times = report.meta["times"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "s", "t", "empirical", "theory", "stderr", "z"])
        for r in report.covariance.rows:
            w.writerow(
                [r.pair_a, r.pair_b, times[r.time_a], times[r.time_b], r.estimate, r.target, r.stderr, r.z]
            )


_PROBE_NAME = {"Sub": "X2", "Critical": "Y2", "Super": "Z2"}


def _write_moments_csv(path: Path, stats, pairs, checkpoints) -> None:
    n = stats.count
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["statistic", "n", "value", "stderr"])
        for ci, cp in enumerate(checkpoints):
            for pi_idx, pair in enumerate(pairs):
                name = f"{_PROBE_NAME[pair.regime.value]}[{pi_idx}]"
                value = float(stats.probe_mean[ci, pi_idx])
                se = math.sqrt(float(stats.probe_m2[ci, pi_idx]) / (n - 1.0) / n)
                w.writerow([name, cp, value, se])


def cmd_fclt(cfg: RunConfig, out_override: str | None, workers: int) -> int:
    matrix = _build_matrix(cfg)
    spec = _build_spectrum(cfg, matrix)
    grid = TimeGrid(cfg.n0, cfg.t_grid)
    ens = EnsembleConfig(
        replications=cfg.replications,
        grid=grid,
        initial_color=cfg.initial_color,
        master_seed=cfg.master_seed,
        probe_checkpoints=cfg.probes,
        block_size=cfg.block_size,
        thresholds=cfg.thresholds,
    )
    result = run_ensemble(matrix, spec.pairs, ens, workers=workers)
    report = build_report(matrix, spec.pairs, spec.pi, ens, result.stats)
    out = _out_dir(cfg, out_override)
    doc = report.to_dict()
    _emit(doc, out / "report.json")
    _write_covariance_csv(out / "covariance.csv", report)
    _write_moments_csv(out / "moments.csv", result.stats, spec.pairs, ens.probe_checkpoints)
    return 0 if report.passed else 1


def cmd_simulate(cfg: RunConfig, out_override: str | None) -> int:
    matrix = _build_matrix(cfg)
    spec = _build_spectrum(cfg, matrix)
    pairs = spec.pairs
    rng = CounterRng(stream_seed(cfg.master_seed, 0))
    traj, final = collect_trajectory(matrix, pairs, cfg.initial_color, cfg.steps, rng)
    out = _out_dir(cfg, out_override)

    with (out / "trajectory.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        header = ["m", "color"]
        for i in range(len(pairs)):
            header += [f"proj_{i}", f"dz_{i}"]
        w.writerow(header)
        for m in range(traj.steps):
            row = [m, int(traj.colors[m])]
            for i in range(len(pairs)):
                row += [traj.proj[m, i], traj.dz[m, i]]
            w.writerow(row)

    with (out / "diagnostics.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        header = ["n"]
        for i in range(len(pairs)):
            header += [f"z_{i}", f"scaled_{i}"]
        w.writerow(header)
        norms = [normalizer_init(p.lam) for p in pairs]
        proj = traj.proj
        for n in range(2, traj.steps + 1):
            while norms[0].n < n:
                norms = [normalizer_advance(s) for s in norms]
            row = [n]
            if n < traj.steps:
                projs = proj[n]
            else:
                projs = [float(final.w @ p.xi) for p in pairs]
            for i, p in enumerate(pairs):
                z = projs[i] / norms[i].value
                if p.regime.value == "Sub":
                    scaled = projs[i] / math.sqrt(n)
                elif p.regime.value == "Critical":
                    scaled = projs[i] / math.sqrt(n * math.log(n))
                else:
                    scaled = z
                row += [z, scaled]
            w.writerow(row)

    _emit(
        {
            "steps": traj.steps,
            "final_n": final.n,
            "final_total": final.total,
            "files": ["trajectory.csv", "diagnostics.csv"],
        },
        None,
    )
    return 0


def _resolve_workers(flag: int | None) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("URNLAB_WORKERS")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"URNLAB_WORKERS must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="urnlab",
        description="Urn-process spectral martingale verification suite",
        epilog=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("spectrum", "validate matrix, emit stationary distribution and eigenpairs"),
        ("verify", "run the exact oracle suite"),
        ("fclt", "run the replication ensemble and statistical verdicts"),
        ("simulate", "dump one raw trajectory"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to JSON config")
        p.add_argument("--out-dir", default=None, help="output directory (overrides config)")
        p.add_argument("--workers", type=int, default=None, help="worker processes (fclt)")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--replications", type=int, default=None, help="override replications")
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text)
        if args.seed is not None:
            cfg = dataclass_replace(cfg, master_seed=args.seed)
        if args.replications is not None:
            cfg = dataclass_replace(cfg, replications=args.replications)
        workers = _resolve_workers(args.workers)
        if args.command == "spectrum":
            return cmd_spectrum(cfg, args.out_dir)
        if args.command == "verify":
            return cmd_verify(cfg, args.out_dir)
        if args.command == "fclt":
            return cmd_fclt(cfg, args.out_dir, workers)
        return cmd_simulate(cfg, args.out_dir)
    except SpectralError as exc:
        # matrix-level validation failures surface during setup of any command
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except UrnlabError as exc:
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
