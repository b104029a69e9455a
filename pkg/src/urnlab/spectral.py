"""Replacement-matrix validation and real eigenstructure.

A replacement matrix is row stochastic: drawing color ``c`` adds row ``c`` to
the composition vector.  Everything downstream (martingale normalizers, the
Gaussian limit covariance) is driven by the real eigenvalues of the matrix in
the open interval (-1, 1) and their right eigenvectors, so this module rejects
anything it cannot certify: negative entries, bad row sums, reducible
positivity patterns, complex spectra, and candidate eigenpairs whose residual
is above tolerance.

Eigenvalues are computed by Householder reduction to Hessenberg form followed
by an explicit double-shift QR iteration to real Schur form; any converged
2x2 diagonal block with negative discriminant signals a complex pair and is
rejected.  The matrices here are tiny (k <= ~16), so the cost of a
self-contained iteration is irrelevant and every returned pair is verified
directly against the matrix rather than trusted from a library decomposition.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ComplexSpectrum,
    NegativeEntry,
    OutOfRange,
    QrNoConvergence,
    Reducible,
    ResidualTooLarge,
    RowSumViolation,
    SingularSystem,
)

RESIDUAL_TOL = 1e-8
ORTHOGONALITY_TOL = 1e-10
DEFAULT_ROW_TOL = 1e-12
DEFAULT_CRIT_TOL = 1e-12


class Regime(enum.Enum):
    SUB = "Sub"
    CRITICAL = "Critical"
    SUPER = "Super"


@dataclass(frozen=True)
class ReplacementMatrix:
    """Validated row-stochastic replacement matrix."""

    entries: np.ndarray
    tol_row: float = DEFAULT_ROW_TOL

    @property
    def k(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class Eigenpair:
    """One real eigenpair with its certification residual.

    ``xi`` keeps whatever scale it was built with; ``eigenpairs`` applies the
    repo normalization (max-magnitude entry 1, first nonzero entry positive)
    unless asked not to.  Covariance outputs scale with ``xi``, so the scale
    in use is part of the result, not a free choice.
    """

    lam: float
    xi: np.ndarray
    regime: Regime
    residual: float


@dataclass(frozen=True)
class Spectrum:
    """Stationary distribution plus the tracked nonprincipal eigenpairs."""

    pi: np.ndarray
    pairs: tuple[Eigenpair, ...]

    def as_dict(self) -> dict:
        return {
            "pi": [float(x) for x in self.pi],
            "pairs": [
                {
                    "lambda": float(p.lam),
                    "xi": [float(x) for x in p.xi],
                    "regime": p.regime.value,
                    "residual": float(p.residual),
                }
                for p in self.pairs
            ],
        }


def validate_matrix(raw, tol_row: float = DEFAULT_ROW_TOL) -> ReplacementMatrix:
    """Check shape, nonnegativity, row sums and irreducibility.

    Parameters
    ----------
    raw : array_like, shape (k, k)
        Candidate replacement matrix.
    tol_row : float
        Allowed absolute deviation of each row sum from 1.

    Returns
    -------
    ReplacementMatrix

    Raises
    ------
    NegativeEntry, RowSumViolation, Reducible
    """
    entries = np.asarray(raw, dtype=float)
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise RowSumViolation(-1, float("nan"))
    k = entries.shape[0]
    if k < 2 or not np.all(np.isfinite(entries)):
        raise RowSumViolation(-1, float("nan"))
    for i in range(k):
        for j in range(k):
            if entries[i, j] < 0.0:
                raise NegativeEntry(i, j, float(entries[i, j]))
    sums = entries.sum(axis=1)
    for i in range(k):
        if abs(sums[i] - 1.0) > tol_row:
            raise RowSumViolation(i, float(sums[i]))

    adjacency = entries > 0.0
    forward = _reachable(adjacency, 0)
    if len(forward) != k:
        rest = tuple(sorted(set(range(k)) - forward))
        raise Reducible(tuple(sorted(forward)), rest)
    backward = _reachable(adjacency.T, 0)
    if len(backward) != k:
        rest = tuple(sorted(set(range(k)) - backward))
        raise Reducible(rest, tuple(sorted(backward)))
    return ReplacementMatrix(entries=entries, tol_row=tol_row)


def _reachable(adjacency: np.ndarray, start: int) -> set[int]:
    seen = {start}
    frontier = [start]
    while frontier:
        i = frontier.pop()
        for j in np.nonzero(adjacency[i])[0]:
            if int(j) not in seen:
                seen.add(int(j))
                frontier.append(int(j))
    return seen


def stationary_distribution(matrix: ReplacementMatrix) -> np.ndarray:
    """Solve pi' R = pi', sum(pi) = 1 by a direct linear solve.

    The transposed eigen-equation with one row replaced by the normalization
    constraint is solved with partial pivoting; the result is certified by
    the residual of pi' R - pi' and positivity.
    """
    R = matrix.entries
    k = matrix.k
    A = R.T - np.eye(k)
    A[k - 1, :] = 1.0
    b = np.zeros(k)
    b[k - 1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(pi)):
        raise SingularSystem("solution is not finite")
    total = pi.sum()
    if abs(total - 1.0) > 1e-12:
        raise SingularSystem(f"normalization defect {total - 1.0!r}")
    pi = pi / total
    residual = float(np.max(np.abs(pi @ R - pi)))
    if residual > ORTHOGONALITY_TOL:
        raise SingularSystem(f"stationary residual {residual!r}")
    if pi.min() <= 0.0:
        raise SingularSystem(f"nonpositive mass {pi.min()!r} (irreducible matrices have pi > 0)")
    return pi


def classify(lam: float, crit_tol: float = DEFAULT_CRIT_TOL) -> Regime:
    """Sub / Critical / Super according to the position of lam versus 1/2."""
    if not (-1.0 < lam < 1.0):
        raise OutOfRange(float(lam))
    if abs(lam - 0.5) <= crit_tol:
        return Regime.CRITICAL
    return Regime.SUB if lam < 0.5 else Regime.SUPER


def normalize_eigenvector(xi: np.ndarray) -> np.ndarray:
    """Scale so the max-magnitude entry has magnitude 1, then fix the sign so
    the first entry of nonnegligible magnitude is positive."""
    xi = np.asarray(xi, dtype=float)
    peak = float(np.max(np.abs(xi)))
    if peak == 0.0 or not math.isfinite(peak):
        raise ResidualTooLarge(float("nan"), float("inf"), what="zero or non-finite eigenvector")
    v = xi / peak
    for x in v:
        if abs(x) > 1e-12:
            return v if x > 0 else -v
    raise ResidualTooLarge(float("nan"), float("inf"), what="zero eigenvector")


# --- QR iteration ----------------------------------------------------------------


def _hessenberg(A: np.ndarray) -> np.ndarray:
    H = np.array(A, dtype=float, copy=True)
    n = H.shape[0]
    for j in range(n - 2):
        x = H[j + 1 :, j]
        nx = math.sqrt(float(x @ x))
        if nx == 0.0:
            continue
        v = x.copy()
        v[0] += nx if v[0] >= 0 else -nx
        nv = math.sqrt(float(v @ v))
        if nv == 0.0:
            continue
        v /= nv
        H[j + 1 :, j:] -= 2.0 * np.outer(v, v @ H[j + 1 :, j:])
        H[:, j + 1 :] -= 2.0 * np.outer(H[:, j + 1 :] @ v, v)
        H[j + 2 :, j] = 0.0
    return H


def _split_real_2x2(a: float, b: float, c: float, d: float) -> tuple[float, float]:
    disc = (a - d) * (a - d) + 4.0 * b * c
    if disc < 0.0:
        raise ComplexSpectrum(float((a + d) / 2.0), float(math.sqrt(-disc) / 2.0))
    rt = math.sqrt(disc)
    s = a + d
    mu1 = (s + rt) / 2.0 if s >= 0 else (s - rt) / 2.0
    det = a * d - b * c
    mu2 = det / mu1 if mu1 != 0.0 else (s - rt) / 2.0 if s >= 0 else (s + rt) / 2.0
    return mu1, mu2


def real_eigenvalues(A: np.ndarray, tol: float = 1e-13) -> list[float]:
    """All eigenvalues of a small real matrix, required to be real.

    Explicit double-shift QR on the Hessenberg form; a converged 2x2 diagonal
    block with negative discriminant raises ComplexSpectrum.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 1:
        return [float(A[0, 0])]
    H = _hessenberg(A)
    scale = max(1.0, float(np.max(np.abs(H))))
    eigs: list[float] = []
    hi = n - 1
    sweeps = 0
    max_sweeps = 80 * n
    while hi >= 0:
        for i in range(hi):
            if abs(H[i + 1, i]) <= tol * (abs(H[i, i]) + abs(H[i + 1, i + 1]) + tol * scale):
                H[i + 1, i] = 0.0
        if hi == 0:
            eigs.append(float(H[0, 0]))
            break
        if H[hi, hi - 1] == 0.0:
            eigs.append(float(H[hi, hi]))
            hi -= 1
            continue
        if hi == 1 or H[hi - 1, hi - 2] == 0.0:
            mu1, mu2 = _split_real_2x2(H[hi - 1, hi - 1], H[hi - 1, hi], H[hi, hi - 1], H[hi, hi])
            eigs.extend([mu1, mu2])
            hi -= 2
            continue
        if sweeps >= max_sweeps:
            raise QrNoConvergence(sweeps)
        lo = hi
        while lo > 0 and H[lo, lo - 1] != 0.0:
            lo -= 1
        B = H[lo : hi + 1, lo : hi + 1]
        m = B.shape[0]
        a, b, c, d = B[m - 2, m - 2], B[m - 2, m - 1], B[m - 1, m - 2], B[m - 1, m - 1]
        s, p = a + d, a * d - b * c
        if sweeps % 16 == 15:
            # exceptional shift to break rare stalls
            w = abs(B[m - 1, m - 2]) + abs(d)
            s, p = 1.5 * w, w * w
        M = B @ B - s * B + p * np.eye(m)
        Q, _ = np.linalg.qr(M)
        B2 = Q.T @ B @ Q
        H[lo : hi + 1, lo : hi + 1] = _hessenberg(B2)
        sweeps += 1
    return eigs


def _null_space_vectors(R: np.ndarray, lam: float, count: int) -> list[np.ndarray]:
    _, _, vh = np.linalg.svd(R - lam * np.eye(R.shape[0]))
    return [vh[-(i + 1)] for i in range(count)]


def _certify(matrix: ReplacementMatrix, pi: np.ndarray, lam: float, xi: np.ndarray, crit_tol: float) -> Eigenpair:
    if not (-1.0 < lam < 1.0):
        raise OutOfRange(float(lam))
    residual = float(np.max(np.abs(matrix.entries @ xi - lam * xi)))
    if residual > RESIDUAL_TOL:
        raise ResidualTooLarge(float(lam), residual)
    ortho = abs(float(pi @ xi))
    if ortho > ORTHOGONALITY_TOL * max(1.0, float(np.max(np.abs(xi)))):
        raise ResidualTooLarge(float(lam), ortho, what="pi-orthogonality defect")
    return Eigenpair(lam=float(lam), xi=np.asarray(xi, float), regime=classify(lam, crit_tol), residual=residual)


def eigenpairs(
    matrix: ReplacementMatrix,
    supplied=None,
    normalize: bool = True,
    crit_tol: float = DEFAULT_CRIT_TOL,
) -> list[Eigenpair]:
    """Certified nonprincipal eigenpairs, ascending by eigenvalue.

    Parameters
    ----------
    matrix : ReplacementMatrix
    supplied : iterable of (lam, xi), optional
        Candidate pairs to certify instead of computing the spectrum.  Each is
        checked by residual and pi-orthogonality exactly like computed pairs.
    normalize : bool
        Apply the repo normalization to the eigenvectors.  Leave False to keep
        a supplied scale (covariance targets scale with xi).
    crit_tol : float
        Half-width of the Critical band around 1/2.

    Raises
    ------
    ComplexSpectrum, OutOfRange, ResidualTooLarge, QrNoConvergence
    """
    pi = stationary_distribution(matrix)
    R = matrix.entries
    out: list[Eigenpair] = []
    if supplied is not None:
        for lam, xi in supplied:
            xi = np.asarray(xi, dtype=float)
            if normalize:
                xi = normalize_eigenvector(xi)
            out.append(_certify(matrix, pi, float(lam), xi, crit_tol))
        out.sort(key=lambda p: p.lam)
        return out

    eigs = sorted(real_eigenvalues(R))
    principal = eigs[-1]
    if abs(principal - 1.0) > 1e-8:
        raise ResidualTooLarge(principal, abs(principal - 1.0), what="principal eigenvalue deviation")
    rest = eigs[:-1]
    i = 0
    while i < len(rest):
        j = i + 1
        while j < len(rest) and rest[j] - rest[j - 1] <= 1e-7:
            j += 1
        cluster = rest[i:j]
        lam = float(np.mean(cluster))
        for xi in _null_space_vectors(R, lam, len(cluster)):
            if normalize:
                xi = normalize_eigenvector(xi)
            out.append(_certify(matrix, pi, lam, xi, crit_tol))
        i = j
    out.sort(key=lambda p: p.lam)
    return out


def spectrum(matrix: ReplacementMatrix, supplied=None, normalize: bool = True, crit_tol: float = DEFAULT_CRIT_TOL) -> Spectrum:
    """Stationary distribution and certified eigenpairs in one report."""
    pi = stationary_distribution(matrix)
    pairs = tuple(eigenpairs(matrix, supplied=supplied, normalize=normalize, crit_tol=crit_tol))
    return Spectrum(pi=pi, pairs=pairs)


def hadamard_spectral_matrix() -> ReplacementMatrix:
    """The canonical 4-color test matrix with spectrum {1, 0.25, 0.5, 0.75}.

    Synthesized as (1/4) * sum_k lam_k h_k h_k' over the columns of the 4x4
    Hadamard matrix, so the eigenvectors are the sign patterns (1,-1,1,-1),
    (1,1,-1,-1), (1,-1,-1,1) and the stationary distribution is uniform.
    All entries are exact dyadic rationals.
    """
    raw = np.array(
        [
            [0.625, 0.125, 0.0, 0.25],
            [0.125, 0.625, 0.25, 0.0],
            [0.0, 0.25, 0.625, 0.125],
            [0.25, 0.0, 0.125, 0.625],
        ]
    )
    return validate_matrix(raw)
