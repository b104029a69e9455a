"""Exception types shared across the package.

Every error carries enough payload to reconstruct what was rejected; the CLI
maps these onto its exit-code contract (config errors vs spectral errors vs
statistical check failures).
"""

from __future__ import annotations


class UrnlabError(Exception):
    """Base class for all package errors."""


# --- replacement-matrix / spectrum validation ---------------------------------


class SpectralError(UrnlabError):
    """Base class for matrix and eigenstructure rejections."""


class NegativeEntry(SpectralError):
    def __init__(self, i: int, j: int, value: float):
        self.i, self.j, self.value = i, j, value
        super().__init__(f"entry ({i},{j}) = {value!r} is negative")


class RowSumViolation(SpectralError):
    def __init__(self, row: int, total: float):
        self.row, self.total = row, total
        super().__init__(f"row {row} sums to {total!r}, expected 1 within tolerance")


class Reducible(SpectralError):
    def __init__(self, component: tuple[int, ...], rest: tuple[int, ...]):
        self.component, self.rest = component, rest
        super().__init__(
            f"positivity digraph is not strongly connected: {component} does not communicate with {rest}"
        )


class ComplexSpectrum(SpectralError):
    def __init__(self, real: float, imag: float):
        self.real, self.imag = real, imag
        super().__init__(f"complex eigenvalue pair {real!r} +/- {imag!r}i; only real spectra are supported")


class ResidualTooLarge(SpectralError):
    def __init__(self, lam: float, residual: float, what: str = "eigenpair residual"):
        self.lam, self.residual, self.what = lam, residual, what
        super().__init__(f"{what} for lambda={lam!r} is {residual!r}, above tolerance")


class SingularSystem(SpectralError):
    def __init__(self, detail: str):
        self.detail = detail
        super().__init__(f"stationary distribution solve failed: {detail}")


class OutOfRange(SpectralError):
    def __init__(self, lam: float):
        self.lam = lam
        super().__init__(f"eigenvalue {lam!r} outside the open interval (-1, 1)")


class QrNoConvergence(SpectralError):
    def __init__(self, sweeps: int):
        self.sweeps = sweeps
        super().__init__(f"QR iteration did not converge after {sweeps} sweeps")


# --- urn process ----------------------------------------------------------------


class BadColor(UrnlabError):
    def __init__(self, color: int, k: int):
        self.color, self.k = color, k
        super().__init__(f"color {color} not in [0, {k})")


# --- martingale normalizers -------------------------------------------------------


class StaleNormalizer(UrnlabError):
    def __init__(self, expected_n: int, got_n: int, lam: float):
        self.expected_n, self.got_n, self.lam = expected_n, got_n, lam
        super().__init__(
            f"normalizer for lambda={lam!r} is at index {got_n}, state requires index {expected_n}"
        )


class TooEarly(UrnlabError):
    def __init__(self, n: int, needed: int, what: str):
        self.n, self.needed, self.what = n, needed, what
        super().__init__(f"{what} undefined at n={n}; requires n >= {needed}")


# --- oracle ----------------------------------------------------------------------


class HorizonTooLarge(UrnlabError):
    def __init__(self, horizon: int, k: int):
        self.horizon, self.k = horizon, k
        super().__init__(
            f"enumeration horizon {horizon} with k={k} exceeds the guard (horizon <= 12 and k**horizon <= 2e7)"
        )


class InvalidConstants(UrnlabError):
    def __init__(self, c: float, d: float):
        self.c, self.d = c, d
        super().__init__(f"contraction constants must be positive, got c={c!r}, d={d!r}")


# --- fclt --------------------------------------------------------------------------


class ShortTrajectory(UrnlabError):
    def __init__(self, have: int, need: int):
        self.have, self.need = have, need
        super().__init__(f"trajectory covers steps up to {have}, grid requires {need}")


# --- monte carlo engine ---------------------------------------------------------------


class InsufficientReplications(UrnlabError):
    def __init__(self, count: int, needed: int):
        self.count, self.needed = count, needed
        super().__init__(f"{count} replications available, statistical check requires >= {needed}")


class DegenerateVariance(UrnlabError):
    def __init__(self, where: str):
        self.where = where
        super().__init__(f"sample variance is zero at {where}; test statistic undefined")


# --- cli --------------------------------------------------------------------------------


class ConfigError(UrnlabError):
    def __init__(self, detail: str):
        self.detail = detail
        super().__init__(detail)
