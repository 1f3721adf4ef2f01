"""Decoherence time from the real-eigenvalue DMD mode of an odd-rank fit."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import ConfigError, NumericalError, check_is_fitted
from .dmd import StochasticDMD

DEFAULT_REAL_TOL = 1e-6


@dataclass
class T2Extraction:
    mode_index: int
    lambda_real: float
    t2_star: float
    decay_curve: np.ndarray
    times: np.ndarray
    amplitude: float
    tolerance: float
    candidates: list = field(default_factory=list)

    def to_dict(self):
        return {
            "lambda": self.lambda_real,
            "t2_star_us": self.t2_star,
            "mode_index": self.mode_index,
            "amplitude": self.amplitude,
            "tolerance": self.tolerance,
            "candidates": [
                {"index": int(i), "re": float(z.real), "im": float(z.imag)} for i, z in self.candidates
            ],
        }


def real_eigenvalue_candidates(decomp, tol=None):
    lam = decomp.eigenvalues
    if tol is None:
        tol = DEFAULT_REAL_TOL * float(np.max(np.abs(lam)))
    idx = np.flatnonzero(np.abs(lam.imag) < tol)
    return [(int(i), complex(lam[i])) for i in idx], tol


def find_real_eigenvalue(decomp, tol=None, *, return_candidates=False):
    """Index of the real eigenvalue with the largest magnitude.

    Requires an odd rank, which forces at least one real eigenvalue for a
    real reduced operator.
    """
    if decomp.rank % 2 == 0:
        raise ConfigError(
            f"T2* extraction needs an odd DMD rank (got {decomp.rank}): "
            "conjugate pairs leave a real eigenvalue only when the rank is odd"
        )
    cands, tol = real_eigenvalue_candidates(decomp, tol)
    if not cands:
        raise NumericalError("no real mode found; increase rank parity window or tol")
    best = max(cands, key=lambda c: abs(c[1]))[0]
    if return_candidates:
        return best, cands, tol
    return best


def t2_mode_dynamics(decomp, idx, grid):
    """``|b| * lambda**((t - t0)/dt)`` for the real mode ``idx``."""
    lam = decomp.eigenvalues[idx]
    if abs(lam.imag) > 1e-6 * max(1.0, abs(lam)):
        raise ConfigError(f"mode {idx} is not real (lambda = {lam})")
    lam = lam.real
    if lam <= 0:
        raise NumericalError(f"non-physical decay mode: lambda = {lam:.6g} <= 0")
    k = (np.asarray(grid.times if hasattr(grid, "times") else grid) - decomp.t_start) / decomp.dt
    return abs(decomp.amplitudes[idx]) * lam**k


def estimate_t2(lambda_real, dt):
    """1/e time of the discrete decay ``lambda**k``: ``-dt / ln(lambda)``."""
    lam = float(np.real(lambda_real))
    if lam >= 1:
        raise NumericalError(f"non-decaying mode: lambda = {lam:.12g} >= 1")
    if lam <= 0:
        raise NumericalError(f"non-physical decay mode: lambda = {lam:.6g} <= 0")
    return -dt / np.log(lam)


def envelope_deviation(decay_curve, envelope):
    """RMS difference of the two curves after scaling each to 1 at ``t = 0``.

    Deviations are relative to the initial coherence rather than pointwise:
    a pointwise ratio blows up once the envelope decays into Monte Carlo noise.
    """
    c = np.asarray(decay_curve, dtype=np.float64)
    e = np.asarray(envelope, dtype=np.float64)
    if c.shape != e.shape:
        raise ConfigError(f"grid mismatch: {c.shape} vs {e.shape}")
    if c[0] == 0 or e[0] == 0:
        raise ConfigError("curves must be non-zero at t = 0 for normalization")
    c = c / c[0]
    e = e / e[0]
    return float(np.sqrt(np.mean((c - e) ** 2)))


def extract_t2(decomp, grid, tol=None):
    idx, cands, tol = find_real_eigenvalue(decomp, tol, return_candidates=True)
    lam = float(decomp.eigenvalues[idx].real)
    curve = t2_mode_dynamics(decomp, idx, grid)
    return T2Extraction(
        mode_index=idx,
        lambda_real=lam,
        t2_star=estimate_t2(lam, decomp.dt),
        decay_curve=curve,
        times=np.asarray(grid.times),
        amplitude=float(abs(decomp.amplitudes[idx])),
        tolerance=float(tol),
        candidates=cands,
    )


class T2StarEstimator(BaseEstimator):
    """Odd-rank DMD fit followed by real-mode T2* extraction.

    Attributes
    ----------
    t2_star_ : float
    lambda_ : float
    extraction_ : T2Extraction
    dmd_ : StochasticDMD
    """

    def __init__(self, rank=15, dt=1.0, tol=None):
        self.rank = rank
        self.dt = dt
        self.tol = tol

    def fit(self, X, y=None):
        if self.rank % 2 == 0:
            raise ConfigError(f"T2StarEstimator needs an odd rank, got {self.rank}")
        self.dmd_ = StochasticDMD(rank=self.rank, dt=self.dt).fit(X)
        self.extraction_ = extract_t2(self.dmd_.decomposition_, self.dmd_.grid_(), self.tol)
        self.t2_star_ = self.extraction_.t2_star
        self.lambda_ = self.extraction_.lambda_real
        return self

    def predict(self, times):
        """T2* mode decay curve at ``times``."""
        check_is_fitted(self, "extraction_")
        return t2_mode_dynamics(self.dmd_.decomposition_, self.extraction_.mode_index, np.asarray(times))
