"""Forecasting beyond the analysis window.

Standard DMD extrapolation continues every mode with its fitted eigenvalue and
blows up whenever some ``|lambda| > 1``. The constrained forecast caps every
eigenvalue magnitude at that of the T2* mode and weights modes by the learned
softmax spectrum instead of the initial-condition amplitudes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import ConfigError, check_is_fitted, warn
from .coherence import extract_t2
from .dmd import StochasticDMD, evaluate
from .spectral import mode_weights


@dataclass
class ExtrapolationResult:
    times: np.ndarray
    standard: np.ndarray
    constrained: np.ndarray
    clamped_mask: np.ndarray
    envelope_bound: np.ndarray
    lambda_t2: float
    clamped_eigenvalues: np.ndarray
    imag_residual: float = 0.0
    metadata: dict = field(default_factory=dict)


def standard_extrapolate(decomp, times):
    """Ensemble average of the DMD reconstruction at ``times`` (any range)."""
    return evaluate(decomp, times).mean(axis=0)


def clamp_eigenvalues(eigenvalues, lambda_t2):
    """Rescale every ``|lambda_i| > |lambda_T2|`` onto that radius, keeping its phase.

    Returns ``(clamped, mask)``.
    """
    lam = np.asarray(eigenvalues, dtype=np.complex128)
    bound = abs(lambda_t2)
    if not 0 < bound < 1:
        raise ConfigError(f"lambda_T2 must lie in (0, 1), got {lambda_t2}")
    mag = np.abs(lam)
    if np.any(mag == 0):
        warn("zero eigenvalue left unclamped")
    mask = mag > bound
    out = lam.copy()
    out[mask] = lam[mask] / mag[mask] * bound
    return out, mask


def constrained_exponents(clamped, dt, mask=None, *, compat_2pi=False):
    """Continuous exponents used by the constrained forecast.

    Default: ``log(lambda*)/dt`` for every mode. ``compat_2pi`` replaces the
    exponent of each clamped mode by the real number ``Im(log lambda*) / (2 pi dt)``
    and is only meant for side-by-side comparison output.
    """
    exps = np.log(np.asarray(clamped, dtype=np.complex128)) / dt
    if compat_2pi:
        if mask is None:
            raise ConfigError("compat_2pi needs the clamp mask")
        exps[mask] = exps[mask].imag / (2.0 * np.pi)
    return exps


def constrained_predict(weights, clamped, dt, times, t_start=0.0, *, return_residual=False,
                        compat_2pi=False, mask=None):
    """``Re sum_i S_i exp(omega*_i (t - t0))`` with per-mode weights ``S``."""
    weights = np.asarray(weights, dtype=np.float64)
    clamped = np.asarray(clamped, dtype=np.complex128)
    if weights.shape != clamped.shape:
        raise ConfigError(
            f"weight/eigenvalue length mismatch: {weights.size} vs {clamped.size}"
        )
    exps = constrained_exponents(clamped, dt, mask, compat_2pi=compat_2pi)
    rel = np.asarray(times, dtype=np.float64) - t_start
    series = weights @ np.exp(np.outer(exps, rel))
    if return_residual:
        scale = np.max(np.abs(series)) or 1.0
        return series.real, float(np.max(np.abs(series.imag)) / scale)
    return series.real


def envelope_bound(lambda_t2, dt, times, t_start=0.0):
    rel = np.asarray(times, dtype=np.float64) - t_start
    return abs(lambda_t2) ** (rel / dt)


def normalize_amplitude(series):
    """Divide by the largest absolute value."""
    s = np.asarray(series, dtype=np.float64)
    if s.size == 0:
        raise ConfigError("cannot normalize an empty series")
    peak = np.max(np.abs(s))
    if peak == 0:
        raise ConfigError("cannot normalize an all-zero series")
    return s / peak


def extrapolate(decomp, times, *, lambda_t2=None, transform="softmax", tol=None):
    """Standard and constrained forecasts of a decomposition at ``times``."""
    grid_times = np.asarray(times, dtype=np.float64)
    meta = {}
    if lambda_t2 is None:
        from .noise_sim import TimeGrid

        window = TimeGrid(decomp.t_start, decomp.dt, 2)
        t2 = extract_t2(decomp, window, tol)
        lambda_t2 = t2.lambda_real
        meta["t2_mode_index"] = t2.mode_index
        meta["t2_star_us"] = t2.t2_star
    clamped, mask = clamp_eigenvalues(decomp.eigenvalues, lambda_t2)
    weights = mode_weights(decomp, transform)
    constrained, resid = constrained_predict(
        weights, clamped, decomp.dt, grid_times, decomp.t_start, return_residual=True
    )
    meta.update(transform=transform, clamped_mode_count=int(mask.sum()))
    return ExtrapolationResult(
        times=grid_times,
        standard=standard_extrapolate(decomp, grid_times),
        constrained=constrained,
        clamped_mask=mask,
        envelope_bound=envelope_bound(lambda_t2, decomp.dt, grid_times, decomp.t_start),
        lambda_t2=float(lambda_t2),
        clamped_eigenvalues=clamped,
        imag_residual=resid,
        metadata=meta,
    )


class ConstrainedExtrapolator(BaseEstimator):
    """Fit odd-rank DMD on an analysis window and forecast beyond it.

    Parameters
    ----------
    rank : int
        Odd DMD rank (the T2* mode must exist).
    dt : float
        Sampling step for bare matrices.
    weighting : {"softmax", "simple"}
        Mode weights used in the constrained sum.
    """

    def __init__(self, rank=15, dt=1.0, weighting="softmax", tol=None):
        self.rank = rank
        self.dt = dt
        self.weighting = weighting
        self.tol = tol

    def fit(self, X, y=None):
        self.dmd_ = StochasticDMD(rank=self.rank, dt=self.dt).fit(X)
        decomp = self.dmd_.decomposition_
        self.t2_ = extract_t2(decomp, self.dmd_.grid_(), self.tol)
        self.clamped_eigenvalues_, self.clamped_mask_ = clamp_eigenvalues(
            decomp.eigenvalues, self.t2_.lambda_real
        )
        self.weights_ = mode_weights(decomp, self.weighting)
        return self

    def predict(self, times, kind="constrained"):
        """Forecast at ``times``; ``kind`` is ``"constrained"`` or ``"standard"``."""
        check_is_fitted(self, "t2_")
        decomp = self.dmd_.decomposition_
        if kind == "standard":
            return standard_extrapolate(decomp, times)
        if kind != "constrained":
            raise ConfigError(f"kind must be 'constrained' or 'standard', got {kind!r}")
        return constrained_predict(
            self.weights_, self.clamped_eigenvalues_, decomp.dt, times, decomp.t_start
        )

    def extrapolate(self, times):
        check_is_fitted(self, "t2_")
        return extrapolate(
            self.dmd_.decomposition_, times, lambda_t2=self.t2_.lambda_real, transform=self.weighting
        )
