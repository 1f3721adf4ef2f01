"""Noise power spectra from DMD mode norms, plus analytic and Welch references.

Frequencies on :class:`Spectrum` objects are in MHz. The analytic noise
spectra take angular frequency ``omega`` in rad/us.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal
from scipy.ndimage import gaussian_filter1d
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import ConfigError, check_int, check_is_fitted, check_positive, warn
from .dmd import DmdDecomposition, StochasticDMD, continuous_frequency

SPECTRUM_KINDS = (
    "dmd_psd",
    "simple_norm",
    "analytic_lorentzian",
    "analytic_oneoverf",
    "convolved",
    "welch",
    "inverse_frequency",
)
TRANSFORMS = ("softmax", "simple")
FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))
COMMON_GRID_POINTS = 512


@dataclass
class Spectrum:
    frequencies: np.ndarray
    weights: np.ndarray
    kind: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.frequencies.shape != self.weights.shape or self.frequencies.ndim != 1:
            raise ConfigError("frequencies and weights must be 1-D arrays of equal length")
        if self.kind not in SPECTRUM_KINDS:
            raise ConfigError(f"unknown spectrum kind {self.kind!r}")
        if np.any(np.diff(self.frequencies) < 0):
            raise ConfigError("spectrum frequencies must be non-decreasing")
        if np.any(self.weights < 0):
            raise ConfigError("spectrum weights must be non-negative")

    def __len__(self):
        return self.frequencies.size

    @property
    def points(self):
        return list(zip(self.frequencies.tolist(), self.weights.tolist()))

    def argmax_frequency(self):
        return float(self.frequencies[np.argmax(self.weights)])


# ---------------------------------------------------------------------------
# mode norms and weight transforms
# ---------------------------------------------------------------------------


def mode_l1_norms(modes):
    """Complex l1-norm of every column: ``sum_k |phi_ki|``."""
    modes = np.atleast_2d(np.asarray(modes))
    if not np.all(np.isfinite(modes)):
        raise ConfigError("modes contain non-finite entries")
    return np.abs(modes).sum(axis=0)


def softmax(norms):
    """``exp(z_i) / sum_j exp(z_j)``, shifted by ``max(z)`` to avoid overflow."""
    z = np.asarray(norms, dtype=np.float64)
    if z.size == 0:
        raise ConfigError("softmax of an empty vector")
    if not np.all(np.isfinite(z)):
        raise ConfigError("softmax input must be finite")
    e = np.exp(z - z.max())
    return e / e.sum()


def simple_normalization(norms):
    z = np.asarray(norms, dtype=np.float64)
    total = z.sum()
    if z.size == 0 or total <= 0:
        raise ConfigError("simple normalization needs a positive total norm")
    return z / total


def mode_weights(decomp, transform="softmax"):
    """Per-mode weights aligned with ``decomp.eigenvalues`` (before pair collapse)."""
    if transform not in TRANSFORMS:
        raise ConfigError(f"transform must be one of {TRANSFORMS}, got {transform!r}")
    z = mode_l1_norms(decomp.modes)
    return softmax(z) if transform == "softmax" else simple_normalization(z)


def conjugate_groups(eigenvalues, tol=1e-8):
    """Partition mode indices into conjugate pairs and singletons.

    Each group is a tuple of indices; a pair is listed with the ``Im > 0``
    member first.
    """
    lam = np.asarray(eigenvalues, dtype=np.complex128)
    scale = max(1.0, float(np.max(np.abs(lam)))) if lam.size else 1.0
    used = np.zeros(lam.size, dtype=bool)
    groups = []
    for i in range(lam.size):
        if used[i]:
            continue
        used[i] = True
        if abs(lam[i].imag) <= tol * scale:
            groups.append((i,))
            continue
        free = np.flatnonzero(~used)
        if free.size:
            dist = np.abs(lam[free] - np.conj(lam[i]))
            j = free[np.argmin(dist)]
            if dist.min() <= 1e-6 * scale and np.sign(lam[j].imag) == -np.sign(lam[i].imag):
                used[j] = True
                groups.append((i, j) if lam[i].imag > 0 else (j, i))
                continue
        groups.append((i,))
    return groups


def collapse_pairs(frequencies, weights, eigenvalues):
    """Merge conjugate pairs into one point at ``|f|`` carrying the summed weight."""
    f_out, w_out = [], []
    for g in conjugate_groups(eigenvalues):
        f_out.append(abs(frequencies[g[0]]))
        w_out.append(sum(weights[k] for k in g))
    f_out, w_out = np.array(f_out), np.array(w_out)
    order = np.argsort(f_out, kind="stable")
    return f_out[order], w_out[order]


def build_psd(decomp, transform="softmax"):
    """Data-driven spectrum ``{|f_i|, S_i}`` of a DMD decomposition, sorted by frequency."""
    weights = mode_weights(decomp, transform)
    freqs, _ = continuous_frequency(decomp.eigenvalues, decomp.dt)
    f, w = collapse_pairs(freqs, weights, decomp.eigenvalues)
    z = mode_l1_norms(decomp.modes)
    meta = {
        "transform": transform,
        "rank": int(decomp.rank),
        "logit_spread": float(z.max() - z.min()),
        "logit_max": float(z.max()),
        "mode_normalization": "unit-norm reduced eigenvectors",
    }
    kind = "dmd_psd" if transform == "softmax" else "simple_norm"
    return Spectrum(f, w, kind, meta)


def inverse_frequency_trend(decomp, anchor=None):
    """Reciprocal-frequency trend ``1/f_i`` over the positive DMD frequencies.

    With ``anchor`` (a DMD spectrum) the trend is scaled to match the anchor's
    weight at the lowest positive frequency.
    """
    freqs, _ = continuous_frequency(decomp.eigenvalues, decomp.dt)
    groups = conjugate_groups(decomp.eigenvalues)
    f = np.array(sorted({abs(freqs[g[0]]) for g in groups}))
    f = f[f > 0]
    trend = 1.0 / f
    scale = 1.0 / trend[0] if f.size else 1.0
    anchor_value = None
    if anchor is not None and f.size:
        pos = anchor.frequencies > 0
        if np.any(pos):
            k = np.flatnonzero(pos)[0]
            anchor_value = float(anchor.weights[k])
            scale = anchor_value * anchor.frequencies[k]
    return Spectrum(f, trend * scale, "inverse_frequency", {"anchor_value": anchor_value})


# ---------------------------------------------------------------------------
# analytic noise spectra
# ---------------------------------------------------------------------------


def analytic_lorentzian(omega, v, gamma):
    """Single telegraph fluctuator: ``v^2 * 4 gamma / (4 gamma^2 + omega^2)``."""
    check_positive(gamma, "gamma")
    omega = np.asarray(omega, dtype=np.float64)
    return v**2 * 4.0 * gamma / (4.0 * gamma**2 + omega**2)


def _arccot(x):
    # principal branch on (0, pi/2] for x > 0
    return np.arctan2(1.0, x)


def analytic_oneoverf(omega, vbar, gamma_lo, gamma_hi):
    """Lorentzians averaged over ``P(gamma) ~ 1/gamma`` on ``[gamma_lo, gamma_hi]``."""
    check_positive(gamma_lo, "gamma_lo")
    check_positive(gamma_hi, "gamma_hi")
    if gamma_lo >= gamma_hi:
        raise ConfigError("gamma_lo must be < gamma_hi")
    omega = np.abs(np.asarray(omega, dtype=np.float64))
    if np.any(omega == 0):
        raise ConfigError("omega = 0 is a limit; evaluate it as oneoverf_zero_limit")
    pref = 2.0 * vbar**2 / np.log(gamma_hi / gamma_lo)
    return pref / omega * (_arccot(2.0 * gamma_lo / omega) - _arccot(2.0 * gamma_hi / omega))


def oneoverf_zero_limit(vbar, gamma_lo, gamma_hi):
    """``omega -> 0`` value of :func:`analytic_oneoverf`."""
    return vbar**2 / np.log(gamma_hi / gamma_lo) * (1.0 / gamma_lo - 1.0 / gamma_hi)


def fluctuator_sum_spectrum(omega, rates, coupling):
    """Finite-ensemble estimate ``sum_i v^2 4 g_i / (4 g_i^2 + omega^2)``."""
    omega = np.asarray(omega, dtype=np.float64)
    rates = np.asarray(rates, dtype=np.float64)
    return (coupling**2 * 4.0 * rates / (4.0 * rates**2 + omega[..., None] ** 2)).sum(axis=-1)


def oneoverf_spectrum(frequencies, vbar, gamma_lo, gamma_hi):
    """:func:`analytic_oneoverf` on a frequency grid in MHz, with the zero limit filled in."""
    f = np.asarray(frequencies, dtype=np.float64)
    out = np.empty_like(f)
    zero = f == 0
    out[zero] = oneoverf_zero_limit(vbar, gamma_lo, gamma_hi)
    out[~zero] = analytic_oneoverf(2.0 * np.pi * f[~zero], vbar, gamma_lo, gamma_hi)
    meta = {"vbar": vbar, "gamma_lo": gamma_lo, "gamma_hi": gamma_hi}
    return Spectrum(f, out, "analytic_oneoverf", meta)


# ---------------------------------------------------------------------------
# rank-matched smoothing and comparison
# ---------------------------------------------------------------------------


def fwhm_for_rank(bandwidth, rank):
    """Gaussian FWHM matching the spectral resolution of ``rank/2`` DMD frequencies."""
    check_positive(bandwidth, "bandwidth")
    check_int(rank, "rank", minimum=2)
    return bandwidth / (0.5 * rank)


def gaussian_convolve(spec, fwhm, mode="reflect"):
    """Convolve a uniformly sampled spectrum with a unit-area Gaussian of width ``fwhm``.

    ``mode="reflect"`` mirrors the spectrum at the grid ends, which is exact at
    ``f = 0`` for the even noise spectra used here.
    """
    check_positive(fwhm, "fwhm")
    f = spec.frequencies
    if f.size < 3:
        raise ConfigError("need at least 3 frequency samples to convolve")
    df = np.diff(f)
    step = df.mean()
    if not np.allclose(df, step, rtol=1e-6, atol=0.0):
        raise ConfigError("gaussian_convolve needs a uniform frequency grid")
    if fwhm < 2.0 * step:
        warn(f"FWHM {fwhm:.3g} is below two grid steps ({step:.3g}); kernel under-resolved")
    sigma_bins = fwhm / FWHM_PER_SIGMA / step
    out = gaussian_filter1d(spec.weights, sigma_bins, mode=mode, truncate=8.0)
    meta = dict(spec.metadata, fwhm=float(fwhm), source_kind=spec.kind)
    return Spectrum(f.copy(), out, "convolved", meta)


def _resample_common(a, b, n_points=COMMON_GRID_POINTS):
    lo = max(a.frequencies.min(), b.frequencies.min())
    hi = min(a.frequencies.max(), b.frequencies.max())
    if not hi > lo:
        raise ConfigError("spectra have disjoint (or single-point) frequency supports")
    grid = np.linspace(lo, hi, n_points)
    wa = np.interp(grid, a.frequencies, a.weights)
    wb = np.interp(grid, b.frequencies, b.weights)
    return grid, wa, wb


def spectrum_discrepancy(a, b):
    """L2 distance of unit-sum weights after resampling onto a shared 512-point grid."""
    _, wa, wb = _resample_common(a, b)
    sa, sb = wa.sum(), wb.sum()
    if sa <= 0 or sb <= 0:
        raise ConfigError("cannot normalize a spectrum with zero total weight")
    return float(np.linalg.norm(wa / sa - wb / sb))


def welch_psd(path, segment_len=256, overlap=0.5):
    """One-sided Welch density (Hann window) of a noise path or ensemble of paths.

    ``path`` may be a :class:`~stochdmd.noise_sim.NoisePath`, or a ``(values, dt)``
    tuple where ``values`` is 1-D or ``(n_paths, m)``; periodograms are averaged
    over paths. The integral over frequency (MHz) equals the signal variance.
    """
    if hasattr(path, "values"):
        values, dt = np.atleast_2d(path.values), path.grid.dt
    else:
        values, dt = path
        values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    m = values.shape[1]
    check_int(segment_len, "segment_len", minimum=2)
    if segment_len > m:
        raise ConfigError(f"segment_len {segment_len} exceeds path length {m}")
    noverlap = int(round(overlap * segment_len))
    n_segments = 1 + (m - segment_len) // max(1, segment_len - noverlap)
    if n_segments < 2:
        warn("fewer than two Welch segments; returning a plain (windowed) periodogram")
    f, p = signal.welch(
        values,
        fs=1.0 / dt,
        window="hann",
        nperseg=segment_len,
        noverlap=noverlap,
        detrend=False,
        scaling="density",
        axis=-1,
    )
    meta = {"segment_len": segment_len, "overlap": overlap, "n_paths": values.shape[0], "dt": dt}
    return Spectrum(f, p.mean(axis=0), "welch", meta)


# ---------------------------------------------------------------------------
# estimator
# ---------------------------------------------------------------------------


class DMDNoiseSpectrum(TransformerMixin, BaseEstimator):
    """Fit exact DMD on trajectories and expose the softmax noise spectrum.

    ``fit`` accepts a trajectory matrix / ensemble or an already computed
    :class:`~stochdmd.dmd.DmdDecomposition`. ``weighting`` is ``"softmax"``
    or ``"simple"``. ``transform`` maps a decomposition
    (or trajectories, refitting DMD at the same rank) to the ``(n_points, 2)``
    array of ``(frequency, weight)``.
    """

    def __init__(self, rank=20, dt=1.0, weighting="softmax"):
        self.rank = rank
        self.dt = dt
        self.weighting = weighting

    def _decompose(self, X):
        if isinstance(X, DmdDecomposition):
            return X
        return StochasticDMD(rank=self.rank, dt=self.dt).fit(X).decomposition_

    def fit(self, X, y=None):
        self.decomposition_ = self._decompose(X)
        self.spectrum_ = build_psd(self.decomposition_, self.weighting)
        self.mode_weights_ = mode_weights(self.decomposition_, self.weighting)
        self.trend_ = inverse_frequency_trend(self.decomposition_, anchor=self.spectrum_)
        return self

    def transform(self, X):
        check_is_fitted(self, "spectrum_")
        spec = build_psd(self._decompose(X), self.weighting)
        return np.column_stack([spec.frequencies, spec.weights])
