"""Exact Dynamic Mode Decomposition over realization-space snapshots.

Rows of the trajectory matrix are stochastic realizations, columns are time
samples. The propagator acts on the ``n``-dimensional ensemble cross-section,
so DMD modes are vectors over realizations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import (
    ConfigError,
    NumericalError,
    check_int,
    check_is_fitted,
    check_positive,
    check_trajectories,
    warn,
)
from .noise_sim import TimeGrid, TrajectoryEnsemble

NUMERICAL_RANK_RTOL = 1e-12
DEGENERATE_EIG_TOL = 1e-10


@dataclass
class SnapshotPair:
    X: np.ndarray
    X_shift: np.ndarray
    dt: float
    t_start: float = 0.0


@dataclass
class SvdTruncation:
    U_r: np.ndarray
    sigma: np.ndarray
    V_r: np.ndarray
    sigma_full: np.ndarray

    @property
    def rank(self):
        return self.sigma.size


@dataclass
class DmdDecomposition:
    """Result of an exact-DMD fit.

    ``eigenvalues[i]`` pairs with ``modes[:, i]`` and ``amplitudes[i]``.
    """

    rank: int
    eigenvalues: np.ndarray
    modes: np.ndarray
    amplitudes: np.ndarray
    dt: float
    sigma_full: np.ndarray
    t_start: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def omega(self):
        """Full complex continuous-time eigenvalues ``log(lambda) / dt``."""
        return np.log(self.eigenvalues.astype(np.complex128)) / self.dt

    @property
    def frequencies(self):
        return continuous_frequency(self.eigenvalues, self.dt)[0]

    @property
    def growth_rates(self):
        return continuous_frequency(self.eigenvalues, self.dt)[1]


# ---------------------------------------------------------------------------
# algorithm steps
# ---------------------------------------------------------------------------


def build_snapshots(ens, dt=None, t_start=0.0):
    """Split trajectories into ``X = [x_0 .. x_{m-2}]`` and ``X' = [x_1 .. x_{m-1}]``."""
    if isinstance(ens, TrajectoryEnsemble):
        data, dt, t_start = ens.data, ens.grid.dt, ens.grid.t_start
    else:
        data = check_trajectories(ens)
        if dt is None:
            raise ConfigError("dt is required when passing a bare matrix")
    if data.shape[1] < 3:
        raise ConfigError(f"insufficient snapshots: need m >= 3, got {data.shape[1]}")
    return SnapshotPair(data[:, :-1], data[:, 1:], check_positive(dt, "dt"), float(t_start))


def truncated_svd(X, r):
    """Rank-``r`` factors of ``X`` with the full singular spectrum kept alongside."""
    X = np.asarray(X)
    r = check_int(r, "rank", minimum=1)
    limit = min(X.shape)
    if r > limit:
        raise ConfigError(f"rank {r} exceeds min(n, m-1) = {limit}")
    U, s, Vh = np.linalg.svd(X, full_matrices=False)
    admissible = int(np.sum(s >= NUMERICAL_RANK_RTOL * s[0])) if s[0] > 0 else 0
    if r > admissible:
        raise NumericalError(
            f"rank exceeds numerical rank: largest admissible rank is {admissible}"
        )
    return SvdTruncation(U[:, :r], s[:r], Vh[:r].conj().T, s)


def reduced_operator(svd, X_shift):
    """``A_r = U_r^T X' V_r Sigma_r^{-1}`` (r x r)."""
    if svd.U_r.shape[0] != X_shift.shape[0] or svd.V_r.shape[0] != X_shift.shape[1]:
        raise ConfigError("SVD factors do not match the shifted snapshot matrix")
    if svd.sigma[-1] < 1e-14 * svd.sigma[0]:
        raise NumericalError("singular value below 1e-14 * sigma_1 in reduced operator")
    return (svd.U_r.conj().T @ X_shift @ svd.V_r) / svd.sigma[np.newaxis, :]


def _sort_key(eigenvalues):
    angle = np.abs(np.angle(eigenvalues))
    # |Im log| ascending, then |lambda| descending, then +Im before -Im
    return np.lexsort((-np.sign(eigenvalues.imag), -np.abs(eigenvalues), np.round(angle, 12)))


def eigen(A):
    """Eigenvalues and unit-norm eigenvectors of the reduced operator.

    Ordered by ``|Im log lambda|`` ascending, ties broken by ``|lambda|``
    descending; conjugate pairs end up adjacent with ``Im > 0`` first.
    """
    A = np.asarray(A)
    if not np.all(np.isfinite(A)):
        raise NumericalError("reduced operator contains non-finite entries")
    try:
        lam, W = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigen-decomposition did not converge (cond={np.linalg.cond(A):.3g})"
        ) from exc
    order = _sort_key(lam)
    lam, W = lam[order], W[:, order]
    W = W / np.linalg.norm(W, axis=0)
    return lam.astype(np.complex128), W.astype(np.complex128)


def dmd_modes(X_shift, svd, W):
    """Exact DMD modes ``Phi = X' V_r Sigma_r^{-1} W``."""
    return (X_shift @ svd.V_r / svd.sigma[np.newaxis, :]) @ W


def amplitudes(Phi, x0, *, return_info=False):
    """Least-squares amplitudes ``b = pinv(Phi) x0``.

    With ``return_info`` also returns ``(residual_norm, rank_deficient)``.
    """
    b, _, rank, _ = np.linalg.lstsq(Phi, x0.astype(np.complex128), rcond=None)
    deficient = rank < Phi.shape[1]
    if deficient:
        warn(f"mode matrix is rank deficient ({rank} < {Phi.shape[1]}); using minimum-norm amplitudes")
    if return_info:
        return b, float(np.linalg.norm(Phi @ b - x0)), bool(deficient)
    return b


def continuous_frequency(eigenvalues, dt):
    """Natural frequency ``Im(log lambda) / (2 pi dt)`` (MHz) and growth rate ``Re(log lambda) / dt``."""
    lam = np.asarray(eigenvalues, dtype=np.complex128)
    if np.any(lam == 0):
        raise NumericalError("nilpotent mode: eigenvalue exactly zero")
    logs = np.log(lam)
    return logs.imag / (2.0 * np.pi * dt), logs.real / dt


def _degenerate_pairs(lam):
    pairs = []
    for i in range(lam.size):
        for j in range(i + 1, lam.size):
            if abs(lam[i] - lam[j]) < DEGENERATE_EIG_TOL:
                pairs.append((i, j))
    return pairs


def decompose(snapshots, rank):
    """Run the full exact-DMD pipeline on a :class:`SnapshotPair`."""
    svd = truncated_svd(snapshots.X, rank)
    A = reduced_operator(svd, snapshots.X_shift)
    lam, W = eigen(A)
    Phi = dmd_modes(snapshots.X_shift, svd, W)
    b, resid, deficient = amplitudes(Phi, snapshots.X[:, 0], return_info=True)
    x0_norm = float(np.linalg.norm(snapshots.X[:, 0]))
    meta = {
        "amplitude_residual": resid,
        "amplitude_relative_residual": resid / x0_norm if x0_norm > 0 else resid,
        "rank_deficient_modes": deficient,
        "degenerate_pairs": _degenerate_pairs(lam),
    }
    return DmdDecomposition(
        rank=int(rank),
        eigenvalues=lam,
        modes=Phi,
        amplitudes=b,
        dt=snapshots.dt,
        sigma_full=svd.sigma_full,
        t_start=snapshots.t_start,
        metadata=meta,
    )


def evaluate(decomp, times, *, return_complex=False):
    """``sum_i phi_i b_i exp(omega_i (t - t_0))`` at arbitrary ``times`` (``n x len(times)``)."""
    rel = np.asarray(times, dtype=np.float64) - decomp.t_start
    dynamics = np.exp(np.outer(decomp.omega, rel)) * decomp.amplitudes[:, np.newaxis]
    out = decomp.modes @ dynamics
    return out if return_complex else out.real


def reconstruct(decomp, grid, *, return_residual=False):
    """Real part of the DMD reconstruction over ``grid``.

    The exponent uses the full complex ``log(lambda)/dt``: the imaginary part
    alone would drop all growth and decay.
    """
    if not np.isclose(grid.dt, decomp.dt, rtol=1e-12, atol=0.0):
        raise ConfigError(f"grid dt {grid.dt} differs from decomposition dt {decomp.dt}")
    full = evaluate(decomp, grid.times, return_complex=True)
    if not return_residual:
        return full.real
    scale = np.max(np.abs(full)) or 1.0
    return full.real, float(np.max(np.abs(full.imag)) / scale)


def reconstruction_error(x_avg, x_dmd_avg):
    """Root-mean-square difference between two equal-length series."""
    a = np.asarray(x_avg, dtype=np.float64)
    b = np.asarray(x_dmd_avg, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def singular_values(ens):
    """Full singular spectrum of the snapshot matrix ``X``."""
    return np.linalg.svd(build_snapshots(ens).X, compute_uv=False)


# ---------------------------------------------------------------------------
# estimator
# ---------------------------------------------------------------------------


class StochasticDMD(BaseEstimator):
    """Exact DMD of an ensemble of stochastic trajectories.

    Parameters
    ----------
    rank : int
        Truncation rank of the snapshot SVD.
    dt : float
        Sampling step (us). Ignored when ``fit`` receives a
        :class:`~stochdmd.noise_sim.TrajectoryEnsemble`, which carries its grid.
    t_start : float
        Time of the first snapshot.

    Attributes
    ----------
    decomposition_ : DmdDecomposition
    eigenvalues_, modes_, amplitudes_ : ndarray
    singular_values_ : ndarray
        Full singular spectrum of the snapshot matrix.
    n_realizations_, n_times_ : int

    Examples
    --------
    >>> import numpy as np
    >>> t = np.arange(200) * 0.01
    >>> X = np.vstack([np.cos(2 * np.pi * t + p) for p in (0.1, 0.7, 1.3)])
    >>> dmd = StochasticDMD(rank=2, dt=0.01).fit(X)
    >>> np.round(np.sort(np.abs(dmd.frequencies_)), 6)
    array([1., 1.])
    """

    def __init__(self, rank=10, dt=1.0, t_start=0.0):
        self.rank = rank
        self.dt = dt
        self.t_start = t_start

    def fit(self, X, y=None):
        if isinstance(X, TrajectoryEnsemble):
            snaps = build_snapshots(X)
        else:
            X = check_trajectories(X, min_times=3)
            snaps = build_snapshots(X, self.dt, self.t_start)
        self.decomposition_ = decompose(snaps, self.rank)
        self.n_realizations_, n_cols = snaps.X.shape
        self.n_times_ = n_cols + 1
        return self

    @property
    def eigenvalues_(self):
        check_is_fitted(self, "decomposition_")
        return self.decomposition_.eigenvalues

    @property
    def modes_(self):
        check_is_fitted(self, "decomposition_")
        return self.decomposition_.modes

    @property
    def amplitudes_(self):
        check_is_fitted(self, "decomposition_")
        return self.decomposition_.amplitudes

    @property
    def singular_values_(self):
        check_is_fitted(self, "decomposition_")
        return self.decomposition_.sigma_full

    @property
    def frequencies_(self):
        check_is_fitted(self, "decomposition_")
        return self.decomposition_.frequencies

    def grid_(self):
        d = self.decomposition_
        return TimeGrid(d.t_start, d.dt, self.n_times_)

    def reconstruct(self, grid=None):
        """Per-realization reconstruction (``n x m``) over the fitted window or ``grid``."""
        check_is_fitted(self, "decomposition_")
        return reconstruct(self.decomposition_, grid or self.grid_())

    def predict(self, times):
        """Ensemble-averaged reconstruction at arbitrary ``times`` (may lie beyond the window)."""
        check_is_fitted(self, "decomposition_")
        return evaluate(self.decomposition_, times).mean(axis=0)

    def score(self, X, y=None):
        """Negative RMSE between the ensemble average of ``X`` and the averaged reconstruction."""
        check_is_fitted(self, "decomposition_")
        if isinstance(X, TrajectoryEnsemble):
            data, times = X.data, X.times
        else:
            data = check_trajectories(X)
            times = self.decomposition_.t_start + np.arange(data.shape[1]) * self.decomposition_.dt
        return -reconstruction_error(data.mean(axis=0), self.predict(times))
