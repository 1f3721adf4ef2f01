"""Stochastic qubit dephasing trajectories under 1/f (random telegraph) and white noise.

The qubit precesses about z at angular frequency ``omega0 = 2*pi*f0`` while a
classical noise field ``xi(t)`` shifts the splitting::

    H(t) = (omega0 - xi(t)) / 2 * sigma_z

Units throughout: time in microseconds, frequency in MHz, angular rates in rad/us.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._validation import ConfigError, NumericalError, check_int, check_positive, warn

INITIAL_STATES = ("plus_x", "minus_x")
NOISE_KINDS = ("oneoverf", "white")

# spawn-key tag for the per-ensemble switching-rate stream; rows use (i,)
_RATES_STREAM = 0x52415445


# ---------------------------------------------------------------------------
# configuration types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeGrid:
    """Uniform sampling grid: sample ``k`` sits at ``t_start + k * dt``."""

    t_start: float
    dt: float
    m: int

    def __post_init__(self):
        check_positive(self.dt, "dt")
        check_int(self.m, "m", minimum=2)
        if not np.isfinite(self.t_start):
            raise ConfigError("t_start must be finite")

    @classmethod
    def from_span(cls, t_start, t_end, dt):
        """Grid covering ``[t_start, t_end]`` inclusive (rounded to whole steps)."""
        n_steps = int(round((t_end - t_start) / dt))
        return cls(float(t_start), float(dt), n_steps + 1)

    @property
    def times(self):
        return self.t_start + np.arange(self.m) * self.dt

    @property
    def span(self):
        return (self.m - 1) * self.dt

    @property
    def t_end(self):
        return self.t_start + self.span

    @property
    def nyquist(self):
        """Nyquist frequency in MHz."""
        return 0.5 / self.dt

    def window(self, t_end):
        """Leading sub-grid ending at the last sample ``<= t_end``."""
        m = int(np.floor((t_end - self.t_start) / self.dt + 1e-9)) + 1
        if m < 2 or m > self.m:
            raise ConfigError(
                f"window end {t_end} outside grid [{self.t_start}, {self.t_end}]"
            )
        return TimeGrid(self.t_start, self.dt, m)

    def to_dict(self):
        return {"t_start": self.t_start, "dt": self.dt, "m": self.m}


@dataclass(frozen=True)
class QubitConfig:
    f0: float = 1.0
    initial_state: str = "plus_x"

    def __post_init__(self):
        check_positive(self.f0, "f0")
        if self.initial_state not in INITIAL_STATES:
            raise ConfigError(
                f"initial_state must be one of {INITIAL_STATES}, got {self.initial_state!r}"
            )

    @property
    def omega0(self):
        return 2.0 * np.pi * self.f0

    @property
    def sign(self):
        return 1.0 if self.initial_state == "plus_x" else -1.0

    def to_dict(self):
        return {"f0": self.f0, "initial_state": self.initial_state}


@dataclass(frozen=True)
class FluctuatorEnsembleConfig:
    """``n_fluctuators`` symmetric telegraph sources of amplitude ``coupling`` (rad/us)
    whose switching rates are log-uniform on ``[gamma_lo, gamma_hi]`` (1/us)."""

    n_fluctuators: int
    coupling: float
    gamma_lo: float
    gamma_hi: float

    def __post_init__(self):
        check_int(self.n_fluctuators, "n_fluctuators", minimum=1)
        check_positive(self.coupling, "coupling", strict=False)
        check_positive(self.gamma_lo, "gamma_lo")
        check_positive(self.gamma_hi, "gamma_hi")
        if self.gamma_lo > self.gamma_hi:
            raise ConfigError(
                f"gamma_lo ({self.gamma_lo}) must not exceed gamma_hi ({self.gamma_hi})"
            )

    @classmethod
    def with_total_rms(cls, n_fluctuators, total_rms, gamma_lo, gamma_hi):
        """Pick the per-fluctuator coupling so that ``n_fluctuators * coupling**2 == total_rms**2``."""
        return cls(
            n_fluctuators,
            coupling_for_total_power(n_fluctuators, total_rms**2),
            gamma_lo,
            gamma_hi,
        )

    @property
    def total_power(self):
        """Stationary variance of the summed noise, ``N_F * vbar**2``."""
        return self.n_fluctuators * self.coupling**2

    def to_dict(self):
        return {
            "n_fluctuators": self.n_fluctuators,
            "coupling": self.coupling,
            "gamma_lo": self.gamma_lo,
            "gamma_hi": self.gamma_hi,
        }


@dataclass(frozen=True)
class WhiteNoiseConfig:
    """Diffusion coefficient of the accumulated phase: ``Var(int xi dt) = strength * t``."""

    strength: float

    def __post_init__(self):
        check_positive(self.strength, "strength", strict=False)

    def to_dict(self):
        return {"strength": self.strength}


def coupling_for_total_power(n_fluctuators, total_power):
    """Per-fluctuator coupling that holds ``N_F * vbar**2`` fixed while ``N_F`` varies."""
    check_int(n_fluctuators, "n_fluctuators", minimum=1)
    check_positive(total_power, "total_power", strict=False)
    return float(np.sqrt(total_power / n_fluctuators))


# ---------------------------------------------------------------------------
# data containers
# ---------------------------------------------------------------------------


@dataclass
class NoisePath:
    values: np.ndarray
    grid: TimeGrid
    jump_times: np.ndarray = field(default_factory=lambda: np.empty(0))


class TrajectoryRow(NamedTuple):
    sx: np.ndarray
    sy: np.ndarray
    noise: NoisePath | None


@dataclass
class TrajectoryEnsemble:
    """``n x m`` matrix of per-realization ``<sigma_x>(t_k)``.

    ``data_y`` holds ``<sigma_y>`` when the ensemble was simulated here; it is
    only needed for :func:`coherence_envelope`.
    """

    data: np.ndarray
    grid: TimeGrid
    seed: int | None = None
    data_y: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=np.float64))
        if self.data.shape[1] != self.grid.m:
            raise ConfigError(
                f"data has {self.data.shape[1]} columns but grid has {self.grid.m} samples"
            )
        if self.data.shape[0] < 1:
            raise ConfigError("ensemble needs at least one realization")
        if self.data_y is not None:
            self.data_y = np.atleast_2d(np.asarray(self.data_y, dtype=np.float64))
            if self.data_y.shape != self.data.shape:
                raise ConfigError("data_y must match data in shape")

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def m(self):
        return self.data.shape[1]

    @property
    def times(self):
        return self.grid.times

    def window(self, t_end):
        """Copy restricted to the leading sub-grid ending at ``t_end``."""
        grid = self.grid.window(t_end)
        data_y = None if self.data_y is None else self.data_y[:, : grid.m].copy()
        return TrajectoryEnsemble(
            self.data[:, : grid.m].copy(), grid, self.seed, data_y, dict(self.metadata)
        )


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------


def derive_rng(base_seed, *key):
    """Independent generator for stream ``key`` of ``base_seed``.

    Counter-based: the stream depends only on ``(base_seed, key)``, never on
    how many other streams were drawn before, so serial and threaded runs agree.
    """
    seq = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(seq))


def rates_rng(base_seed):
    return derive_rng(base_seed, _RATES_STREAM)


def worker_count():
    value = os.environ.get("STOCHDMD_THREADS")
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            raise ConfigError(f"STOCHDMD_THREADS must be an integer, got {value!r}")
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# random telegraph noise
# ---------------------------------------------------------------------------


def sample_switching_rates(config, rng):
    """Draw ``n_fluctuators`` rates from ``P(gamma) ~ 1/gamma`` on ``[gamma_lo, gamma_hi]``."""
    if config.gamma_lo == config.gamma_hi:
        return np.full(config.n_fluctuators, float(config.gamma_lo))
    log_rates = rng.uniform(
        np.log(config.gamma_lo), np.log(config.gamma_hi), config.n_fluctuators
    )
    return np.exp(log_rates)


def _telegraph_jumps(rates, span, rng):
    """Exponential waiting-time jump times on ``(0, span]`` for each rate.

    Returns ``(owner, times)``: flat arrays sorted by owner then time.
    """
    rates = np.asarray(rates, dtype=np.float64)
    n = rates.size
    expected = rates * span
    guess = np.ceil(expected + 6.0 * np.sqrt(expected) + 8.0).astype(np.int64)
    owner = np.repeat(np.arange(n), guess)
    waits = rng.exponential(1.0, owner.size) / rates[owner]
    times = _segmented_cumsum(waits, guess)
    last = np.cumsum(guess) - 1
    short = np.flatnonzero(times[last] <= span)
    # extend the rare sources whose draws ended before the span was covered
    while short.size:
        extra = guess[short]
        add_owner = np.repeat(short, extra)
        add_waits = rng.exponential(1.0, add_owner.size) / rates[add_owner]
        offsets = np.repeat(times[last[short]], extra)
        add_times = _segmented_cumsum(add_waits, extra) + offsets
        owner = np.concatenate([owner, add_owner])
        times = np.concatenate([times, add_times])
        order = np.lexsort((times, owner))
        owner, times = owner[order], times[order]
        counts = np.bincount(owner, minlength=n)
        last = np.cumsum(counts) - 1
        guess = counts
        short = np.flatnonzero(times[last] <= span)
    keep = times <= span
    return owner[keep], times[keep]


def _segmented_cumsum(values, lengths):
    total = np.cumsum(values)
    starts = np.cumsum(lengths) - lengths
    offsets = np.where(starts > 0, total[starts - 1], 0.0)
    return total - np.repeat(offsets, lengths)


def simulate_rtn_path(rate, coupling, grid, rng):
    """One symmetric telegraph path ``xi(t) = +-coupling`` sampled on ``grid``."""
    check_positive(rate, "rate")
    _, times = _telegraph_jumps(np.array([rate]), grid.span, rng)
    sign = rng.choice((-1.0, 1.0))
    rel = grid.times - grid.t_start
    n_before = np.searchsorted(times, rel, side="right")
    values = coupling * sign * (1.0 - 2.0 * (n_before % 2))
    return NoisePath(values, grid, grid.t_start + times)


def simulate_rtn_ensemble(rate, coupling, grid, n_paths, rng):
    """``n_paths x m`` matrix of independent single-fluctuator paths (vectorized)."""
    check_positive(rate, "rate")
    check_int(n_paths, "n_paths", minimum=1)
    owner, times = _telegraph_jumps(np.full(n_paths, float(rate)), grid.span, rng)
    signs = rng.choice((-1.0, 1.0), n_paths)
    rel = grid.times - grid.t_start
    # one searchsorted over (owner, time) keys laid out on disjoint intervals
    stride = grid.span + 1.0
    keys = owner * stride + times
    queries = np.arange(n_paths)[:, None] * stride + rel[None, :]
    counts = np.searchsorted(keys, queries, side="right")
    counts -= np.searchsorted(keys, np.arange(n_paths) * stride, side="left")[:, None]
    return coupling * signs[:, None] * (1.0 - 2.0 * (counts % 2))


def _summed_telegraph(rates, coupling, grid, rng):
    """Summed noise and its exact running integral at the grid samples."""
    owner, times = _telegraph_jumps(rates, grid.span, rng)
    signs = rng.choice((-1.0, 1.0), rates.size)
    counts = np.bincount(owner, minlength=rates.size)
    jump_no = np.arange(owner.size) - np.repeat(np.cumsum(counts) - counts, counts)
    # value of source `owner` just before its jump number `jump_no` (0-based)
    before = coupling * signs[owner] * (1.0 - 2.0 * (jump_no % 2))
    order = np.argsort(times, kind="stable")
    ev_t = times[order]
    xi0 = coupling * signs.sum()
    seg_start = np.concatenate([[0.0], ev_t])
    seg_value = xi0 + np.concatenate([[0.0], np.cumsum(-2.0 * before[order])])
    seg_int = np.concatenate([[0.0], np.cumsum(seg_value[:-1] * np.diff(seg_start))])
    rel = grid.times - grid.t_start
    idx = np.searchsorted(seg_start, rel, side="right") - 1
    xi = seg_value[idx]
    integral = seg_int[idx] + xi * (rel - seg_start[idx])
    return xi, integral, grid.t_start + ev_t


def simulate_oneoverf_trajectory(qubit, fluct, rates, grid, rng):
    """Single realization under summed telegraph noise.

    The phase ``theta(t) = omega0 t - int_0^t xi`` is integrated exactly
    between jumps, so there is no time-stepping error.
    """
    rates = np.asarray(rates, dtype=np.float64)
    if rates.size != fluct.n_fluctuators:
        raise ConfigError(
            f"got {rates.size} rates for {fluct.n_fluctuators} fluctuators"
        )
    xi, integral, jumps = _summed_telegraph(rates, fluct.coupling, grid, rng)
    theta = qubit.omega0 * (grid.times - grid.t_start) - integral
    s = qubit.sign
    return TrajectoryRow(s * np.cos(theta), s * np.sin(theta), NoisePath(xi, grid, jumps))


# ---------------------------------------------------------------------------
# white noise (stochastic Schroedinger equation)
# ---------------------------------------------------------------------------


def _white_increments(noise, grid, rng):
    return rng.standard_normal(grid.m - 1) * np.sqrt(noise.strength * grid.dt)


def _integrate_sse(qubit, grid, dW):
    """Euler-Maruyama over rows of Wiener increments ``dW`` (shape ``(n, m-1)``).

    Free precession under ``H0`` commutes with the noise term and is applied
    exactly; the noise step ``psi -> (1 + i dW sigma_z / 2) psi`` is followed by
    renormalization.
    """
    dW = np.atleast_2d(dW)
    n, steps = dW.shape
    c0 = np.full(n, 1.0 / np.sqrt(2.0), dtype=np.complex128)
    c1 = np.full(n, qubit.sign / np.sqrt(2.0), dtype=np.complex128)
    rot0 = np.exp(-0.5j * qubit.omega0 * grid.dt)
    rot1 = np.conj(rot0)
    sx = np.empty((n, steps + 1))
    sy = np.empty((n, steps + 1))
    norm_dev = 0.0
    coh = np.conj(c0) * c1
    sx[:, 0], sy[:, 0] = 2.0 * coh.real, 2.0 * coh.imag
    for k in range(steps):
        half = 0.5j * dW[:, k]
        c0 = rot0 * c0 * (1.0 + half)
        c1 = rot1 * c1 * (1.0 - half)
        norm = np.sqrt(np.abs(c0) ** 2 + np.abs(c1) ** 2)
        c0 /= norm
        c1 /= norm
        coh = np.conj(c0) * c1
        sx[:, k + 1] = 2.0 * coh.real
        sy[:, k + 1] = 2.0 * coh.imag
        if k % 64 == 0 or k == steps - 1:
            if not (np.all(np.isfinite(c0)) and np.all(np.isfinite(c1))):
                raise NumericalError(f"non-finite state at step {k + 1} (t={grid.times[k + 1]:.6g})")
            norm_dev = max(norm_dev, float(np.max(np.abs(np.abs(c0) ** 2 + np.abs(c1) ** 2 - 1.0))))
    if norm_dev > 1e-12:
        raise NumericalError(f"state norm drifted by {norm_dev:.3g} after renormalization")
    return np.clip(sx, -1.0, 1.0), np.clip(sy, -1.0, 1.0)


def _check_white_step(noise, grid):
    if noise.strength * grid.dt > 0.1:
        warn(
            f"strength*dt = {noise.strength * grid.dt:.3g} is not small; "
            "Euler-Maruyama dephasing rate will be biased"
        )


def simulate_white_trajectory(qubit, noise, grid, rng):
    """Single realization under white (Wiener) dephasing noise."""
    _check_white_step(noise, grid)
    sx, sy = _integrate_sse(qubit, grid, _white_increments(noise, grid, rng)[None, :])
    return TrajectoryRow(sx[0], sy[0], None)


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


def generate_ensemble(kind, qubit, noise, n, grid, base_seed, *, n_workers=None):
    """Batch driver: row ``i`` uses the stream ``derive_rng(base_seed, i)``.

    ``noise`` is a :class:`FluctuatorEnsembleConfig` for ``kind="oneoverf"`` or
    a :class:`WhiteNoiseConfig` for ``kind="white"``. Output is bit-identical
    for any worker count.
    """
    check_int(n, "n", minimum=1)
    if kind not in NOISE_KINDS:
        raise ConfigError(f"kind must be one of {NOISE_KINDS}, got {kind!r}")
    n_workers = worker_count() if n_workers is None else max(1, int(n_workers))
    meta = {
        "kind": kind,
        "base_seed": int(base_seed),
        "qubit": qubit.to_dict(),
        "grid": grid.to_dict(),
        "noise": noise.to_dict(),
        "n": n,
    }

    if kind == "oneoverf":
        if not isinstance(noise, FluctuatorEnsembleConfig):
            raise ConfigError("oneoverf ensembles need a FluctuatorEnsembleConfig")
        rates = sample_switching_rates(noise, rates_rng(base_seed))

        def row(i):
            try:
                r = simulate_oneoverf_trajectory(qubit, noise, rates, grid, derive_rng(base_seed, i))
            except (ConfigError, NumericalError) as exc:
                raise type(exc)(f"row {i}: {exc}") from exc
            return r.sx, r.sy

        rows = _map_rows(row, n, n_workers)
        sx = np.vstack([r[0] for r in rows])
        sy = np.vstack([r[1] for r in rows])
        meta["rates_summary"] = {
            "min": float(rates.min()),
            "max": float(rates.max()),
            "geometric_mean": float(np.exp(np.log(rates).mean())),
        }
    else:
        if not isinstance(noise, WhiteNoiseConfig):
            raise ConfigError("white ensembles need a WhiteNoiseConfig")
        _check_white_step(noise, grid)
        increments = _map_rows(
            lambda i: _white_increments(noise, grid, derive_rng(base_seed, i)), n, n_workers
        )
        dW = np.vstack(increments)
        blocks = []
        # rows are independent; chunking only bounds memory
        for start in range(0, n, 2048):
            try:
                blocks.append(_integrate_sse(qubit, grid, dW[start : start + 2048]))
            except NumericalError as exc:
                raise NumericalError(f"rows {start}..{min(n, start + 2048) - 1}: {exc}") from exc
        sx = np.vstack([b[0] for b in blocks])
        sy = np.vstack([b[1] for b in blocks])
    return TrajectoryEnsemble(sx, grid, int(base_seed), sy, meta)


def _map_rows(func, n, n_workers):
    if n_workers <= 1 or n == 1:
        return [func(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(func, range(n)))


def ensemble_average(ens):
    """Column-wise mean ``X^Avg`` of the trajectory matrix."""
    data = ens.data if isinstance(ens, TrajectoryEnsemble) else np.atleast_2d(ens)
    return data.mean(axis=0)


def coherence_envelope(ens, *, return_stderr=False):
    """Magnitude of the averaged transverse Bloch vector, ``2|rho_01|(t)``.

    With ``return_stderr`` the delta-method Monte Carlo standard error is
    returned as well.
    """
    if ens.data_y is None:
        raise ConfigError("coherence envelope needs <sigma_y>; ensemble has none stored")
    z = ens.data + 1j * ens.data_y
    mean = z.mean(axis=0)
    env = np.abs(mean)
    if not return_stderr:
        return env
    direction = np.where(env > 0, mean / np.where(env > 0, env, 1.0), 1.0)
    proj = (z * np.conj(direction)).real
    stderr = proj.std(axis=0, ddof=1) / np.sqrt(ens.n) if ens.n > 1 else np.zeros_like(env)
    return env, stderr
