"""Independent references for the simulators and the decomposition.

Everything here avoids the code paths in :mod:`noise_sim` and :mod:`dmd`.
For example, the telegraph sampler draws Poisson counts and uniform order
statistics instead of exponential waiting times, and the 1/f spectrum is
integrated numerically instead of through the closed form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy import integrate

from ._validation import ConfigError, NumericalError, check_int, check_positive, warn
from .noise_sim import TimeGrid, TrajectoryEnsemble, derive_rng

SIGMA_Z = np.diag([1.0, -1.0]).astype(np.complex128)
RK4_LOCAL_TOL = 1e-8
STEP_SCALE = 0.02
MC_CHUNK = 4096
_ORACLE_STREAM = 0x4F524143


# ---------------------------------------------------------------------------
# pinned constants
# ---------------------------------------------------------------------------


def load_constants():
    """Versioned calibration constants shipped with the package."""
    text = resources.files("stochdmd").joinpath("constants.json").read_text(encoding="utf-8")
    return json.loads(text)


def white_noise_factor():
    """``c`` in ``gamma_eff = c * strength`` (white noise to Lindblad rate)."""
    return float(load_constants()["white_noise_lindblad_factor"])


# ---------------------------------------------------------------------------
# Lindblad master equation
# ---------------------------------------------------------------------------


@dataclass
class LindbladResult:
    times: np.ndarray
    coherence: np.ndarray
    sx: np.ndarray
    sy: np.ndarray
    rho: np.ndarray
    substeps: int
    max_trace_error: float
    min_eigenvalue: float


def _lindblad_rhs(rho, hamiltonian, gamma_eff):
    comm = hamiltonian @ rho - rho @ hamiltonian
    return -1j * comm + gamma_eff * (SIGMA_Z @ rho @ SIGMA_Z - rho)


def _rk4_step(rho, h, hamiltonian, gamma_eff):
    k1 = _lindblad_rhs(rho, hamiltonian, gamma_eff)
    k2 = _lindblad_rhs(rho + 0.5 * h * k1, hamiltonian, gamma_eff)
    k3 = _lindblad_rhs(rho + 0.5 * h * k2, hamiltonian, gamma_eff)
    k4 = _lindblad_rhs(rho + h * k3, hamiltonian, gamma_eff)
    return rho + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _initial_rho(sign):
    psi = np.array([1.0, sign], dtype=np.complex128) / np.sqrt(2.0)
    return np.outer(psi, psi.conj())


def lindblad_integrate(omega0, gamma_eff, grid, *, sign=1.0, substeps=None):
    """Pure dephasing ``L = sigma_z`` at rate ``gamma_eff`` with ``H = omega0/2 sigma_z``.

    Fixed-step RK4 with ``substeps`` steps per grid interval. The step is
    chosen so that ``h * (|omega0| + 2 gamma_eff) <= STEP_SCALE`` and checked by step
    doubling on the first interval; if the local error estimate exceeds 1e-8
    the step is halved (with a warning) until it does not.

    Returns a :class:`LindbladResult` whose ``coherence`` is ``2 |rho_01|``
    (1 for a pure equatorial state) and whose ``sx``/``sy`` follow the same
    sign convention as the trajectory simulators.
    """
    check_positive(gamma_eff, "gamma_eff", strict=False)
    grid = grid if isinstance(grid, TimeGrid) else TimeGrid(*grid)
    hamiltonian = 0.5 * omega0 * SIGMA_Z
    scale = abs(omega0) + 2.0 * gamma_eff
    if substeps is None:
        substeps = max(1, int(np.ceil(grid.dt * scale / STEP_SCALE)))
    check_int(substeps, "substeps", minimum=1)

    rho0 = _initial_rho(sign)
    while True:
        h = grid.dt / substeps
        one = _rk4_step(rho0, h, hamiltonian, gamma_eff)
        half = _rk4_step(_rk4_step(rho0, 0.5 * h, hamiltonian, gamma_eff), 0.5 * h, hamiltonian, gamma_eff)
        err = float(np.max(np.abs(one - half)))
        if err <= RK4_LOCAL_TOL:
            break
        substeps *= 2
        warn(f"RK4 local error {err:.2e} above {RK4_LOCAL_TOL:g}; refining to {substeps} substeps")

    rho = np.empty((grid.m, 2, 2), dtype=np.complex128)
    rho[0] = rho0
    current = rho0
    for k in range(1, grid.m):
        for _ in range(substeps):
            current = _rk4_step(current, h, hamiltonian, gamma_eff)
        rho[k] = current

    trace_err = float(np.max(np.abs(np.trace(rho, axis1=1, axis2=2) - 1.0)))
    herm_err = float(np.max(np.abs(rho - np.conj(np.swapaxes(rho, 1, 2)))))
    min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (rho + np.conj(np.swapaxes(rho, 1, 2))))))
    if trace_err > 1e-10 or herm_err > 1e-10 or min_eig < -1e-10:
        raise NumericalError(
            f"density matrix left the physical set: trace error {trace_err:.2e}, "
            f"hermiticity error {herm_err:.2e}, min eigenvalue {min_eig:.2e}"
        )
    # the simulators track conj(c0) c1 = rho_10
    rho10 = rho[:, 1, 0]
    return LindbladResult(
        times=grid.times,
        coherence=2.0 * np.abs(rho10),
        sx=2.0 * rho10.real,
        sy=2.0 * rho10.imag,
        rho=rho,
        substeps=substeps,
        max_trace_error=trace_err,
        min_eigenvalue=min_eig,
    )


def lindblad_closed_form(omega0, gamma_eff, times, *, sign=1.0):
    """Exact ``(coherence, sx)`` of the same Lindbladian: decay ``exp(-2 gamma_eff t)``."""
    t = np.asarray(times, dtype=np.float64)
    decay = np.exp(-2.0 * gamma_eff * t)
    return decay, sign * decay * np.cos(omega0 * t)


def white_noise_oracle(omega0, strength, grid, *, factor=None, sign=1.0):
    """Lindblad reference for a white-noise ensemble of the given strength."""
    factor = white_noise_factor() if factor is None else factor
    return lindblad_integrate(omega0, factor * strength, grid, sign=sign)


# ---------------------------------------------------------------------------
# telegraph Monte Carlo
# ---------------------------------------------------------------------------


@dataclass
class CoherenceEstimate:
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_samples: int

    @property
    def magnitude(self):
        return np.abs(self.mean)


def _rtn_phase_chunk(rate, v, t, n, rng):
    """Accumulated phase ``v * int_0^t s`` for ``n`` independent switches.

    Jump times are a Poisson number of sorted uniforms on ``[0, t_max]``; with
    ``tau_1 < tau_2 < ...`` the integral is
    ``s0 * (t (-1)^N(t) + 2 sum_{j <= N(t)} (-1)^(j-1) tau_j)``.
    """
    t_max = float(t.max()) if t.size else 0.0
    counts = rng.poisson(rate * t_max, size=n)
    width = int(counts.max()) if n else 0
    tau = np.full((n, max(width, 1)), np.inf)
    if width:
        draws = rng.uniform(0.0, t_max, size=(n, width))
        draws[np.arange(width)[None, :] >= counts[:, None]] = np.inf
        tau = np.sort(draws, axis=1)
    s0 = rng.choice(np.array([-1.0, 1.0]), size=n)
    alt = np.where(np.arange(tau.shape[1]) % 2 == 0, 1.0, -1.0)
    signed = np.where(np.isfinite(tau), alt * tau, 0.0)
    phase = np.empty((n, t.size))
    for k, tk in enumerate(t):
        before = tau < tk
        n_before = before.sum(axis=1)
        partial = np.where(before, signed, 0.0).sum(axis=1)
        parity = np.where(n_before % 2 == 0, 1.0, -1.0)
        phase[:, k] = v * s0 * (tk * parity + 2.0 * partial)
    return phase


def rtn_coherence_mc(rate, v, t_points, n_samples, seed):
    """Brute-force ``<exp(i phi(t))>`` for one telegraph fluctuator.

    ``rate`` is the flip rate (autocorrelation ``exp(-2 rate tau)``) and ``v``
    the coupling in rad/us. Samples are processed in fixed chunks of
    ``MC_CHUNK`` with one derived stream per chunk, so the result depends only
    on ``seed``.
    """
    check_positive(rate, "rate", strict=False)
    check_int(n_samples, "n_samples", minimum=1)
    if n_samples < 10_000:
        warn(f"n_samples = {n_samples} is below the 10^4 recommended for a reference estimate")
    t = np.asarray(t_points, dtype=np.float64)
    if np.any(t < 0):
        raise ConfigError("t_points must be non-negative")
    total = np.zeros(t.size, dtype=np.complex128)
    total_sq_re = np.zeros(t.size)
    total_sq_im = np.zeros(t.size)
    for c, start in enumerate(range(0, n_samples, MC_CHUNK)):
        size = min(MC_CHUNK, n_samples - start)
        rng = derive_rng(seed, _ORACLE_STREAM, c)
        z = np.exp(1j * _rtn_phase_chunk(rate, v, t, size, rng))
        total += z.sum(axis=0)
        total_sq_re += (z.real**2).sum(axis=0)
        total_sq_im += (z.imag**2).sum(axis=0)
    mean = total / n_samples
    var_re = np.maximum(total_sq_re / n_samples - mean.real**2, 0.0)
    var_im = np.maximum(total_sq_im / n_samples - mean.imag**2, 0.0)
    stderr = np.sqrt((var_re + var_im) / max(n_samples - 1, 1))
    return CoherenceEstimate(t, mean, stderr, n_samples)


def rtn_coherence_exact(rate, v, times):
    """Closed-form ``<exp(i phi(t))>`` for a symmetric telegraph switch.

    Standard result for flip rate ``rate``: with ``mu = sqrt(rate^2 - v^2)``,
    ``C(t) = e^{-rate t} (cosh(mu t) + rate/mu sinh(mu t))`` (analytically
    continued through ``mu = 0``).
    """
    t = np.asarray(times, dtype=np.float64)
    mu = np.sqrt(complex(rate**2 - v**2))
    if abs(mu) < 1e-12:
        return np.exp(-rate * t) * (1.0 + rate * t)
    out = np.exp(-rate * t) * (np.cosh(mu * t) + rate / mu * np.sinh(mu * t))
    return out.real


# ---------------------------------------------------------------------------
# exactly low-rank linear systems
# ---------------------------------------------------------------------------


@dataclass
class LinearSystemSpec:
    """Ground truth ``x_j(k) = Re sum_i mixing[j, i] initial_i lambda_i^k``."""

    eigenvalues: np.ndarray
    mixing: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=np.complex128).ravel()
        self.mixing = np.atleast_2d(np.asarray(self.mixing, dtype=np.float64))
        self.initial = np.asarray(self.initial, dtype=np.complex128).ravel()
        r = self.eigenvalues.size
        if self.mixing.shape[1] != r or self.initial.size != r:
            raise ConfigError(
                f"shape mismatch: {r} eigenvalues, mixing {self.mixing.shape}, "
                f"{self.initial.size} initial coefficients"
            )
        if np.any(np.abs(self.eigenvalues) > 1.05):
            raise ConfigError("eigenvalue magnitudes must be <= 1.05")
        conj = np.conj(self.eigenvalues)
        for z in conj:
            if np.min(np.abs(self.eigenvalues - z)) > 1e-12:
                raise ConfigError(f"eigenvalues not closed under conjugation: missing {z}")
        if np.linalg.matrix_rank(self.mixing) < r:
            raise ConfigError("mixing matrix must have full column rank")

    @property
    def rank(self):
        return self.eigenvalues.size

    @classmethod
    def random(cls, eigenvalues, n_rows, seed):
        rng = np.random.default_rng(seed)
        lam = np.asarray(eigenvalues, dtype=np.complex128)
        mixing = rng.standard_normal((n_rows, lam.size))
        initial = rng.standard_normal(lam.size) + 1j * rng.standard_normal(lam.size)
        return cls(lam, mixing, initial)


def synth_linear_ensemble(spec, grid):
    """Exactly rank-``r`` snapshot data generated by ``spec`` on ``grid``."""
    k = np.arange(grid.m)
    series = spec.initial[:, None] * spec.eigenvalues[:, None] ** k[None, :]
    data = (spec.mixing @ series).real
    meta = {"kind": "linear", "rank": spec.rank}
    return TrajectoryEnsemble(data, grid, None, None, meta)


# ---------------------------------------------------------------------------
# 1/f quadrature
# ---------------------------------------------------------------------------


def quadrature_oneoverf(omega, vbar, gamma_lo, gamma_hi):
    """``int P(g) vbar^2 4 g / (4 g^2 + omega^2) dg`` with log-uniform ``P``.

    Integrated in ``u = ln g`` (where ``P(g) dg = du / ln(gamma_hi/gamma_lo)``)
    to absolute tolerance 1e-10. Even in ``omega``.
    """
    check_positive(gamma_lo, "gamma_lo")
    check_positive(gamma_hi, "gamma_hi")
    if gamma_hi < gamma_lo:
        raise ConfigError("gamma_lo must be <= gamma_hi")
    omegas = np.atleast_1d(np.abs(np.asarray(omega, dtype=np.float64)))
    if np.any(omegas == 0):
        raise ConfigError("omega must be non-zero")
    width = np.log(gamma_hi / gamma_lo)
    if width == 0:
        g = gamma_lo
        out = vbar**2 * 4.0 * g / (4.0 * g**2 + omegas**2)
        return out if np.ndim(omega) else float(out[0])
    out = np.empty_like(omegas)
    for i, w in enumerate(omegas):

        def integrand(u, w=w):
            g = np.exp(u)
            return 4.0 * g / (4.0 * g * g + w * w)

        # the integrand peaks at g = w/2
        knee = np.log(w / 2.0)
        points = [knee] if np.log(gamma_lo) < knee < np.log(gamma_hi) else None
        value, abserr = integrate.quad(
            integrand, np.log(gamma_lo), np.log(gamma_hi), epsabs=1e-12, epsrel=1e-12,
            limit=200, points=points,
        )
        if abserr > 1e-10 * width:
            raise NumericalError(f"quadrature did not converge at omega={w:g}: error {abserr:.2e}")
        out[i] = vbar**2 * value / width
    return out if np.ndim(omega) else float(out[0])


# ---------------------------------------------------------------------------
# simulator-versus-oracle report
# ---------------------------------------------------------------------------

RTN_VALIDATION_CONFIGS = ((1.0, np.pi), (0.1, 1.0), (10.0, 2.0))
VALIDATION_CHECKS = (
    "lindblad_closed_form",
    "white_vs_lindblad",
    "rtn_mc_vs_closed_form",
    *(f"rtn_sim_vs_mc[rate={r:g},v={v:.4g}]" for r, v in RTN_VALIDATION_CONFIGS),
    "oneoverf_quadrature",
    "dmd_linear_recovery",
)


def _row(check, configuration, simulator, oracle, sigma, passed):
    return {
        "check": check,
        "configuration": configuration,
        "simulator": float(simulator),
        "oracle": float(oracle),
        "sigma": float(sigma),
        "pass": bool(passed),
    }


def _worst_z(sim, ref, sigma, atol=1e-12):
    """Index and value of the largest ``|sim - ref| / sigma``.

    ``atol`` is added in quadrature to ``sigma`` so that exactly known points
    (``t = 0``) are compared up to round-off rather than to zero.
    """
    z = np.abs(sim - ref) / np.sqrt(np.asarray(sigma) ** 2 + atol**2)
    k = int(np.argmax(z))
    return k, float(z[k])


def run_validation(seed=0, *, factor=None, n_white=2000, n_rtn=4000, n_mc=10_000):
    """Run every check in :data:`VALIDATION_CHECKS` and return report rows.

    Statistical rows pass when the worst grid point lies within 3 combined
    standard errors; deterministic rows use absolute tolerances.
    """
    from .dmd import build_snapshots, decompose
    from .noise_sim import (
        FluctuatorEnsembleConfig,
        QubitConfig,
        WhiteNoiseConfig,
        coherence_envelope,
        generate_ensemble,
    )
    from .spectral import analytic_oneoverf

    qubit = QubitConfig()
    rows = []

    grid = TimeGrid.from_span(0.0, 2.0, 0.01)
    res = lindblad_integrate(qubit.omega0, np.pi / 4, grid)
    exact, _ = lindblad_closed_form(qubit.omega0, np.pi / 4, grid.times)
    k = int(np.argmax(np.abs(res.coherence - exact)))
    rows.append(_row(VALIDATION_CHECKS[0], "omega0=2pi gamma_eff=pi/4 t<=2 dt=0.01",
                     res.coherence[k], exact[k], 1e-8, abs(res.coherence[k] - exact[k]) <= 1e-8))

    factor = white_noise_factor() if factor is None else factor
    grid = TimeGrid.from_span(0.0, 3.0, 0.01)
    ens = generate_ensemble("white", qubit, WhiteNoiseConfig(np.pi), n_white, grid, seed)
    env, err = coherence_envelope(ens, return_stderr=True)
    ref = lindblad_integrate(qubit.omega0, factor * np.pi, grid).coherence
    k, z = _worst_z(env, ref, err)
    rows.append(_row(VALIDATION_CHECKS[1], f"strength=pi n={n_white} c={factor:g} seed={seed}",
                     env[k], ref[k], err[k], z <= 3.0))

    t = np.linspace(0.0, 3.0, 31)
    mc = rtn_coherence_mc(1.0, np.pi, t, n_mc, seed)
    exact = rtn_coherence_exact(1.0, np.pi, t)
    k, z = _worst_z(mc.mean.real, exact, mc.stderr)
    rows.append(_row(VALIDATION_CHECKS[2], f"rate=1 v=pi n={n_mc} seed={seed}",
                     mc.mean.real[k], exact[k], mc.stderr[k], z <= 3.0))

    grid = TimeGrid.from_span(0.0, 3.0, 0.05)
    for i, (rate, v) in enumerate(RTN_VALIDATION_CONFIGS):
        fluct = FluctuatorEnsembleConfig(1, v, rate, rate)
        sim = generate_ensemble("oneoverf", qubit, fluct, n_rtn, grid, seed + 1 + i)
        env, err_sim = coherence_envelope(sim, return_stderr=True)
        mc = rtn_coherence_mc(rate, v, grid.times, n_mc, seed + 101 + i)
        sigma = np.sqrt(err_sim**2 + mc.stderr**2)
        k, z = _worst_z(env, mc.magnitude, sigma)
        rows.append(_row(VALIDATION_CHECKS[3 + i], f"n_sim={n_rtn} n_mc={n_mc} seed={seed}",
                         env[k], mc.magnitude[k], sigma[k], z <= 3.0))

    w = np.logspace(-2, 2, 20)
    quad = quadrature_oneoverf(w, 1.0, 0.01, 10.0)
    closed = analytic_oneoverf(w, 1.0, 0.01, 10.0)
    k = int(np.argmax(np.abs(quad - closed)))
    rows.append(_row(VALIDATION_CHECKS[-2], "vbar=1 gamma in [0.01,10] 20 log-spaced omega",
                     closed[k], quad[k], 1e-8, abs(quad[k] - closed[k]) <= 1e-8))

    lam = np.exp(np.array([0.3j, -0.3j, 1.1j, -1.1j]) - 0.05)
    lam = np.append(lam, 0.9)
    spec = LinearSystemSpec.random(lam, 12, seed)
    grid = TimeGrid(0.0, 0.1, 60)
    decomp = decompose(build_snapshots(synth_linear_ensemble(spec, grid)), lam.size)
    err = max(np.min(np.abs(decomp.eigenvalues - z)) for z in lam)
    rows.append(_row(VALIDATION_CHECKS[-1], "r=5 n=12 m=60", err, 0.0, 1e-8, err <= 1e-8))
    return rows
