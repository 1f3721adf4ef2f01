import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from stochdmd import ConfigError, NumericalError
from stochdmd.dmd import (
    StochasticDMD,
    amplitudes,
    build_snapshots,
    continuous_frequency,
    decompose,
    dmd_modes,
    eigen,
    evaluate,
    reconstruct,
    reconstruction_error,
    reduced_operator,
    truncated_svd,
)
from stochdmd.noise_sim import TimeGrid, TrajectoryEnsemble
from stochdmd.oracle import LinearSystemSpec, synth_linear_ensemble

from conftest import cosine_ensemble


class TestSnapshots:
    def test_m3(self):
        ens = TrajectoryEnsemble(np.arange(6.0).reshape(2, 3), TimeGrid(0, 0.1, 3))
        s = build_snapshots(ens)
        assert s.X.shape == (2, 2) and s.X_shift.shape == (2, 2)
        assert_array_equal(s.X[:, 1], s.X_shift[:, 0])

    def test_constant_in_time(self):
        ens = TrajectoryEnsemble(np.ones((3, 10)) * np.arange(3)[:, None], TimeGrid(0, 0.1, 10))
        s = build_snapshots(ens)
        assert_array_equal(s.X, s.X_shift)

    def test_too_short(self):
        with pytest.raises(ConfigError, match="insufficient snapshots"):
            build_snapshots(np.ones((2, 2)), dt=0.1)

    def test_bare_matrix_needs_dt(self):
        with pytest.raises(ConfigError):
            build_snapshots(np.ones((2, 5)))


class TestSvd:
    def test_identity(self):
        svd = truncated_svd(np.eye(5), 5)
        assert_allclose(svd.sigma, 1.0)

    def test_rank_one(self):
        u, v = np.array([1.0, 2.0, 2.0]), np.array([3.0, 4.0])
        svd = truncated_svd(np.outer(u, v), 1)
        assert svd.sigma[0] == pytest.approx(15.0)
        recon = svd.U_r * svd.sigma @ svd.V_r.T
        assert_allclose(recon, np.outer(u, v), atol=1e-12)

    def test_rank_above_numerical_rank(self):
        with pytest.raises(NumericalError, match="largest admissible rank is 1"):
            truncated_svd(np.outer([1.0, 2.0, 3.0], [1.0, 1.0, 1.0]), 2)

    def test_rank_above_shape(self):
        with pytest.raises(ConfigError):
            truncated_svd(np.ones((3, 2)), 3)


class TestReducedOperator:
    def test_cosine_rotation(self):
        ens = cosine_ensemble(dt=0.05)
        s = build_snapshots(ens)
        svd = truncated_svd(s.X, 2)
        lam, _ = eigen(reduced_operator(svd, s.X_shift))
        expected = np.exp(np.array([1j, -1j]) * 2 * np.pi * 0.05)
        assert_allclose(lam, expected, atol=1e-8)

    def test_identity_propagator(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((6, 9))
        svd = truncated_svd(X, 4)
        assert_allclose(reduced_operator(svd, X), np.eye(4), atol=1e-12)

    def test_permutation_invariance(self):
        spec = LinearSystemSpec.random(np.exp([0.3j, -0.3j, -0.1]), 8, seed=1)
        ens = synth_linear_ensemble(spec, TimeGrid(0, 0.1, 40))
        perm = np.random.default_rng(2).permutation(8)
        a = decompose(build_snapshots(ens), 3).eigenvalues
        b = decompose(build_snapshots(ens.data[perm], dt=0.1), 3).eigenvalues
        assert_allclose(a, b, atol=1e-10)


class TestEigen:
    def test_rotation(self):
        c, s = np.cos(np.pi / 4), np.sin(np.pi / 4)
        lam, _ = eigen(np.array([[c, -s], [s, c]]))
        assert_allclose(lam, np.exp([1j * np.pi / 4, -1j * np.pi / 4]), atol=1e-14)

    def test_diagonal(self):
        lam, W = eigen(np.diag([0.9, 0.5]))
        assert_allclose(lam, [0.9, 0.5])
        assert_allclose(np.abs(W), np.eye(2))

    def test_cube_roots_of_unity(self):
        companion = np.array([[0, 0, 1.0], [1, 0, 0], [0, 1, 0]])
        lam, W = eigen(companion)
        assert_allclose(lam**3, 1.0, atol=1e-10)
        assert lam[0] == pytest.approx(1.0)
        assert lam[1].imag > 0 and lam[2].imag < 0
        assert_allclose(np.linalg.norm(W, axis=0), 1.0)

    def test_non_finite(self):
        with pytest.raises(NumericalError):
            eigen(np.array([[np.nan, 0], [0, 1.0]]))


class TestModesAndAmplitudes:
    def test_conjugate_modes(self, cosine):
        d = decompose(build_snapshots(cosine), 2)
        assert_allclose(d.modes[:, 0], np.conj(d.modes[:, 1]), atol=1e-10)

    def test_rank_one_mode_is_left_singular_vector(self):
        u = np.array([1.0, -2.0, 0.5])
        X = np.outer(u, 0.9 ** np.arange(10))
        s = build_snapshots(X, dt=0.1)
        svd = truncated_svd(s.X, 1)
        lam, W = eigen(reduced_operator(svd, s.X_shift))
        phi = dmd_modes(s.X_shift, svd, W)[:, 0]
        cos = abs(np.vdot(phi, u)) / (np.linalg.norm(phi) * np.linalg.norm(u))
        assert cos == pytest.approx(1.0)
        assert lam[0] == pytest.approx(0.9)

    def test_two_frequencies_separate(self):
        grid = TimeGrid(0, 0.02, 120)
        lam = np.exp(2j * np.pi * np.array([1.0, -1.0, 2.0, -2.0]) * grid.dt)
        spec = LinearSystemSpec.random(lam, 10, seed=3)
        d = decompose(build_snapshots(synth_linear_ensemble(spec, grid)), 4)
        assert_allclose(np.sort(np.abs(d.frequencies)), [1, 1, 2, 2], atol=1e-8)
        low, high = d.modes[:, 0], d.modes[:, 2]
        # the true mode columns are mixing @ c: check each recovered mode lies in its own span
        for mode, idx in ((low, [0, 1]), (high, [2, 3])):
            basis = spec.mixing[:, idx].astype(complex)
            coef, *_ = np.linalg.lstsq(basis, mode, rcond=None)
            assert np.linalg.norm(basis @ coef - mode) / np.linalg.norm(mode) < 1e-6

    def test_identity_columns(self):
        b = amplitudes(np.eye(3, 2, dtype=complex), np.array([1.0, 0.0, 0.0]))
        assert_allclose(b, [1, 0])

    def test_isometry(self):
        rng = np.random.default_rng(1)
        Q, _ = np.linalg.qr(rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3)))
        x0 = rng.standard_normal(6)
        assert_allclose(amplitudes(Q, x0), Q.conj().T @ x0, atol=1e-12)


class TestContinuousFrequency:
    def test_unit(self):
        f, g = continuous_frequency(np.array([1.0]), 0.1)
        assert f[0] == 0 and g[0] == 0

    def test_one_megahertz(self):
        f, g = continuous_frequency(np.array([np.exp(1j * np.pi / 4)]), 0.125)
        assert f[0] == pytest.approx(1.0)
        assert g[0] == pytest.approx(0.0, abs=1e-15)

    def test_pure_decay(self):
        f, g = continuous_frequency(np.array([0.9]), 0.01)
        assert f[0] == 0
        assert g[0] == pytest.approx(np.log(0.9) / 0.01)

    def test_nilpotent(self):
        with pytest.raises(NumericalError, match="nilpotent"):
            continuous_frequency(np.array([0.0, 1.0]), 0.1)


class TestReconstruction:
    def test_cosine_exact(self, cosine):
        d = decompose(build_snapshots(cosine), 2)
        rec, resid = reconstruct(d, cosine.grid, return_residual=True)
        assert np.sqrt(np.mean((rec - cosine.data) ** 2)) < 1e-8
        assert resid < 1e-10

    def test_t0_equals_phi_b(self, cosine):
        d = decompose(build_snapshots(cosine), 2)
        assert_allclose(evaluate(d, [0.0], return_complex=True)[:, 0], d.modes @ d.amplitudes)

    def test_decaying_cosine_continues(self):
        ens = cosine_ensemble(decay=0.3, m=100)
        d = decompose(build_snapshots(ens), 2)
        t = np.linspace(0, 2 * ens.grid.span, 50)
        rng = np.random.default_rng(0)  # same draws as cosine_ensemble(seed=0)
        amp, phase = rng.uniform(0.5, 1.5, 6), rng.uniform(0, 2 * np.pi, 6)
        exact = amp[:, None] * np.cos(2 * np.pi * t + phase[:, None]) * np.exp(-0.3 * t)
        assert np.max(np.abs(evaluate(d, t) - exact)) < 1e-6

    def test_grid_mismatch(self, cosine):
        d = decompose(build_snapshots(cosine), 2)
        with pytest.raises(ConfigError):
            reconstruct(d, TimeGrid(0, 0.1, 10))

    def test_error_metric(self):
        assert reconstruction_error([1, 2, 3], [1, 2, 3]) == 0
        assert reconstruction_error([1, 2, 3], [3, 4, 5]) == pytest.approx(2.0)
        with pytest.raises(ConfigError):
            reconstruction_error([1, 2], [1, 2, 3])


@settings(max_examples=30, deadline=None)
@given(
    freqs=st.lists(st.floats(0.2, 4.0), min_size=1, max_size=4, unique=True),
    decays=st.lists(st.floats(0.0, 0.5), min_size=4, max_size=4),
    seed=st.integers(0, 2**16),
)
def test_linear_recovery_property(freqs, decays, seed):
    """Exactly low-rank data: DMD at the true rank recovers every eigenvalue."""
    freqs = np.array(freqs)
    if freqs.size > 1 and np.min(np.diff(np.sort(freqs))) < 0.05:
        return
    dt = 0.05
    lam = []
    for f, g in zip(freqs, decays):
        z = np.exp((-g + 2j * np.pi * f) * dt)
        lam += [z, np.conj(z)]
    lam = np.array(lam)
    spec = LinearSystemSpec.random(lam, 3 * lam.size, seed)
    ens = synth_linear_ensemble(spec, TimeGrid(0, dt, 80))
    d = decompose(build_snapshots(ens), lam.size)
    for z in lam:
        assert np.min(np.abs(d.eigenvalues - z)) < 1e-8
    assert np.sqrt(np.mean((reconstruct(d, ens.grid) - ens.data) ** 2)) < 1e-8


class TestEstimator:
    def test_fit_matrix_and_ensemble_agree(self, cosine):
        a = StochasticDMD(rank=2, dt=cosine.grid.dt).fit(cosine.data)
        b = StochasticDMD(rank=2).fit(cosine)
        assert_allclose(a.eigenvalues_, b.eigenvalues_)
        assert a.n_times_ == cosine.m

    def test_predict_and_score(self, cosine):
        est = StochasticDMD(rank=2).fit(cosine)
        assert_allclose(est.predict(cosine.times), cosine.data.mean(axis=0), atol=1e-8)
        assert est.score(cosine) > -1e-8
        assert est.reconstruct().shape == cosine.data.shape

    def test_get_params(self):
        assert StochasticDMD(rank=4, dt=0.5).get_params() == {"rank": 4, "dt": 0.5, "t_start": 0.0}

    def test_not_fitted(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            StochasticDMD().eigenvalues_
