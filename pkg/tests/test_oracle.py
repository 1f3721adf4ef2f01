"""Reference solutions checked against independently computed frozen values.

The frozen numbers below come from 30-digit mpmath evaluations: the 1/f
integral by direct quadrature in ``g`` and the telegraph coherence from the
matrix exponential of the two-state generator.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from stochdmd import ConfigError, StochDMDWarning
from stochdmd.io import write_validation_report
from stochdmd.noise_sim import (
    FluctuatorEnsembleConfig,
    QubitConfig,
    TimeGrid,
    coherence_envelope,
    generate_ensemble,
)
from stochdmd.oracle import (
    VALIDATION_CHECKS,
    LinearSystemSpec,
    lindblad_closed_form,
    lindblad_integrate,
    load_constants,
    quadrature_oneoverf,
    rtn_coherence_exact,
    rtn_coherence_mc,
    run_validation,
    synth_linear_ensemble,
    white_noise_factor,
)
from stochdmd.spectral import analytic_oneoverf

FROZEN_ONEOVERF = {
    0.05: 6.8780083075894213407,
    1.0: 0.43453785969121746831,
    2 * np.pi: 0.058209155323586391812,
    40.0: 0.0033523741818971757637,
}

FROZEN_RTN = [
    # rate, v, t, <exp(i phi)>
    (1.0, np.pi, 1.0, -0.34288420308615268091),
    (1.0, np.pi, 2.5, 0.057901808599737847498),
    (0.1, 1.0, 3.0, -0.72013522132008250945),
    (10.0, 2.0, 1.0, 0.8254856038599011054),
    (1.0, 2.0, 0.7, 0.44266237545120956228),
]


class TestQuadrature:
    @pytest.mark.parametrize("omega", sorted(FROZEN_ONEOVERF))
    def test_frozen(self, omega):
        assert quadrature_oneoverf(omega, 1.0, 0.01, 10.0) == pytest.approx(FROZEN_ONEOVERF[omega], abs=1e-10)

    def test_matches_closed_form(self):
        w = np.logspace(-3, 3, 40)
        assert_allclose(quadrature_oneoverf(w, 1.3, 0.01, 10.0), analytic_oneoverf(w, 1.3, 0.01, 10.0),
                        rtol=1e-9, atol=1e-12)

    def test_even_in_omega(self):
        assert quadrature_oneoverf(-2.0, 1.0, 0.1, 5.0) == quadrature_oneoverf(2.0, 1.0, 0.1, 5.0)

    def test_degenerate_band_is_lorentzian(self):
        assert quadrature_oneoverf(3.0, 2.0, 0.5, 0.5) == pytest.approx(4.0 * 2.0 / (1.0 + 9.0))

    def test_rejects(self):
        with pytest.raises(ConfigError):
            quadrature_oneoverf(0.0, 1.0, 0.1, 1.0)
        with pytest.raises(ConfigError):
            quadrature_oneoverf(1.0, 1.0, 1.0, 0.1)


class TestTelegraphExact:
    @pytest.mark.parametrize("rate,v,t,expected", FROZEN_RTN)
    def test_frozen(self, rate, v, t, expected):
        assert rtn_coherence_exact(rate, v, t) == pytest.approx(expected, abs=1e-13)

    def test_critical_damping_continuous(self):
        t = np.linspace(0, 3, 7)
        assert_allclose(rtn_coherence_exact(1.0, 1.0, t), rtn_coherence_exact(1.0, 1.0 + 1e-7, t), atol=1e-6)

    @pytest.mark.parametrize("rate,v,t,expected", FROZEN_RTN[:3])
    def test_mc_agrees(self, rate, v, t, expected):
        mc = rtn_coherence_mc(rate, v, [t], 20_000, seed=11)
        assert abs(mc.mean.real[0] - expected) < 3 * mc.stderr[0]
        assert abs(mc.mean.imag[0]) < 4 * mc.stderr[0]


class TestTelegraphMC:
    def test_zero_coupling(self):
        mc = rtn_coherence_mc(1.0, 0.0, np.linspace(0, 2, 5), 10_000, seed=0)
        assert_allclose(mc.mean, 1.0)

    def test_motional_narrowing(self):
        v = 1.0
        mc = rtn_coherence_mc(100 * v, v, [1.0 / v], 10_000, seed=1)
        assert mc.magnitude[0] > 0.9

    def test_static_limit(self):
        t = np.linspace(0, 3, 13)
        mc = rtn_coherence_mc(1e-5, 1.0, t, 10_000, seed=2)
        assert_allclose(mc.mean.real, np.cos(t), atol=1e-3)

    def test_reproducible(self):
        a = rtn_coherence_mc(1.0, 2.0, [0.5, 1.0], 15_000, seed=3)
        b = rtn_coherence_mc(1.0, 2.0, [0.5, 1.0], 15_000, seed=3)
        assert np.array_equal(a.mean, b.mean)

    def test_small_sample_warns(self):
        with pytest.warns(StochDMDWarning):
            rtn_coherence_mc(1.0, 1.0, [1.0], 100, seed=0)


RTN_CONFIGS = [(0.1, 0.5), (0.1, 2.0), (0.5, 1.0), (1.0, 0.5), (1.0, 1.0),
               (1.0, np.pi), (2.0, 4.0), (5.0, 1.0), (10.0, 2.0), (20.0, 5.0)]


@pytest.mark.slow
@pytest.mark.parametrize("rate,v", RTN_CONFIGS)
def test_simulator_matches_mc(rate, v):
    """Single-fluctuator simulator envelope within 3 combined standard errors of the MC oracle."""
    grid = TimeGrid.from_span(0.0, 2.0, 0.05)
    fl = FluctuatorEnsembleConfig(1, v, rate, rate)
    ens = generate_ensemble("oneoverf", QubitConfig(), fl, 3000, grid, 17)
    env, err = coherence_envelope(ens, return_stderr=True)
    mc = rtn_coherence_mc(rate, v, grid.times, 10_000, seed=18)
    sigma = np.sqrt(err**2 + mc.stderr**2 + 1e-24)
    assert np.max(np.abs(env - mc.magnitude) / sigma) < 3.0


class TestLindblad:
    def test_closed_form(self):
        grid = TimeGrid.from_span(0.0, 3.0, 0.01)
        res = lindblad_integrate(2 * np.pi, 0.7, grid)
        coh, sx = lindblad_closed_form(2 * np.pi, 0.7, grid.times)
        assert np.max(np.abs(res.coherence - coh)) < 1e-8
        assert np.max(np.abs(res.sx - sx)) < 1e-8
        assert res.max_trace_error < 1e-10 and res.min_eigenvalue > -1e-10

    def test_no_dephasing(self):
        grid = TimeGrid.from_span(0.0, 2.0, 0.05)
        res = lindblad_integrate(2 * np.pi, 0.0, grid)
        assert_allclose(res.coherence, 1.0, atol=1e-8)

    def test_minus_state(self):
        grid = TimeGrid(0, 0.1, 5)
        assert lindblad_integrate(1.0, 0.1, grid, sign=-1.0).sx[0] == pytest.approx(-1.0)

    def test_constants(self):
        const = load_constants()
        assert const["white_noise_lindblad_factor"] == white_noise_factor()
        assert 0.2 < white_noise_factor() < 0.3


class TestLinearSystem:
    def test_rank_and_shape(self):
        spec = LinearSystemSpec.random([0.9, 0.5], 4, seed=0)
        ens = synth_linear_ensemble(spec, TimeGrid(0, 1, 6))
        assert spec.rank == 2 and ens.data.shape == (4, 6)
        assert_allclose(ens.data[:, 1], (spec.mixing @ (spec.initial * [0.9, 0.5])).real)

    def test_validation(self):
        with pytest.raises(ConfigError, match="conjugation"):
            LinearSystemSpec.random([np.exp(0.3j)], 3, seed=0)
        with pytest.raises(ConfigError):
            LinearSystemSpec.random([1.2], 3, seed=0)
        with pytest.raises(ConfigError, match="column rank"):
            LinearSystemSpec([0.9, 0.5], np.ones((3, 2)), [1, 1])
        with pytest.raises(ConfigError, match="shape"):
            LinearSystemSpec([0.9, 0.5], np.eye(3), [1, 1])


@pytest.mark.slow
def test_validation_report(tmp_path):
    rows = run_validation(seed=0)
    assert [r["check"] for r in rows] == list(VALIDATION_CHECKS)
    assert all(r["pass"] for r in rows), [r["check"] for r in rows if not r["pass"]]
    path = write_validation_report(tmp_path / "validation.csv", rows)
    assert path.read_text().count("PASS") == len(VALIDATION_CHECKS)


@pytest.mark.slow
def test_validation_catches_wrong_factor():
    rows = run_validation(seed=0, factor=0.3)
    failed = {r["check"] for r in rows if not r["pass"]}
    assert failed == {"white_vs_lindblad"}
