import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cavitrans.lindblad import (
    G2,
    TWO_PI,
    AtomFieldParams,
    DecoherenceParams,
    evolve_interval,
    liouvillian_apply,
    maximally_mixed,
)
from cavitrans.steady_state import (
    DegenerateSteadyStateError,
    TransmissionModel,
    nullity,
    solve_steady_state,
    steady_populations_g2,
    steady_transmission,
    transmission,
    transmission_sensitivities,
)
from cavitrans.validation import random_parameter_set


def test_two_level_saturation_oracle():
    # microwave-only two-level system with symmetric exchange and dephasing:
    # w = g/2 each way, coherence decay G = g/2 + gd, steady inversion
    # (rho22 - rho11) = 0 exactly, so rho22 = 1/2 independent of Rabi
    d = DecoherenceParams(TWO_PI * 1e3, TWO_PI * 1e3, TWO_PI * 100, TWO_PI * 200)
    rho = solve_steady_state(AtomFieldParams(omega_mu_rabi=TWO_PI * 5e3), d)
    assert rho[0, 0].real == pytest.approx(0.0, abs=1e-14)
    assert rho[1, 1].real == pytest.approx(0.5, abs=1e-12)


def test_optical_pumping_into_dark_state(base, deco):
    d = DecoherenceParams(deco.gamma_e_g1, deco.gamma_e_g2, 0.0, deco.gamma_mw_dephase)
    rho = solve_steady_state(base, d)
    assert rho[2, 2].real == pytest.approx(1.0, abs=1e-9)
    assert steady_transmission(base, d, TransmissionModel(1.0)) == pytest.approx(1.0, abs=1e-9)


def test_residual_and_hermiticity(am_point, deco):
    rho = solve_steady_state(am_point, deco)
    assert np.abs(liouvillian_apply(rho, am_point, deco)).max() < 1e-6
    np.testing.assert_allclose(rho, rho.conj().T, atol=1e-15)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-14)


def test_degenerate_null_space_raises():
    p = AtomFieldParams(omega_opt_rabi=TWO_PI * 1e4, omega_mu_rabi=TWO_PI * 1e4)
    d = DecoherenceParams(0, 0, 0, 0)
    assert nullity(p, d) > 1
    with pytest.raises(DegenerateSteadyStateError):
        solve_steady_state(p, d)


def test_matches_long_time_integration(am_point, deco):
    ev = evolve_interval(maximally_mixed(), am_point, deco, 50e-3, t_eval=[50e-3])
    np.testing.assert_allclose(ev.rho[-1], solve_steady_state(am_point, deco), atol=1e-7)


@given(st.integers(0, 2**32 - 1))
def test_vectorised_populations_match_single_solves(seed):
    rng = np.random.default_rng(seed)
    p, d = random_parameter_set(rng)
    w = TWO_PI * rng.uniform(0, 2e5, 5)
    dl = TWO_PI * rng.uniform(-3e5, 3e5, 5)
    got = steady_populations_g2(w, dl, p, d)
    want = [solve_steady_state(p.with_mw(a, b), d)[G2, G2].real for a, b in zip(w, dl)]
    np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-14)


@given(st.floats(0.0, 3e5), st.floats(1e3, 2e5))
def test_transmission_even_in_detuning(delta_hz, rabi_hz):
    base = AtomFieldParams(omega_opt_rabi=TWO_PI * 31.08e3)
    d = DecoherenceParams(gamma_ground_relax=TWO_PI * 10, gamma_mw_dephase=TWO_PI * 1e3)
    m = TransmissionModel()
    w, x = TWO_PI * rabi_hz, TWO_PI * delta_hz
    assert steady_transmission(base.with_mw(w, x), d, m) == pytest.approx(
        steady_transmission(base.with_mw(w, -x), d, m), abs=1e-9)


def test_transmission_dips_deeper_with_power(base, deco, tmodel):
    # on resonance, more microwave power moves more population back into |g2>
    rabis = TWO_PI * np.array([0.0, 0.3e3, 1e3, 3e3, 18e3, 60e3, 180e3])
    T = tmodel(steady_populations_g2(rabis, 0.0, base, deco))
    assert np.all(np.diff(T) < 0)


def test_single_minimum_at_resonance(base, deco, tmodel):
    x = TWO_PI * np.linspace(-300e3, 300e3, 601)
    for rabi_khz in (18, 60, 180):
        T = tmodel(steady_populations_g2(TWO_PI * rabi_khz * 1e3, x, base, deco))
        k = np.argmin(T)
        assert x[k] == 0.0
        assert np.all(np.diff(T[: k + 1]) <= 1e-15) and np.all(np.diff(T[k:]) >= -1e-15)


def test_transmission_model_beer_lambert():
    m = TransmissionModel(optical_depth=2.0)
    assert m(0.25) == pytest.approx(np.exp(-0.5))
    assert transmission(np.diag([0, 0.25, 0.75]), m) == pytest.approx(np.exp(-0.5))
    with pytest.raises(ValueError):
        TransmissionModel(-1.0)


@pytest.mark.parametrize("point", ["am_point", "fm_point"])
def test_sensitivities_predict_small_changes(point, deco, tmodel, request):
    p = request.getfixturevalue(point)
    s = transmission_sensitivities(p, deco, tmodel)
    assert not s.warnings
    T0 = steady_transmission(p, deco, tmodel)
    dw, dd = 1e-3 * p.omega_mu_rabi, TWO_PI * 20.0
    T1 = steady_transmission(p.with_mw(p.omega_mu_rabi + dw, p.delta_mu + dd), deco, tmodel)
    pred = s.d_omega_mu * dw + s.d_delta_mu * dd
    assert T1 - T0 == pytest.approx(pred, rel=0.01)


def test_sensitivity_signs_at_operating_points(am_point, fm_point, deco, tmodel):
    # more power deepens the dip; moving away from resonance raises T
    am = transmission_sensitivities(am_point, deco, tmodel)
    fm = transmission_sensitivities(fm_point, deco, tmodel)
    assert am.d_omega_mu < 0
    assert fm.d_delta_mu > 0
    # mirror detuning flips the FM slope sign only
    mirror = transmission_sensitivities(fm_point.with_mw(delta_mu=-fm_point.delta_mu), deco, tmodel)
    assert mirror.d_delta_mu == pytest.approx(-fm.d_delta_mu, rel=1e-6)
    assert mirror.d_omega_mu == pytest.approx(fm.d_omega_mu, rel=1e-6)


def test_zero_rabi_sensitivity_is_even(base, deco, tmodel):
    s = transmission_sensitivities(base.with_mw(0.0, 0.0), deco, tmodel)
    assert s.d_omega_mu == pytest.approx(0.0, abs=1e-12)
