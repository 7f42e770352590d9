import numpy as np
import pytest

from cavitrans.lindblad import TWO_PI
from cavitrans.modulation import CarrierTrajectory, ModulationConfig, encode, make_tone
from cavitrans.steady_state import solve_steady_state, steady_transmission
from cavitrans.transduction import (
    NoEdgeError,
    PhotodiodeModel,
    PoorFitError,
    QuasiStaticTable,
    TransmissionSeries,
    extract_response_time,
    photodiode,
    transduce_dynamic,
    transduce_quasi_static,
)


def am_traj(point, depth, freq, duration, fs, shape="sine"):
    tone = make_tone(freq, 1.0, shape, duration, fs)
    return encode(tone, ModulationConfig("am", m_am=depth, carrier_rabi_0=point.omega_mu_rabi,
                                         carrier_detuning_0=point.delta_mu))


def test_constant_drive_stays_at_steady_state(am_point, deco, tmodel):
    n = 200
    traj = CarrierTrajectory(np.full(n, am_point.omega_mu_rabi), np.full(n, am_point.delta_mu), 20e3)
    T_ss = steady_transmission(am_point, deco, tmodel)
    dyn = transduce_dynamic(traj, None, am_point, deco, tmodel)
    qs = transduce_quasi_static(traj, am_point, deco, tmodel)
    np.testing.assert_allclose(dyn.T, T_ss, atol=1e-10)
    np.testing.assert_allclose(qs.T, T_ss, rtol=1e-14)


def test_dynamic_reads_end_of_each_hold(am_point, deco, tmodel):
    traj = am_traj(am_point, 0.1, 500, 0.004, 48e3)
    dyn = transduce_dynamic(traj, None, am_point, deco, tmodel)
    np.testing.assert_allclose(dyn.t, (np.arange(len(traj)) + 1) / 48e3)


def test_slow_modulation_dynamic_tracks_quasi_static(am_point, deco, tmodel):
    traj = am_traj(am_point, 0.1, 5.0, 0.3, 4e3)
    dyn = transduce_dynamic(traj, None, am_point, deco, tmodel).T
    qs = transduce_quasi_static(traj, am_point, deco, tmodel).T
    # lag of about one response time at 5 Hz
    assert np.max(np.abs(dyn[400:] - qs[400:])) < 0.05 * np.ptp(qs)


def test_interpolation_table_matches_direct_solves(am_point, deco, tmodel):
    traj = am_traj(am_point, 0.3, 500, 0.01, 48e3)
    direct = transduce_quasi_static(traj, am_point, deco, tmodel, method="direct").T
    table = transduce_quasi_static(traj, am_point, deco, tmodel, method="table").T
    np.testing.assert_allclose(table, direct, rtol=1e-4)
    t2 = QuasiStaticTable(traj, am_point, deco, n_grid=96)
    assert t2.verify(traj, tmodel) <= 1e-4


def test_photodiode_linear_and_noise_statistics():
    T = np.full(200_000, 0.8)
    s = TransmissionSeries(np.arange(T.size) / 1e4, T, 1e4)
    v = photodiode(s, PhotodiodeModel(gain=2.0, offset=0.1))
    np.testing.assert_allclose(v.samples, 1.7)
    noisy = photodiode(s, PhotodiodeModel(gain=2.0, offset=0.1, noise_rms=0.01), seed=5)
    assert np.std(noisy.samples) == pytest.approx(0.01, rel=0.01)
    again = photodiode(s, PhotodiodeModel(gain=2.0, offset=0.1, noise_rms=0.01), seed=5)
    np.testing.assert_array_equal(noisy.samples, again.samples)
    with pytest.raises(ValueError):
        PhotodiodeModel(gain=0.0)


def synthetic_steps(tau, fs, period, n_periods=3, noise=0.0, seed=0):
    t = np.arange(int(n_periods * period * fs)) / fs
    phase = np.mod(t, period)
    T = np.empty_like(t)
    T[phase < period / 2] = 1 - np.exp(-phase[phase < period / 2] / tau)
    up = phase >= period / 2
    T[up] = np.exp(-(phase[up] - period / 2) / tau)
    return T + noise * np.random.default_rng(seed).standard_normal(t.size)


@pytest.mark.parametrize("tau", [0.3e-3, 1e-3, 2e-3])
def test_response_time_of_ideal_exponential(tau):
    fs = 48e3
    T = synthetic_steps(tau, fs, period=20e-3)
    assert extract_response_time(T, fs) == pytest.approx(tau, rel=0.02)


def test_response_time_with_mild_noise():
    T = synthetic_steps(1e-3, 48e3, 20e-3, noise=0.005)
    assert extract_response_time(T, 48e3) == pytest.approx(1e-3, rel=0.05)


def test_flat_signal_has_no_edge():
    with pytest.raises(NoEdgeError):
        extract_response_time(np.ones(1000), 48e3)
    # an edge right at the end leaves no settled samples after it
    with pytest.raises(NoEdgeError):
        extract_response_time(np.r_[np.zeros(100), np.ones(3)], 48e3)


def test_non_exponential_step_is_a_poor_fit():
    fs = 48e3
    t = np.arange(2000) / fs
    T = np.where(t < 0.01, 0.0, 1.0 + 0.5 * np.sin(TWO_PI * 300 * (t - 0.01)))
    with pytest.raises(PoorFitError):
        extract_response_time(T, fs)


def test_square_wave_response_time_near_one_millisecond(am_point, deco, tmodel):
    traj = am_traj(am_point, 0.1, 100, 0.03, 48e3, shape="square")
    dyn = transduce_dynamic(traj, solve_steady_state(am_point, deco), am_point, deco, tmodel)
    tau = extract_response_time(dyn.T, dyn.sample_rate)
    assert 0.5e-3 <= tau <= 2e-3
