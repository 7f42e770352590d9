import json

import numpy as np
import pytest

from cavitrans.cli import (
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_PHYSICS,
    EXIT_SELFTEST_FAILED,
    main,
    normalize_for_wav,
    parse_axis,
)
from cavitrans.config import ConfigError
from cavitrans.modulation import load_wav
from cavitrans.transduction import extract_response_time


def run(tmp_path, *argv, config=None):
    args = list(argv) + ["--out", str(tmp_path / "out")]
    if config is not None:
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(config))
        args += ["--config", str(path)]
    return main(args)


def read_csv(path):
    with open(path) as f:
        header = f.readline().strip().split(",")
    return header, np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def spectrum(wav):
    a = load_wav(wav)
    x = a.samples
    f = np.fft.rfftfreq(x.size, 1 / a.sample_rate)
    return f, np.abs(np.fft.rfft(x * np.hanning(x.size)))


def test_parse_axis():
    name, v = parse_axis("detuning:-300:300:601", ("detuning",))
    assert name == "detuning" and v.size == 601 and v[300] == 0.0
    _, v = parse_axis("mod_frequency:100:10000:3:log", ("mod_frequency",))
    np.testing.assert_allclose(v, [100, 1000, 10000])
    for bad in ("detuning:0:1", "power:0:1:3", "detuning:a:1:3", "detuning:0:1:0",
                "detuning:0:1:1", "detuning:-1:1:3:log"):
        with pytest.raises(ConfigError):
            parse_axis(bad, ("detuning",))


def test_steady_sweep_three_rabi_columns(tmp_path):
    assert run(tmp_path, "steady-sweep") == EXIT_OK
    header, data = read_csv(tmp_path / "out" / "steady_sweep.csv")
    assert header == ["detuning_khz", "T_rabi_18khz", "T_rabi_60khz", "T_rabi_180khz"]
    x = data[:, 0]
    assert x[0] == -300 and x[-1] == 300 and x.size == 601
    for k in range(1, 4):
        assert x[np.argmin(data[:, k])] == 0.0
    minima = data[300, 1:]
    assert minima[0] > minima[1] > minima[2]
    # wider with power: half-depth width grows
    widths = []
    for k in range(1, 4):
        T = data[:, k]
        half = 0.5 * (T.max() + T.min())
        widths.append(np.ptp(x[T < half]))
    assert widths[0] < widths[1] < widths[2]


def test_steady_sweep_single_point_and_zero_rabi(tmp_path):
    cfg = {"sweep": {"rabi_khz": [0.0]}}
    assert run(tmp_path, "steady-sweep", "--axis", "detuning:5:5:1", config=cfg) == EXIT_OK
    _, data = read_csv(tmp_path / "out" / "steady_sweep.csv")
    assert data.shape == (1, 2)
    assert run(tmp_path, "steady-sweep", "--axis", "detuning:-100:100:21", config=cfg) == EXIT_OK
    _, data = read_csv(tmp_path / "out" / "steady_sweep.csv")
    assert np.ptp(data[:, 1]) == 0.0


def test_steady_sweep_over_rabi(tmp_path):
    assert run(tmp_path, "steady-sweep", "--axis", "rabi:0:100:11") == EXIT_OK
    header, data = read_csv(tmp_path / "out" / "steady_sweep.csv")
    assert header[0] == "rabi_khz" and data.shape == (11, 2)


def test_transduce_sine_defaults(tmp_path):
    assert run(tmp_path, "transduce") == EXIT_OK
    out = tmp_path / "out"
    f, P = spectrum(out / "transduce.wav")
    k = np.argmax(P)
    assert f[k] == pytest.approx(500.0)
    h2 = P[np.argmin(np.abs(f - 1000.0))]
    assert 20 * np.log10(h2 / P[k]) < -40
    meta = dict(line.split("=", 1) for line in (out / "transduce.meta.txt").read_text().splitlines())
    assert float(meta["wav_gain"]) > 0 and "dc_removed_v" in meta
    peak = np.max(np.abs(load_wav(out / "transduce.wav").samples))
    assert 20 * np.log10(peak) == pytest.approx(-6.0, abs=0.01)
    header, T = read_csv(out / "transduce_T.csv")
    assert header == ["t_s", "transmission"]
    # the WAV is the AC part of T, scaled by the recorded gain
    ac = (T[:, 1] - T[:, 1].mean()) * float(meta["wav_gain"])
    np.testing.assert_allclose(load_wav(out / "transduce.wav").samples, ac, atol=1 / 32768)


def test_transduce_zero_amplitude_is_silent(tmp_path):
    assert run(tmp_path, "transduce", config={"tone": {"amplitude_v": 0.0}}) == EXIT_OK
    x = load_wav(tmp_path / "out" / "transduce.wav").samples
    power = np.mean(x ** 2)
    assert power == 0.0 or 10 * np.log10(power) < -80


def test_normalize_for_wav_silence_guard():
    v = np.full(100, 0.7) + 1e-13 * np.sin(np.arange(100))
    samples, dc, gain = normalize_for_wav(v)
    assert gain == 0.0 and np.all(samples == 0) and dc == pytest.approx(0.7)


def test_transduce_square_dynamic_has_rounded_edges(tmp_path):
    cfg = {"tone": {"shape": "square", "duration_s": 0.02}}
    assert run(tmp_path, "transduce", "--path", "dynamic", config=cfg) == EXIT_OK
    _, T = read_csv(tmp_path / "out" / "transduce_T.csv")
    tau = extract_response_time(T[:, 1], 48000.0)
    assert 0.2e-3 < tau < 5e-3


def test_transduce_from_wav(tmp_path):
    from cavitrans.modulation import AudioSignal, make_tone, save_wav
    save_wav(make_tone(300, 0.5, "sine", 0.05, 16000), tmp_path / "in.wav")
    assert run(tmp_path, "transduce", "--input", str(tmp_path / "in.wav"), "--mode", "fm",
               "--path", "quasi") == EXIT_OK
    f, P = spectrum(tmp_path / "out" / "transduce.wav")
    assert f[np.argmax(P)] == pytest.approx(300, abs=20)


@pytest.mark.parametrize("cfg, code", [
    ({"tone": {"amplitude_v": 20.0}}, EXIT_PHYSICS),
    ({"tone": {"freq_hz": 5000.0}}, EXIT_PHYSICS),
    ({"decoherence": {"gamma_e_g1_khz": 0, "gamma_e_g2_khz": 0, "gamma_ground_relax_khz": 0,
                      "gamma_mw_dephase_khz": 0}}, EXIT_PHYSICS),
    ({"solver": {"dt_max_s": 1e-6}}, EXIT_NUMERICAL),
    ({"solver": {"dt_maxs": 1e-6}}, EXIT_CONFIG),
])
def test_transduce_error_classes(tmp_path, cfg, code, capsys):
    assert run(tmp_path, "transduce", config=cfg) == code
    assert capsys.readouterr().err


def test_missing_input_and_bad_axis_are_config_errors(tmp_path):
    assert run(tmp_path, "transduce", "--input", str(tmp_path / "nope.wav")) == EXIT_CONFIG
    assert run(tmp_path, "lockin-sweep", "--axis", "bogus:0:1:2") == EXIT_CONFIG
    assert main([]) == EXIT_CONFIG


def test_lockin_sweep_fm_detuning_odd(tmp_path):
    cfg = {"modulation": {"mode": "fm", "m_fm_khz_per_v": 1.0}, "tone": {"amplitude_v": 1.0}}
    assert run(tmp_path, "lockin-sweep", "--axis", "detuning:-200:200:21", config=cfg) == EXIT_OK
    header, d = read_csv(tmp_path / "out" / "lockin_sweep.csv")
    assert header == ["axis_value", "X_V", "Y_V", "R_V"]
    X = d[:, 1]
    assert np.max(np.abs(X + X[::-1])) <= 0.01 * np.max(np.abs(X))
    meta = (tmp_path / "out" / "lockin_sweep.meta.txt").read_text()
    assert "axis_unit=kHz" in meta


def test_lockin_sweep_am_detuning_even(tmp_path):
    assert run(tmp_path, "lockin-sweep", "--mode", "am", "--axis", "detuning:-20:20:21") == EXIT_OK
    _, d = read_csv(tmp_path / "out" / "lockin_sweep.csv")
    R = d[:, 3]
    assert np.max(np.abs(R - R[::-1])) <= 0.01 * np.max(R)


def test_lockin_sweep_mod_frequency_ordering(tmp_path):
    assert run(tmp_path, "lockin-sweep", "--axis", "mod_frequency:100:10000:3:log") == EXIT_OK
    _, d = read_csv(tmp_path / "out" / "lockin_sweep.csv")
    r01, r1, r10 = d[:, 3]
    assert r10 < r1 < 1.5 * r01


def test_selftest_default_passes(tmp_path, capsys):
    assert run(tmp_path, "selftest") == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 4 and "selftest passed" in out


def test_selftest_zero_decoherence_reports_degenerate(tmp_path, capsys):
    cfg = {"decoherence": {"gamma_e_g1_khz": 0, "gamma_e_g2_khz": 0,
                           "gamma_ground_relax_khz": 0, "gamma_mw_dephase_khz": 0}}
    assert run(tmp_path, "selftest", config=cfg) == EXIT_SELFTEST_FAILED
    lines = capsys.readouterr().out.splitlines()
    ss = next(line for line in lines if "steady_state" in line)
    assert ss.startswith("[FAIL]") and "nullity" in ss
    assert all(not line.startswith("[FAIL]") for line in lines if "steady_state" not in line)
    assert any(line.startswith("[PASS] integrity") for line in lines)


def test_selftest_large_step_reports_trace_drift(tmp_path, capsys):
    assert run(tmp_path, "selftest", config={"solver": {"dt_max_s": 1e-6}}) == EXIT_SELFTEST_FAILED
    out = capsys.readouterr().out
    assert "[FAIL] integrity" in out and "trace drift" in out


def test_outputs_are_byte_identical_across_runs(tmp_path):
    cfg = {"tone": {"shape": "square", "duration_s": 0.01}, "photodiode": {"noise_rms_v": 0.001}}
    files = ("transduce.wav", "transduce_T.csv", "transduce_carrier.csv", "transduce.meta.txt")
    blobs = []
    for sub in ("a", "b"):
        d = tmp_path / sub
        d.mkdir()
        assert run(d, "transduce", "--seed", "7", config=cfg) == EXIT_OK
        blobs.append([(d / "out" / f).read_bytes() for f in files])
    assert blobs[0] == blobs[1]
    other = tmp_path / "c"
    other.mkdir()
    assert run(other, "transduce", "--seed", "8", config=cfg) == EXIT_OK
    assert (other / "out" / "transduce.wav").read_bytes() != blobs[0][0]
