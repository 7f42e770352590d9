"""Audio signals, test tones, WAV I/O and AM/FM encoding onto the microwave carrier."""
from __future__ import annotations

import wave
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

FULL_SCALE = 32768.0


class AliasingError(ValueError):
    """Sample rate too low for the requested content."""


class OvermodulationError(ValueError):
    """AM depth would drive the Rabi frequency negative."""


class WavFormatError(ValueError):
    pass


@dataclass(frozen=True)
class AudioSignal:
    """Real waveform V(t) in volts, sampled at ``sample_rate`` Hz."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1 or x.size == 0:
            raise ValueError("samples must be a non-empty 1-D sequence")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate

    def normalized(self, peak: float = 1.0) -> "AudioSignal":
        """Scale so that max|V| equals ``peak`` volts (all-zero input is returned as is)."""
        m = np.max(np.abs(self.samples))
        if m == 0:
            return self
        return replace(self, samples=self.samples * (peak / m))

    def scaled(self, factor: float) -> "AudioSignal":
        return replace(self, samples=self.samples * factor)


@dataclass(frozen=True)
class ModulationConfig:
    """Carrier operating point and modulation sensitivities.

    m_am is the fractional Rabi change per volt; m_fm is rad/s of detuning per volt.
    """

    mode: str = "am"
    m_am: float = 0.15
    m_fm: float = 2 * np.pi * 40e3
    carrier_rabi_0: float = 2 * np.pi * 74e3
    carrier_detuning_0: float = 0.0

    def __post_init__(self):
        if self.mode not in ("am", "fm"):
            raise ValueError(f"mode must be 'am' or 'fm', got {self.mode!r}")
        if self.carrier_rabi_0 < 0:
            raise ValueError("carrier_rabi_0 must be non-negative")


@dataclass(frozen=True)
class CarrierTrajectory:
    """Sampled microwave drive seen by the atoms: Rabi frequency and detuning, rad/s."""

    omega_mu: np.ndarray
    delta_mu: np.ndarray
    sample_rate: float

    def __post_init__(self):
        w = np.asarray(self.omega_mu, dtype=float)
        d = np.asarray(self.delta_mu, dtype=float)
        if w.shape != d.shape or w.ndim != 1 or w.size == 0:
            raise ValueError("omega_mu and delta_mu must be equal-length 1-D arrays")
        if np.any(w < 0):
            raise ValueError("omega_mu must be non-negative")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "omega_mu", w)
        object.__setattr__(self, "delta_mu", d)

    def __len__(self):
        return self.omega_mu.size

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.omega_mu.size) / self.sample_rate

    def to_csv(self, path):
        write_csv(path, ["t_s", "omega_mu_rad_s", "delta_mu_rad_s"],
                  [self.t, self.omega_mu, self.delta_mu])


def write_csv(path, header, columns):
    """Write equal-length columns with round-trip (17 significant digit) precision."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt="%.17g")


def encode(v: AudioSignal, cfg: ModulationConfig) -> CarrierTrajectory:
    """Map V(t) onto (omega_mu, delta_mu) by AM or FM of the carrier."""
    x = v.samples
    n = x.size
    if cfg.mode == "am":
        depth = cfg.m_am * np.max(np.abs(x))
        if depth >= 1.0:
            raise OvermodulationError(f"AM depth m_am*max|V| = {depth:.3g} must be < 1")
        omega = cfg.carrier_rabi_0 * (1.0 + cfg.m_am * x)
        delta = np.full(n, cfg.carrier_detuning_0)
    else:
        omega = np.full(n, cfg.carrier_rabi_0)
        delta = cfg.carrier_detuning_0 + cfg.m_fm * x
    return CarrierTrajectory(omega, delta, v.sample_rate)


def make_tone(freq, amplitude, shape="sine", duration=0.01, sample_rate=1e6) -> AudioSignal:
    """Single-tone test signal: A sin(w t) or A sgn(sin(w t)) with sgn(0) = 0."""
    if sample_rate < 20 * freq:
        raise AliasingError(f"sample rate {sample_rate:g} Hz < 20 x tone frequency {freq:g} Hz")
    n = int(round(duration * sample_rate))
    if n < 1:
        raise ValueError("duration shorter than one sample")
    k = np.arange(n)
    if shape == "sine":
        x = amplitude * np.sin(2 * np.pi * freq * k / sample_rate)
    elif shape == "square":
        # sign from the fractional cycle so half-period samples land exactly on 0
        frac = np.mod(freq * k / sample_rate, 1.0)
        s = np.where(frac < 0.5, 1.0, -1.0)
        s[(frac == 0.0) | (frac == 0.5)] = 0.0
        x = amplitude * s
    else:
        raise ValueError(f"unknown tone shape {shape!r}")
    return AudioSignal(x, float(sample_rate))


def dominant_bandwidth(x, sample_rate, energy_fraction=0.99) -> float:
    """Frequency below which ``energy_fraction`` of the AC power of x lies (Hz)."""
    x = np.asarray(x, dtype=float)
    ac = x - x.mean()
    p = np.abs(np.fft.rfft(ac)) ** 2
    total = p.sum()
    if total == 0.0:
        return 0.0
    f = np.fft.rfftfreq(x.size, 1.0 / sample_rate)
    k = np.searchsorted(np.cumsum(p) / total, energy_fraction)
    return float(f[min(k, f.size - 1)])


SIGNIFICANT_ENERGY = 0.90


def check_sample_rate(carrier: CarrierTrajectory, factor=10.0):
    """Require sample_rate >= factor x the highest significant modulation frequency.

    "Significant" is the band holding SIGNIFICANT_ENERGY of the AC power; for a
    square wave that is its third harmonic.
    """
    fmax = max(dominant_bandwidth(carrier.omega_mu, carrier.sample_rate, SIGNIFICANT_ENERGY),
               dominant_bandwidth(carrier.delta_mu, carrier.sample_rate, SIGNIFICANT_ENERGY))
    if carrier.sample_rate < factor * fmax:
        raise AliasingError(
            f"sample rate {carrier.sample_rate:g} Hz is below {factor:g} x modulation "
            f"bandwidth {fmax:g} Hz"
        )


def load_wav(path) -> AudioSignal:
    """Read 16-bit PCM WAV (first channel) into volts with full scale = 1 V."""
    try:
        with wave.open(str(path), "rb") as w:
            if w.getcomptype() != "NONE":
                raise WavFormatError(f"{path}: compressed WAV ({w.getcomptype()}) not supported")
            if w.getsampwidth() != 2:
                raise WavFormatError(f"{path}: expected 16-bit PCM, got {8 * w.getsampwidth()}-bit")
            nch = w.getnchannels()
            fs = w.getframerate()
            raw = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as exc:
        raise WavFormatError(f"{path}: {exc}") from exc
    data = np.frombuffer(raw, dtype="<i2")
    if data.size == 0 or data.size % nch:
        raise WavFormatError(f"{path}: no audio frames or truncated data")
    data = data.reshape(-1, nch)[:, 0]
    return AudioSignal(data.astype(float) / FULL_SCALE, float(fs))


def save_wav(a: AudioSignal, path):
    """Write mono 16-bit PCM; samples outside [-1, 1) V are clipped."""
    if abs(a.sample_rate - round(a.sample_rate)) > 1e-9:
        raise WavFormatError("WAV needs an integer sample rate")
    q = np.clip(np.round(a.samples * FULL_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(Path(path)), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(round(a.sample_rate)))
        w.writeframes(q.tobytes())
