"""Digital lock-in amplifier and the end-to-end lock-in parameter sweeps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from .cavity import CavityParams, attenuate_dbm, cavity_transfer, input_power_to_rabi, lorentzian
from .lindblad import TWO_PI, AtomFieldParams, DecoherenceParams
from .modulation import CarrierTrajectory, ModulationConfig, encode, make_tone, write_csv
from .steady_state import TransmissionModel, steady_populations_g2
from .transduction import (
    PhotodiodeModel,
    photodiode,
    transduce_dynamic,
    transduce_quasi_static,
)

SETTLE_TIME_CONSTANTS = 10.0


class InsufficientDurationError(ValueError):
    pass


@dataclass(frozen=True)
class LockInConfig:
    """Reference at ``reference_freq`` Hz, cascaded single-pole low-pass.

    ``time_constant`` is the overall time constant of the cascade: each of the
    ``filter_order`` stages has time_constant / filter_order. ``None`` selects
    10 / omega_m.
    """

    reference_freq: float = 1e3
    time_constant: float | None = None
    filter_order: int = 4
    reference_phase: float = 0.0

    def __post_init__(self):
        if not self.reference_freq > 0:
            raise ValueError("reference_freq must be positive")
        if self.filter_order < 1:
            raise ValueError("filter_order must be >= 1")
        if self.time_constant is not None and not self.time_constant > 0:
            raise ValueError("time_constant must be positive")

    @property
    def tau(self) -> float:
        if self.time_constant is None:
            return 10.0 / (TWO_PI * self.reference_freq)
        return self.time_constant


@dataclass(frozen=True)
class LockInOutput:
    X: float
    Y: float

    @property
    def R(self) -> float:
        return math.hypot(self.X, self.Y)

    @property
    def phase(self) -> float:
        return math.atan2(self.Y, self.X)


def lowpass(z, fs, tau, order):
    """Cascade of ``order`` exponential smoothers, each with time constant tau / order."""
    alpha = -math.expm1(-order / (fs * tau))
    y = np.asarray(z)
    for _ in range(order):
        y = lfilter([alpha], [1.0, alpha - 1.0], y)
    return y


def demodulate(signal, cfg: LockInConfig) -> LockInOutput:
    """X = LP[2 s cos(w t + phi)], Y = LP[2 s sin(w t + phi)].

    The first 10 time constants are discarded; the remaining output is averaged
    over a whole number of reference periods (when at least one fits).
    """
    fs = signal.sample_rate
    x = signal.samples
    tau = cfg.tau
    settle = SETTLE_TIME_CONSTANTS * tau
    if signal.duration < settle:
        raise InsufficientDurationError(
            f"signal lasts {signal.duration:.3g} s, lock-in needs >= {settle:.3g} s to settle"
        )
    t = np.arange(x.size) / fs
    z = 2.0 * x * np.exp(1j * (TWO_PI * cfg.reference_freq * t + cfg.reference_phase))
    y = lowpass(z, fs, tau, cfg.filter_order)
    start = min(int(math.ceil(settle * fs)), x.size - 1)
    tail = y[start:]
    periods = math.floor(tail.size * cfg.reference_freq / fs)
    if periods >= 1:
        tail = tail[: int(round(periods * fs / cfg.reference_freq))]
    zbar = tail.mean()
    return LockInOutput(float(zbar.real), float(zbar.imag))


# --- sweeps -------------------------------------------------------------------

AXES = ("detuning", "power", "mod_frequency")


@dataclass(frozen=True)
class Pipeline:
    """Everything needed to go from a test tone to a lock-in reading.

    ``carrier_power_dbm`` sets the carrier Rabi frequency through the cavity
    calibration (after ``link_loss_db``); the ``modulation`` config supplies mode,
    sensitivities and the carrier detuning.
    """

    base: AtomFieldParams
    decoherence: DecoherenceParams
    transmission: TransmissionModel = TransmissionModel()
    cavity: CavityParams = CavityParams()
    modulation: ModulationConfig = ModulationConfig()
    photodiode: PhotodiodeModel = PhotodiodeModel()
    lockin: LockInConfig = LockInConfig()
    carrier_power_dbm: float = 0.0
    link_loss_db: float = 0.0
    tone_amplitude: float = 1.0
    tone_shape: str = "sine"
    path: str = "dynamic"
    use_cavity: bool = True
    warmup: float = 10e-3
    readout_periods: int = 20
    min_sample_rate: float = 20e3
    samples_per_period: int = 40
    dt_max: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.path not in ("dynamic", "quasi"):
            raise ValueError("path must be 'dynamic' or 'quasi'")

    @property
    def carrier_rabi(self) -> float:
        return input_power_to_rabi(attenuate_dbm(self.carrier_power_dbm, self.link_loss_db),
                                   self.cavity)

    def modulation_config(self) -> ModulationConfig:
        return replace(self.modulation, carrier_rabi_0=self.carrier_rabi)

    def sample_rate(self) -> float:
        f = self.lockin.reference_freq
        return float(max(self.min_sample_rate, self.samples_per_period * f))

    def duration(self) -> float:
        f = self.lockin.reference_freq
        return (self.warmup + SETTLE_TIME_CONSTANTS * self.lockin.tau
                + self.readout_periods / f)

    def carrier(self) -> CarrierTrajectory:
        fs = self.sample_rate()
        tone = make_tone(self.lockin.reference_freq, self.tone_amplitude, self.tone_shape,
                         self.duration(), fs)
        traj = encode(tone, self.modulation_config())
        return cavity_transfer(traj, self.cavity) if self.use_cavity else traj

    def transduce(self, traj: CarrierTrajectory):
        if self.path == "dynamic":
            return transduce_dynamic(traj, None, self.base, self.decoherence,
                                     self.transmission, dt_max=self.dt_max)
        return transduce_quasi_static(traj, self.base, self.decoherence, self.transmission)

    def run(self) -> LockInOutput:
        """encode -> cavity -> atoms -> photodiode -> lock-in for one operating point."""
        series = self.transduce(self.carrier())
        volts = photodiode(series, self.photodiode, self.seed)
        skip = int(round(self.warmup * volts.sample_rate))
        volts = replace(volts, samples=volts.samples[skip:])
        return demodulate(volts, self.lockin)


@dataclass(frozen=True)
class SweepResult:
    axis: str
    values: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    reference_phase: float
    detunings: np.ndarray = field(default=None)

    @property
    def R(self) -> np.ndarray:
        return np.hypot(self.X, self.Y)

    def to_csv(self, path, axis_values=None):
        vals = self.values if axis_values is None else axis_values
        write_csv(path, ["axis_value", "X_V", "Y_V", "R_V"], [vals, self.X, self.Y, self.R])


def best_detuning(p: Pipeline, span=None, n=801) -> float:
    """Carrier detuning with the largest quasi-static lock-in amplitude.

    Searches on the same side of resonance as the configured carrier detuning
    (the response is symmetric, so the mirror point is equivalent). With the cavity
    in the chain the Rabi frequency reaching the atoms depends on the carrier
    detuning, and the FM slope includes that amplitude change.
    """
    cfg = p.modulation_config()
    w0 = cfg.carrier_rabi_0
    if span is None:
        span = 4.0 * max(w0, p.decoherence.gamma_mw_dephase, TWO_PI * 1e3)
    sign = -1.0 if cfg.carrier_detuning_0 < 0 else 1.0
    grid = sign * np.linspace(0.0, span, n)
    m = p.transmission

    def rabi_at(delta):
        if not p.use_cavity:
            return np.full(np.shape(delta), w0)
        return w0 * np.abs(lorentzian(p.cavity.atom_offset + delta, p.cavity))

    def T(omega, delta):
        return m(steady_populations_g2(omega, delta, p.base, p.decoherence))

    w = rabi_at(grid)
    if cfg.mode == "am":
        h = 1e-4 * w
        slope = (T(w + h, grid) - T(w - h, grid)) / (2 * h)
        gain = cfg.m_am * w
    else:
        h = TWO_PI * 1.0
        slope = (T(rabi_at(grid + h), grid + h) - T(rabi_at(grid - h), grid - h)) / (2 * h)
        gain = cfg.m_fm
    return float(grid[np.argmax(np.abs(gain * slope))])


def sweep(axis: str, points, p: Pipeline, align_phase=True) -> SweepResult:
    """Run the full chain at every axis value and collect lock-in outputs.

    Axis units: ``detuning`` rad/s (carrier detuning), ``power`` dBm (carrier input
    power), ``mod_frequency`` Hz (tone and reference frequency). For mod_frequency
    sweeps the carrier detuning is re-selected with :func:`best_detuning`. With
    ``align_phase`` the reference phase is rotated so that the point with the
    largest R reads purely in X, and held for the whole sweep.
    """
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {AXES}")
    points = np.atleast_1d(np.asarray(points, dtype=float))
    if points.size == 0:
        raise ValueError("sweep needs at least one point")
    if axis == "mod_frequency" and np.any(points <= 0):
        raise ValueError("modulation frequencies must be positive")

    def at(value):
        if axis == "detuning":
            return replace(p, modulation=replace(p.modulation, carrier_detuning_0=value))
        if axis == "power":
            return replace(p, carrier_power_dbm=value)
        return replace(p, lockin=replace(p.lockin, reference_freq=value))

    detunings = []
    zs = []
    best = best_detuning(p) if axis == "mod_frequency" else None
    for v in points:
        q = at(v)
        if best is not None:
            q = replace(q, modulation=replace(q.modulation, carrier_detuning_0=best))
        detunings.append(q.modulation.carrier_detuning_0)
        out = q.run()
        zs.append(complex(out.X, out.Y))
    z = np.array(zs)
    phase = p.lockin.reference_phase
    if align_phase and np.any(z != 0):
        rot = np.angle(z[np.argmax(np.abs(z))])
        z = z * np.exp(-1j * rot)
        phase = phase - rot
    return SweepResult(axis, points, z.real.copy(), z.imag.copy(), float(phase),
                       np.array(detunings))
