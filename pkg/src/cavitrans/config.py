"""Run configuration: a strict JSON document with a documented default for every key.

Frequencies in the document are cyclic (value / 2pi) in the unit named by the key
suffix; the builders convert them to the rad/s used by the physics modules.
"""
from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .cavity import CavityParams
from .lindblad import GAMMA_D2, TWO_PI, AtomFieldParams, DecoherenceParams
from .lockin import LockInConfig, Pipeline
from .modulation import ModulationConfig
from .steady_state import TransmissionModel
from .transduction import PhotodiodeModel


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AtomSection:
    # optical Rabi frequency giving ~1000 /s scattering out of |g2> on resonance
    omega_opt_khz: float = 31.08
    delta_opt_khz: float = 0.0


@dataclass(frozen=True)
class DecoherenceSection:
    gamma_e_g1_khz: float = GAMMA_D2 / TWO_PI / 2e3
    gamma_e_g2_khz: float = GAMMA_D2 / TWO_PI / 2e3
    gamma_ground_relax_khz: float = 0.01
    gamma_mw_dephase_khz: float = 1.0


@dataclass(frozen=True)
class CavitySection:
    f_resonance_hz: float = 6.834682610e9
    quality_factor: float = 27000.0
    rabi_khz_at_0dbm: float = 58.6
    link_loss_db: float = 0.0


@dataclass(frozen=True)
class ModulationSection:
    mode: str = "am"
    m_am_per_v: float = 0.1
    m_fm_khz_per_v: float = 150.0
    # AM sits at the largest |dT/dOmega| for the default atom; FM at the Rabi
    # frequency of the single-tone demonstrations
    am_power_dbm: float = -37.7
    am_detuning_khz: float = -5.0
    fm_power_dbm: float = 2.0
    fm_detuning_khz: float = 95.0


@dataclass(frozen=True)
class TransmissionSection:
    optical_depth: float = 1.0


@dataclass(frozen=True)
class PhotodiodeSection:
    gain_v: float = 1.0
    offset_v: float = 0.0
    noise_rms_v: float = 0.0


@dataclass(frozen=True)
class LockInSection:
    reference_freq_hz: float = 1000.0
    time_constant_s: Optional[float] = None
    filter_order: int = 4
    reference_phase_rad: float = 0.0


@dataclass(frozen=True)
class ToneSection:
    """Input for ``transduce`` when no WAV is given (or ``input_wav`` to read one)."""

    freq_hz: float = 500.0
    amplitude_v: float = 0.1
    shape: str = "sine"
    duration_s: float = 0.2
    sample_rate_hz: float = 48000.0
    input_wav: Optional[str] = None
    normalize_input: bool = True


@dataclass(frozen=True)
class SolverSection:
    dt_max_s: Optional[float] = None
    path: str = "dynamic"
    use_cavity: bool = True
    warmup_s: float = 0.01
    readout_periods: int = 20
    min_sample_rate_hz: float = 20000.0
    samples_per_period: int = 40


@dataclass(frozen=True)
class SweepSection:
    steady_axis: str = "detuning:-300:300:601"
    rabi_khz: tuple = (18.0, 60.0, 180.0)
    lockin_axis: str = "detuning:-200:200:41"


@dataclass(frozen=True)
class SelftestSection:
    n_random: int = 20
    evolve_s: float = 0.01


@dataclass(frozen=True)
class RunConfig:
    atom: AtomSection = field(default_factory=AtomSection)
    decoherence: DecoherenceSection = field(default_factory=DecoherenceSection)
    cavity: CavitySection = field(default_factory=CavitySection)
    modulation: ModulationSection = field(default_factory=ModulationSection)
    transmission: TransmissionSection = field(default_factory=TransmissionSection)
    photodiode: PhotodiodeSection = field(default_factory=PhotodiodeSection)
    lockin: LockInSection = field(default_factory=LockInSection)
    tone: ToneSection = field(default_factory=ToneSection)
    solver: SolverSection = field(default_factory=SolverSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    selftest: SelftestSection = field(default_factory=SelftestSection)
    output_dir: str = "out"
    seed: int = 0
    # subcommand that reproduces this recipe (used by scripts/run_recipes.py)
    recipe_command: Optional[str] = None

    # --- builders -------------------------------------------------------------

    def atom_params(self) -> AtomFieldParams:
        return AtomFieldParams(
            omega_opt_rabi=TWO_PI * 1e3 * self.atom.omega_opt_khz,
            delta_opt=TWO_PI * 1e3 * self.atom.delta_opt_khz,
        )

    def decoherence_params(self) -> DecoherenceParams:
        s = self.decoherence
        k = TWO_PI * 1e3
        return DecoherenceParams(k * s.gamma_e_g1_khz, k * s.gamma_e_g2_khz,
                                 k * s.gamma_ground_relax_khz, k * s.gamma_mw_dephase_khz)

    def cavity_params(self) -> CavityParams:
        s = self.cavity
        return CavityParams(s.f_resonance_hz, s.quality_factor, TWO_PI * 1e3 * s.rabi_khz_at_0dbm)

    def transmission_model(self) -> TransmissionModel:
        return TransmissionModel(self.transmission.optical_depth)

    def photodiode_model(self) -> PhotodiodeModel:
        s = self.photodiode
        return PhotodiodeModel(s.gain_v, s.offset_v, s.noise_rms_v)

    def lockin_config(self) -> LockInConfig:
        s = self.lockin
        return LockInConfig(s.reference_freq_hz, s.time_constant_s, s.filter_order,
                            s.reference_phase_rad)

    def carrier_power_dbm(self, mode=None) -> float:
        mode = mode or self.modulation.mode
        return self.modulation.am_power_dbm if mode == "am" else self.modulation.fm_power_dbm

    def modulation_config(self, mode=None) -> ModulationConfig:
        """Modulation settings with the carrier Rabi taken from power and cavity calibration."""
        from .cavity import attenuate_dbm, input_power_to_rabi

        mode = mode or self.modulation.mode
        s = self.modulation
        power = attenuate_dbm(self.carrier_power_dbm(mode), self.cavity.link_loss_db)
        det = s.am_detuning_khz if mode == "am" else s.fm_detuning_khz
        return ModulationConfig(
            mode=mode,
            m_am=s.m_am_per_v,
            m_fm=TWO_PI * 1e3 * s.m_fm_khz_per_v,
            carrier_rabi_0=input_power_to_rabi(power, self.cavity_params()),
            carrier_detuning_0=TWO_PI * 1e3 * det,
        )

    def pipeline(self, mode=None, path=None) -> Pipeline:
        mode = mode or self.modulation.mode
        sv = self.solver
        return Pipeline(
            base=self.atom_params(),
            decoherence=self.decoherence_params(),
            transmission=self.transmission_model(),
            cavity=self.cavity_params(),
            modulation=self.modulation_config(mode),
            photodiode=self.photodiode_model(),
            lockin=self.lockin_config(),
            carrier_power_dbm=self.carrier_power_dbm(mode),
            link_loss_db=self.cavity.link_loss_db,
            tone_amplitude=self.tone.amplitude_v,
            tone_shape=self.tone.shape,
            path=path or sv.path,
            use_cavity=sv.use_cavity,
            warmup=sv.warmup_s,
            readout_periods=sv.readout_periods,
            min_sample_rate=sv.min_sample_rate_hz,
            samples_per_period=sv.samples_per_period,
            dt_max=sv.dt_max_s,
            seed=self.seed,
        )

    def replace(self, section: str, **kw) -> "RunConfig":
        return dataclasses.replace(self, **{section: dataclasses.replace(getattr(self, section), **kw)})


# --- (de)serialisation ----------------------------------------------------------

_CHOICES = {
    ("modulation", "mode"): ("am", "fm"),
    ("tone", "shape"): ("sine", "square"),
    ("solver", "path"): ("quasi", "dynamic"),
    ("", "recipe_command"): ("steady-sweep", "transduce", "lockin-sweep", "selftest"),
}


def _line_of(text, key):
    if text is None:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _where(path, text, key):
    line = _line_of(text, key)
    return f"{path}" + (f" (line {line})" if line else "")


def _coerce(value, ftype, where):
    # ftype is a string annotation because of `from __future__ import annotations`
    optional = ftype.startswith("Optional[")
    base = ftype[9:-1] if optional else ftype
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{where}: null is not allowed")
    if base == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if base == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if base == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if base == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if base == "tuple":
        if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raise ConfigError(f"{where}: expected a list of numbers, got {value!r}")
        return tuple(float(v) for v in value)
    raise ConfigError(f"{where}: unsupported field type {ftype}")


def _build(cls, data, prefix, text):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected an object, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in fields:
            name = f"{prefix}.{key}" if prefix else key
            raise ConfigError(
                f"{_where('unknown key ' + repr(name), text, key)}; "
                f"allowed: {', '.join(sorted(fields))}"
            )
    kw = {}
    for key, value in data.items():
        f = fields[key]
        name = f"{prefix}.{key}" if prefix else key
        if dataclasses.is_dataclass(f.default_factory if f.default_factory is not dataclasses.MISSING else None):
            kw[key] = _build(f.default_factory, value, name, text)
            continue
        value = _coerce(value, f.type, _where(name, text, key))
        choices = _CHOICES.get((prefix, key))
        if choices and value is not None and value not in choices:
            raise ConfigError(f"{_where(name, text, key)}: must be one of {choices}, got {value!r}")
        kw[key] = value
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix or 'config'}: {exc}") from exc


def parse_config(data, text=None) -> RunConfig:
    """Build a RunConfig from a decoded JSON object, rejecting unknown keys."""
    cfg = _build(RunConfig, data, "", text)
    validate(cfg)
    return cfg


def loads(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_config(data, text)


def load(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = loads(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    wav = cfg.tone.input_wav
    if wav and not Path(wav).is_absolute():
        # relative audio paths are relative to the config file
        cfg = cfg.replace("tone", input_wav=str(path.parent / wav))
    return cfg


def to_dict(cfg: RunConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["sweep"]["rabi_khz"] = list(d["sweep"]["rabi_khz"])
    return d


def dumps(cfg: RunConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2) + "\n"


def validate(cfg: RunConfig):
    """Cross-field checks that the physics builders would otherwise hit late."""
    try:
        cfg.atom_params()
        cfg.decoherence_params()
        cfg.cavity_params()
        cfg.transmission_model()
        cfg.photodiode_model()
        cfg.lockin_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.tone.sample_rate_hz <= 0 or cfg.tone.duration_s <= 0:
        raise ConfigError("tone: sample_rate_hz and duration_s must be positive")
    if cfg.cavity.link_loss_db < 0:
        raise ConfigError("cavity.link_loss_db must be >= 0")
    if cfg.solver.dt_max_s is not None and cfg.solver.dt_max_s <= 0:
        raise ConfigError("solver.dt_max_s must be positive")
    if cfg.selftest.n_random < 1 or cfg.selftest.evolve_s <= 0:
        raise ConfigError("selftest: n_random >= 1 and evolve_s > 0 required")
