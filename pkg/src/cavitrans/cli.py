"""Command-line front end: ``cavitrans {steady-sweep,transduce,lockin-sweep,selftest}``.

Exit codes: 0 success, 1 selftest failure, 2 configuration/input error,
3 physics precondition violated, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as config_mod
from .cavity import cavity_transfer
from .config import ConfigError, RunConfig
from .lindblad import TWO_PI, IntegrationError
from .lockin import InsufficientDurationError, sweep
from .modulation import (
    AliasingError,
    AudioSignal,
    OvermodulationError,
    WavFormatError,
    encode,
    load_wav,
    make_tone,
    save_wav,
    write_csv,
)
from .steady_state import DegenerateSteadyStateError, SteadyStateError, steady_populations_g2
from .transduction import NoEdgeError, PoorFitError, photodiode
from .validation import integrity_check, small_signal_check, steady_vs_integration

log = logging.getLogger("cavitrans")

EXIT_OK = 0
EXIT_SELFTEST_FAILED = 1
EXIT_CONFIG = 2
EXIT_PHYSICS = 3
EXIT_NUMERICAL = 4

# -6 dBFS peak for the output WAV
WAV_PEAK = 10.0 ** (-6.0 / 20.0)
# AC content below this (relative to the DC level) is treated as silence
SILENCE_RTOL = 1e-9


class AxisError(ConfigError):
    pass


def parse_axis(spec: str, allowed):
    """``name:start:stop:n[:log]`` -> (name, values)."""
    parts = spec.split(":")
    if len(parts) not in (4, 5) or (len(parts) == 5 and parts[4] != "log"):
        raise AxisError(f"axis spec {spec!r} must look like name:start:stop:n[:log]")
    name = parts[0]
    if name not in allowed:
        raise AxisError(f"axis {name!r} not one of {', '.join(allowed)}")
    try:
        start, stop, n = float(parts[1]), float(parts[2]), int(parts[3])
    except ValueError as exc:
        raise AxisError(f"axis spec {spec!r}: {exc}") from exc
    if n < 1:
        raise AxisError("axis needs n >= 1 points")
    if n == 1 and start != stop:
        raise AxisError("a single-point axis needs start == stop")
    if len(parts) == 5:
        if start <= 0 or stop <= 0:
            raise AxisError("log axis needs positive bounds")
        return name, np.geomspace(start, stop, n)
    return name, np.linspace(start, stop, n)


def _write_meta(path: Path, items: dict):
    path.write_text("".join(f"{k}={v}\n" for k, v in items.items()))


# --- commands -------------------------------------------------------------------

STEADY_AXES = ("detuning", "rabi")
STEADY_UNITS = {"detuning": "detuning_khz", "rabi": "rabi_khz"}


def cmd_steady_sweep(cfg: RunConfig, args) -> int:
    """Steady-state T vs microwave detuning (one column per Rabi frequency) or vs Rabi."""
    name, values = parse_axis(args.axis or cfg.sweep.steady_axis, STEADY_AXES)
    base, d, m = cfg.atom_params(), cfg.decoherence_params(), cfg.transmission_model()
    x = TWO_PI * 1e3 * values
    if name == "detuning":
        labels = [f"T_rabi_{r:g}khz" for r in cfg.sweep.rabi_khz]
        cols = [m(steady_populations_g2(TWO_PI * 1e3 * r, x, base, d)) for r in cfg.sweep.rabi_khz]
    else:
        det = cfg.modulation_config(args.mode).carrier_detuning_0
        labels = [f"T_detuning_{det / TWO_PI / 1e3:g}khz"]
        cols = [m(steady_populations_g2(x, det, base, d))]
    out = args.out / "steady_sweep.csv"
    write_csv(out, [STEADY_UNITS[name]] + labels, [values] + cols)
    print(f"wrote {out} ({values.size} rows)")
    return EXIT_OK


def _input_audio(cfg: RunConfig, args) -> AudioSignal:
    wav = args.input or cfg.tone.input_wav
    if wav:
        audio = load_wav(wav)
        return audio.normalized(1.0) if cfg.tone.normalize_input else audio
    t = cfg.tone
    return make_tone(t.freq_hz, t.amplitude_v, t.shape, t.duration_s, t.sample_rate_hz)


def normalize_for_wav(v: np.ndarray):
    """Remove the mean and scale to a -6 dBFS peak; returns (samples, dc, gain)."""
    dc = float(np.mean(v))
    ac = v - dc
    peak = float(np.max(np.abs(ac)))
    if peak <= SILENCE_RTOL * max(1.0, abs(dc)):
        return np.zeros_like(v), dc, 0.0
    gain = WAV_PEAK / peak
    return ac * gain, dc, gain


def cmd_transduce(cfg: RunConfig, args) -> int:
    mode = args.mode or cfg.modulation.mode
    path = args.path or cfg.solver.path
    p = cfg.pipeline(mode, path)
    audio = _input_audio(cfg, args)
    traj = encode(audio, p.modulation_config())
    if p.use_cavity:
        traj = cavity_transfer(traj, p.cavity)
    series = p.transduce(traj)
    volts = photodiode(series, p.photodiode, cfg.seed)
    samples, dc, gain = normalize_for_wav(volts.samples)

    out = args.out
    series.to_csv(out / "transduce_T.csv")
    traj.to_csv(out / "transduce_carrier.csv")
    save_wav(AudioSignal(samples, volts.sample_rate), out / "transduce.wav")
    _write_meta(out / "transduce.meta.txt", {
        "mode": mode,
        "path": path,
        "sample_rate_hz": f"{volts.sample_rate:.17g}",
        "samples": volts.samples.size,
        "input": str(args.input or cfg.tone.input_wav or
                     f"tone {cfg.tone.shape} {cfg.tone.freq_hz:g} Hz {cfg.tone.amplitude_v:g} V"),
        "carrier_rabi_hz": f"{p.modulation_config().carrier_rabi_0 / TWO_PI:.17g}",
        "carrier_detuning_hz": f"{p.modulation.carrier_detuning_0 / TWO_PI:.17g}",
        "dc_removed_v": f"{dc:.17g}",
        "wav_gain": f"{gain:.17g}",
        "wav_peak_dbfs": "-6" if gain else "silent",
        "seed": cfg.seed,
    })
    print(f"wrote {out}/transduce.wav, transduce_T.csv, transduce_carrier.csv, transduce.meta.txt")
    return EXIT_OK


LOCKIN_AXES = ("detuning", "power", "mod_frequency")
LOCKIN_UNITS = {"detuning": "kHz", "power": "dBm", "mod_frequency": "Hz"}


def cmd_lockin_sweep(cfg: RunConfig, args) -> int:
    mode = args.mode or cfg.modulation.mode
    p = cfg.pipeline(mode, args.path or cfg.solver.path)
    name, values = parse_axis(args.axis or cfg.sweep.lockin_axis, LOCKIN_AXES)
    points = TWO_PI * 1e3 * values if name == "detuning" else values
    res = sweep(name, points, p)
    out = args.out / "lockin_sweep.csv"
    res.to_csv(out, axis_values=values)
    meta = {
        "mode": mode,
        "path": p.path,
        "axis": name,
        "axis_unit": LOCKIN_UNITS[name],
        "reference_phase_rad": f"{res.reference_phase:.17g}",
        "seed": cfg.seed,
    }
    if name == "mod_frequency":
        meta["carrier_detuning_khz"] = f"{res.detunings[0] / TWO_PI / 1e3:.17g}"
    _write_meta(args.out / "lockin_sweep.meta.txt", meta)
    print(f"wrote {out} ({values.size} rows)")
    return EXIT_OK


def run_selftest(cfg: RunConfig):
    """All invariant checks for a config; never raises on a failed check."""
    base, d, m = cfg.atom_params(), cfg.decoherence_params(), cfg.transmission_model()
    dt = cfg.solver.dt_max_s
    results = [integrity_check(cfg.selftest.n_random, cfg.selftest.evolve_s, dt_max=dt,
                               seed=cfg.seed, base=base, d=d)]
    points = {}
    for mode in ("am", "fm"):
        mc = cfg.modulation_config(mode)
        points[mode] = base.with_mw(mc.carrier_rabi_0, mc.carrier_detuning_0)
    results.append(steady_vs_integration(points["am"], d, dt_max=dt))
    for mode in ("am", "fm"):
        results.append(small_signal_check(mode, points[mode], d, m, dt_max=dt))
    return results


def cmd_selftest(cfg: RunConfig, args) -> int:
    results = run_selftest(cfg)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print("selftest " + ("passed" if ok else "FAILED"))
    return EXIT_OK if ok else EXIT_SELFTEST_FAILED


COMMANDS = {
    "steady-sweep": cmd_steady_sweep,
    "transduce": cmd_transduce,
    "lockin-sweep": cmd_lockin_sweep,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration (defaults if omitted)")
    common.add_argument("--out", type=Path, help="output directory (default: config output_dir)")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("--mode", choices=("am", "fm"), help="modulation mode")
    common.add_argument("--path", choices=("quasi", "dynamic"), help="transduction path")
    common.add_argument("--axis", help="sweep axis name:start:stop:n[:log]")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="cavitrans",
        description="Microwave-to-optical transduction in a three-level atomic vapour.",
    )
    sub = parser.add_subparsers(dest="command")
    sub.add_parser("steady-sweep", parents=[common],
                   help="steady-state T vs detuning (kHz) or Rabi frequency (kHz)")
    tr = sub.add_parser("transduce", parents=[common],
                        help="audio or tone -> transmitted probe WAV + T(t) CSV")
    tr.add_argument("--input", help="16-bit PCM WAV to transduce instead of the config tone")
    sub.add_parser("lockin-sweep", parents=[common],
                   help="lock-in sweep over detuning (kHz), power (dBm) or mod_frequency (Hz)")
    sub.add_parser("selftest", parents=[common], help="run the invariant checks")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_mod.load(args.config) if getattr(args, "config", None) else RunConfig()
        if getattr(args, "seed", None) is not None:
            cfg = replace(cfg, seed=args.seed)
        args.out = args.out or Path(cfg.output_dir)
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, WavFormatError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OvermodulationError, AliasingError, DegenerateSteadyStateError,
            InsufficientDurationError, NoEdgeError) as exc:
        print(f"physics precondition: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except (IntegrationError, SteadyStateError, PoorFitError, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
