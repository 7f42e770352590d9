"""Invariant checks shared by the ``selftest`` command and the test suite."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .lindblad import (
    G1,
    G2,
    TWO_PI,
    AtomFieldParams,
    DecoherenceParams,
    IntegrationError,
    evolve_interval,
    real_liouvillian,
    maximally_mixed,
)
from .modulation import ModulationConfig, encode, make_tone
from .steady_state import (
    SteadyStateError,
    TransmissionModel,
    solve_steady_state,
    transmission_sensitivities,
)
from .transduction import transduce_dynamic


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    skipped: bool = False

    def line(self) -> str:
        tag = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        return f"[{tag}] {self.name}: {self.detail}"


def random_parameter_set(rng, base: AtomFieldParams | None = None,
                         d: DecoherenceParams | None = None):
    """A physically sensible random (drive, decoherence) pair.

    With ``base``/``d`` given, the optical drive and every rate are scaled by a
    random factor in [0.5, 2] around them; the microwave drive is always random.
    """
    if base is None:
        base = AtomFieldParams(omega_opt_rabi=TWO_PI * 10 ** rng.uniform(3.5, 5.5),
                               delta_opt=TWO_PI * rng.uniform(-1e6, 1e6))
    else:
        base = replace(base, omega_opt_rabi=base.omega_opt_rabi * rng.uniform(0.5, 2))
    if d is None:
        gamma = TWO_PI * 6.07e6 * rng.uniform(0.5, 2)
        split = rng.uniform(0.2, 0.8)
        d = DecoherenceParams(gamma * split, gamma * (1 - split),
                              TWO_PI * 10 ** rng.uniform(0, 3), TWO_PI * 10 ** rng.uniform(1, 4))
    else:
        f = rng.uniform(0.5, 2, size=4)
        d = DecoherenceParams(d.gamma_e_g1 * f[0], d.gamma_e_g2 * f[1],
                              d.gamma_ground_relax * f[2], d.gamma_mw_dephase * f[3])
    p = base.with_mw(omega_mu_rabi=TWO_PI * rng.uniform(0, 200e3),
                     delta_mu=TWO_PI * rng.uniform(-300e3, 300e3))
    return p, d


def random_state(rng) -> np.ndarray:
    """Random full-rank density matrix (Wishart-like)."""
    g = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def state_defects(rho):
    """(trace drift, Hermiticity defect, smallest eigenvalue) over a state series."""
    rho = np.asarray(rho)
    tr = np.abs(np.trace(rho, axis1=-2, axis2=-1) - 1.0).max()
    herm = np.abs(rho - np.swapaxes(rho.conj(), -1, -2)).max()
    herm_part = 0.5 * (rho + np.swapaxes(rho.conj(), -1, -2))
    mineig = np.linalg.eigvalsh(herm_part).min()
    return float(tr), float(herm), float(mineig)


def integrity_check(n_sets=200, t_span=10e-3, dt_max=None, seed=0, base=None, d=None,
                    trace_tol=1e-8, herm_tol=1e-10, eig_tol=-1e-9) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = [0.0, 0.0, 1.0]
    for i in range(n_sets):
        p, dd = random_parameter_set(rng, base, d)
        try:
            ev = evolve_interval(random_state(rng), p, dd, t_span, dt_max=dt_max)
        except IntegrationError as exc:
            return CheckResult("integrity", False, f"set {i}: {exc}")
        tr, herm, mineig = state_defects(ev.rho)
        worst = [max(worst[0], tr), max(worst[1], herm), min(worst[2], mineig)]
    ok = worst[0] <= trace_tol and worst[1] <= herm_tol and worst[2] >= eig_tol
    return CheckResult(
        "integrity", ok,
        f"{n_sets} sets, {t_span * 1e3:g} ms: trace drift {worst[0]:.2e} (<= {trace_tol:g}), "
        f"hermiticity {worst[1]:.2e} (<= {herm_tol:g}), min eigenvalue {worst[2]:.2e} (>= {eig_tol:g})",
    )


def relaxation_time(p: AtomFieldParams, d: DecoherenceParams) -> float:
    """Slowest decay time (s) of the Liouvillian, from its spectral gap."""
    lam = np.linalg.eigvals(real_liouvillian(p, d)).real
    rates = np.sort(-lam)
    gap = rates[1] if rates.size > 1 else 0.0
    return float("inf") if gap <= 0 else 1.0 / gap


def steady_vs_integration(p: AtomFieldParams, d: DecoherenceParams, t_span=50e-3,
                          dt_max=None, tol=1e-6) -> CheckResult:
    try:
        rho_ss = solve_steady_state(p, d)
    except SteadyStateError as exc:
        return CheckResult("steady_state", False, f"{type(exc).__name__}: {exc}")
    try:
        ev = evolve_interval(maximally_mixed(), p, d, t_span, dt_max=dt_max, t_eval=[t_span])
    except IntegrationError as exc:
        return CheckResult("steady_state", False, f"{type(exc).__name__}: {exc}")
    err = float(np.abs(ev.rho[-1] - rho_ss).max())
    return CheckResult("steady_state", err <= tol,
                       f"|rho(t={t_span * 1e3:g} ms) - rho_ss|max = {err:.2e} (<= {tol:g})")


def tone_amplitude(x, freq, sample_rate) -> float:
    """Amplitude of the ``freq`` component of x, projected over its whole periods."""
    n = int(math.floor(x.size * freq / sample_rate) * sample_rate / freq)
    if n < 1:
        raise ValueError("signal shorter than one period")
    t = np.arange(n) / sample_rate
    seg = np.asarray(x[-n:], dtype=float)
    return float(2.0 * abs(np.mean(seg * np.exp(-1j * TWO_PI * freq * t))))


def small_signal_response(mode, p: AtomFieldParams, d: DecoherenceParams, m: TransmissionModel,
                          depth=1e-3, freq=10.0, periods=3, settle=50e-3, sample_rate=20e3,
                          dt_max=None):
    """(measured, predicted) AC amplitude of T for a weak sine on the carrier.

    AM: Omega(t) = Omega0 (1 + depth sin wt), predicted |dT/dOmega| Omega0 depth.
    FM: Delta(t) = Delta0 + depth |Delta0| sin wt, predicted |dT/dDelta| depth |Delta0|.
    The measurement integrates the full Lindblad dynamics and projects the last
    ``periods`` whole periods onto the tone.
    """
    if mode == "am":
        cfg = ModulationConfig("am", m_am=depth, carrier_rabi_0=p.omega_mu_rabi,
                               carrier_detuning_0=p.delta_mu)
    else:
        dev = depth * abs(p.delta_mu)
        cfg = ModulationConfig("fm", m_fm=dev, carrier_rabi_0=p.omega_mu_rabi,
                               carrier_detuning_0=p.delta_mu)
    tone = make_tone(freq, 1.0, "sine", settle + periods / freq, sample_rate)
    traj = encode(tone, cfg)
    series = transduce_dynamic(traj, solve_steady_state(p, d), p, d, m, dt_max=dt_max)
    measured = tone_amplitude(series.T, freq, sample_rate)
    s = transmission_sensitivities(p, d, m)
    if mode == "am":
        predicted = abs(s.d_omega_mu) * p.omega_mu_rabi * depth
    else:
        predicted = abs(s.d_delta_mu) * depth * abs(p.delta_mu)
    return measured, predicted


def small_signal_check(mode, p, d, m, tol=0.01, dt_max=None, **kw) -> CheckResult:
    name = f"small_signal_{mode}"
    try:
        solve_steady_state(p, d)
    except SteadyStateError as exc:
        return CheckResult(name, True, f"skipped, no unique steady state ({exc})", skipped=True)
    try:
        measured, predicted = small_signal_response(mode, p, d, m, dt_max=dt_max, **kw)
    except IntegrationError as exc:
        return CheckResult(name, False, f"{type(exc).__name__}: {exc}")
    if predicted == 0:
        return CheckResult(name, False, "first-order sensitivity vanishes at this operating point")
    rel = abs(measured - predicted) / predicted
    return CheckResult(name, rel <= tol,
                       f"AC amplitude {measured:.4e} vs first-order {predicted:.4e}, "
                       f"relative error {rel:.2e} (<= {tol:g})")


def dark_state_population(p: AtomFieldParams, d: DecoherenceParams, t_span=0.5):
    """rho_g1g1 after evolving from the maximally mixed state with the microwave off."""
    ev = evolve_interval(maximally_mixed(), p.with_mw(omega_mu_rabi=0.0), d, t_span,
                         t_eval=[t_span])
    return float(ev.population(G1)[-1].real), float(ev.population(G2)[-1].real)
