"""Carrier trajectory -> probe transmission T(t) -> photodiode voltage."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline
from scipy.optimize import curve_fit

from .lindblad import (
    G2,
    AtomFieldParams,
    DecoherenceParams,
    PiecewiseDrive,
    evolve_interval,
)
from .modulation import AudioSignal, CarrierTrajectory, write_csv
from .steady_state import TransmissionModel, solve_steady_state, steady_populations_g2

log = logging.getLogger(__name__)

TABLE_THRESHOLD = 200_000
TABLE_RTOL = 1e-4
FIT_RESIDUAL_BOUND = 0.05


class NoEdgeError(ValueError):
    pass


class PoorFitError(ValueError):
    pass


@dataclass(frozen=True)
class PhotodiodeModel:
    """Amplified photodiode: V = gain * T + offset (+ white noise)."""

    gain: float = 1.0
    offset: float = 0.0
    noise_rms: float = 0.0

    def __post_init__(self):
        if not self.gain > 0:
            raise ValueError("photodiode gain must be positive")
        if self.noise_rms < 0:
            raise ValueError("noise_rms must be >= 0")


@dataclass(frozen=True)
class TransmissionSeries:
    """Probe transmission T[k] at times t[k]."""

    t: np.ndarray
    T: np.ndarray
    sample_rate: float

    def __len__(self):
        return self.T.size

    def to_csv(self, path):
        write_csv(path, ["t_s", "transmission"], [self.t, self.T])


class QuasiStaticTable:
    """Cubic interpolation of steady-state rho_22 over the trajectory's (omega, delta) box.

    Axes with no spread collapse to 1-D splines. ``verify`` checks the table against
    direct solves at random points of the trajectory.
    """

    def __init__(self, traj: CarrierTrajectory, base, d, n_grid=96):
        self.base, self.d = base, d
        w, dl = traj.omega_mu, traj.delta_mu
        self._wr = (w.min(), w.max())
        self._dr = (dl.min(), dl.max())
        gw = np.linspace(*self._wr, n_grid) if np.ptp(w) > 0 else None
        gd = np.linspace(*self._dr, n_grid) if np.ptp(dl) > 0 else None
        if gw is not None and gd is not None:
            W, D = np.meshgrid(gw, gd, indexing="ij")
            pop = steady_populations_g2(W, D, base, d)
            spl = RectBivariateSpline(gw, gd, pop, kx=3, ky=3)
            self._f = lambda a, b: spl.ev(a, b)
        elif gw is not None:
            spl = CubicSpline(gw, steady_populations_g2(gw, self._dr[0], base, d))
            self._f = lambda a, b: spl(a)
        elif gd is not None:
            spl = CubicSpline(gd, steady_populations_g2(self._wr[0], gd, base, d))
            self._f = lambda a, b: spl(b)
        else:
            c = float(steady_populations_g2(self._wr[0], self._dr[0], base, d))
            self._f = lambda a, b: np.full(np.shape(a), c)

    def __call__(self, omega_mu, delta_mu):
        return self._f(np.asarray(omega_mu), np.asarray(delta_mu))

    def verify(self, traj: CarrierTrajectory, m: TransmissionModel, n_points=100, seed=0):
        """Largest relative T error of the table at random trajectory samples."""
        rng = np.random.default_rng(seed)
        idx = rng.choice(len(traj), size=min(n_points, len(traj)), replace=False)
        w, dl = traj.omega_mu[idx], traj.delta_mu[idx]
        exact = m(steady_populations_g2(w, dl, self.base, self.d))
        approx = m(self(w, dl))
        return float(np.max(np.abs(approx - exact) / np.abs(exact)))


def transduce_quasi_static(traj: CarrierTrajectory, base: AtomFieldParams,
                           d: DecoherenceParams, m: TransmissionModel,
                           method="auto") -> TransmissionSeries:
    """Steady-state transmission at every sample's instantaneous drive.

    ``method`` is "direct" (one linear solve per sample), "table" (verified cubic
    interpolation) or "auto" (table above TABLE_THRESHOLD samples). Only valid when
    the modulation is slow next to the optical pumping rate.
    """
    solve_steady_state(base.with_mw(traj.omega_mu[0], traj.delta_mu[0]), d)
    use_table = method == "table" or (method == "auto" and len(traj) > TABLE_THRESHOLD)
    pop = None
    if use_table:
        for n_grid in (96, 192, 384):
            table = QuasiStaticTable(traj, base, d, n_grid)
            err = table.verify(traj, m)
            if err <= TABLE_RTOL:
                pop = table(traj.omega_mu, traj.delta_mu)
                break
            log.info("interpolation table n=%d error %.2g, refining", n_grid, err)
        else:
            log.warning("interpolation table never reached %g; solving directly", TABLE_RTOL)
    if pop is None:
        pop = steady_populations_g2(traj.omega_mu, traj.delta_mu, base, d)
    return TransmissionSeries(traj.t, m(pop), traj.sample_rate)


def transduce_dynamic(traj: CarrierTrajectory, rho0, base: AtomFieldParams,
                      d: DecoherenceParams, m: TransmissionModel,
                      dt_max=None) -> TransmissionSeries:
    """Full Lindblad evolution under the zero-order-held trajectory.

    T[k] is read at the end of hold interval k, i.e. at t = (k + 1) / fs.
    ``rho0=None`` starts from the steady state of the first sample.
    """
    if rho0 is None:
        rho0 = solve_steady_state(base.with_mw(traj.omega_mu[0], traj.delta_mu[0]), d)
    drive = PiecewiseDrive(base, traj.omega_mu, traj.delta_mu, traj.sample_rate)
    ev = evolve_interval(rho0, drive, d, drive.duration, dt_max=dt_max)
    return TransmissionSeries(ev.t[1:], m(ev.population(G2)[1:]), traj.sample_rate)


def _find_edges(T, min_settled):
    """(start, stop) index pairs of the transitions between the two signal levels.

    Transitions are located by crossings of the mid level; each one starts at the
    last extreme sample on the side it leaves (the departure point) and runs to the
    departure point of the next transition.
    """
    lo, hi = np.percentile(T, [1, 99])
    if hi - lo <= 0:
        return []
    above = T > 0.5 * (lo + hi)
    cross = np.flatnonzero(above[1:] != above[:-1]) + 1
    starts = []
    prev = 0
    for c in cross:
        window = T[prev:c]
        rising = above[c]
        ext = window.min() if rising else window.max()
        k = prev + np.flatnonzero(window == ext)[-1]
        starts.append(k)
        prev = c
    bounds = starts + [T.size]
    segs = []
    for n, k in enumerate(starts):
        before = k - (starts[n - 1] if n else -1) - 1
        after = bounds[n + 1] - k - 1
        if before >= min_settled and after >= min_settled:
            segs.append((k, bounds[n + 1]))
    return segs


def _exp_model(t, T0, T_inf, tau, t0=0.0):
    """Flat at T0 until t0, then an exponential approach to T_inf."""
    dt = np.maximum(t - t0, 0.0)
    return T_inf + (T0 - T_inf) * np.exp(-dt / tau)


def extract_response_time(step_response, sample_rate, min_settled=10) -> float:
    """Exponential time constant (s) of the largest step transition in a response.

    Fits T(t) = T0 for t < t0 and T_inf + (T0 - T_inf) exp(-(t - t0) / tau) after,
    from the departure point of the transition up to the next one. The free onset t0
    absorbs any flat stretch that noise leaves in front of the edge. Raises
    NoEdgeError when no transition has ``min_settled`` samples on both sides and
    PoorFitError when the fit residual RMS is not below 5 % of the step height.
    """
    T = np.asarray(step_response, dtype=float)
    segs = _find_edges(T, min_settled)
    if not segs:
        raise NoEdgeError(f"no step edge with {min_settled} settled samples on both sides")
    k, stop = max(segs, key=lambda s: np.ptp(T[s[0]:s[1]]))
    seg = T[k:stop]
    dt = 1.0 / sample_rate
    t = np.arange(seg.size) * dt
    T0, T_end = seg[0], seg[-1]
    height = T_end - T0
    frac = (seg - T0) / height
    # onset guess: last sample still within 10 % of the starting level before the
    # signal crosses half way
    half = np.flatnonzero(frac >= 0.5)
    k_half = half[0] if half.size else seg.size // 2
    near = np.flatnonzero(frac[: k_half + 1] < 0.1)
    t0 = t[near[-1]] if near.size else 0.0
    cross = np.flatnonzero(frac >= 1 - np.exp(-1))
    tau0 = max((t[cross[0]] if cross.size else t[-1] / 3) - t0, dt / 5)
    (T0f, T_inf, tau, t0f), _ = curve_fit(
        _exp_model, t, seg, p0=(T0, T_end, tau0, t0),
        bounds=([-np.inf, -np.inf, dt * 1e-3, 0.0], [np.inf, np.inf, np.inf, t[k_half]]),
        method="trf", x_scale=(abs(height), abs(height), tau0, tau0),
    )
    resid = np.sqrt(np.mean((seg - _exp_model(t, T0f, T_inf, tau, t0f)) ** 2))
    step_height = abs(T_inf - T0f)
    if step_height == 0 or resid >= FIT_RESIDUAL_BOUND * step_height:
        raise PoorFitError(
            f"exponential fit residual {resid:.3g} is not below 5% of step height {step_height:.3g}"
        )
    return float(tau)


def photodiode(series: TransmissionSeries, pd: PhotodiodeModel, seed: int = 0) -> AudioSignal:
    """Photodiode voltage; noise is drawn from a generator seeded with ``seed``."""
    v = pd.gain * np.asarray(series.T, dtype=float) + pd.offset
    if pd.noise_rms > 0:
        v = v + pd.noise_rms * np.random.default_rng(seed).standard_normal(v.size)
    return AudioSignal(v, series.sample_rate)
