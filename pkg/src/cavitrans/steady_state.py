"""Steady state of the three-level model, probe transmission and its sensitivities."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lindblad import (
    G2,
    TWO_PI,
    AtomFieldParams,
    DecoherenceParams,
    _AffineGenerator,
    fastest_rate,
    from_real,
    liouvillian_apply,
    real_liouvillian,
)

NULLITY_RTOL = 1e-12
RESIDUAL_RTOL = 1e-10
FD_REL_STEP = 1e-4
FD_ABS_FLOOR = TWO_PI * 1.0
RICHARDSON_TOL = 0.01

_TRACE_ROW = np.array([1.0, 1.0, 1.0, 0, 0, 0, 0, 0, 0])


class SteadyStateError(ArithmeticError):
    pass


class DegenerateSteadyStateError(SteadyStateError):
    """The Liouvillian has more than one stationary state."""


@dataclass(frozen=True)
class TransmissionModel:
    """Beer-Lambert probe transmission T = exp(-optical_depth * rho_22)."""

    optical_depth: float = 1.0

    def __post_init__(self):
        if not self.optical_depth >= 0:
            raise ValueError("optical_depth must be >= 0")

    def __call__(self, pop_g2):
        return np.exp(-self.optical_depth * np.asarray(pop_g2, dtype=float))


def nullity(p: AtomFieldParams, d: DecoherenceParams, rtol=NULLITY_RTOL) -> int:
    s = np.linalg.svd(real_liouvillian(p, d), compute_uv=False)
    if s[0] == 0.0:
        return 9
    return int(np.sum(s <= rtol * s[0]))


def _solve_real(L):
    # trace constraint replaces the rho_ee row; rows of L are linearly dependent there
    A = L.copy()
    A[..., 0, :] = _TRACE_ROW
    b = np.zeros(A.shape[:-1])
    b[..., 0] = 1.0
    return np.linalg.solve(A, b[..., None])[..., 0]


def solve_steady_state(p: AtomFieldParams, d: DecoherenceParams) -> np.ndarray:
    """Stationary density matrix via the null vector of the vectorised Liouvillian."""
    L = real_liouvillian(p, d)
    k = nullity(p, d)
    if k != 1:
        raise DegenerateSteadyStateError(f"Liouvillian nullity is {k}, expected 1")
    rho = from_real(_solve_real(L))
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    scale = max(fastest_rate(p, d), 1.0)
    resid = np.max(np.abs(liouvillian_apply(rho, p, d)))
    if resid > RESIDUAL_RTOL * scale:
        raise SteadyStateError(f"steady-state residual {resid:.3g} too large")
    return rho


def steady_populations_g2(omega_mu, delta_mu, base: AtomFieldParams,
                          d: DecoherenceParams, chunk=65536) -> np.ndarray:
    """Vectorised rho_22 of the steady state over arrays of (omega_mu, delta_mu).

    Skips the per-point nullity test; call solve_steady_state once at the base point
    to validate the parameter set.
    """
    omega_mu, delta_mu = np.broadcast_arrays(
        np.asarray(omega_mu, dtype=float), np.asarray(delta_mu, dtype=float)
    )
    gen = _AffineGenerator.build(base, d)
    flat_w, flat_d = omega_mu.ravel(), delta_mu.ravel()
    out = np.empty(flat_w.size)
    for s in range(0, flat_w.size, chunk):
        x = _solve_real(gen(flat_w[s:s + chunk], flat_d[s:s + chunk]))
        out[s:s + chunk] = x[:, G2] / x[:, :3].sum(axis=1)
    return out.reshape(omega_mu.shape)


def transmission(rho, m: TransmissionModel) -> float:
    rho = np.asarray(rho)
    return float(m(rho[G2, G2].real))


def steady_transmission(p: AtomFieldParams, d: DecoherenceParams, m: TransmissionModel) -> float:
    return transmission(solve_steady_state(p, d), m)


@dataclass(frozen=True)
class Sensitivities:
    """dT/d(omega_mu) and dT/d(delta_mu), both in seconds (per rad/s)."""

    d_omega_mu: float
    d_delta_mu: float
    warnings: tuple[str, ...] = field(default=())


def _fd_step(x):
    return max(FD_REL_STEP * abs(x), FD_ABS_FLOOR)


def _central(f, x, h):
    return (f(x + h) - f(x - h)) / (2 * h)


def transmission_sensitivities(p: AtomFieldParams, d: DecoherenceParams,
                               m: TransmissionModel) -> Sensitivities:
    """Central finite differences of the steady-state transmission.

    A Richardson-style check recomputes each derivative at half the step and
    attaches a warning when the two differ by more than 1 %.
    """
    solve_steady_state(p, d)  # validates the operating point

    def t_of_omega(w):
        # T is even in omega_mu (sign flip of |g1> is a gauge choice)
        return steady_transmission(p.with_mw(omega_mu_rabi=abs(w)), d, m)

    def t_of_delta(x):
        return steady_transmission(p.with_mw(delta_mu=x), d, m)

    warnings = []
    results = []
    for name, f, x in (
        ("omega_mu", t_of_omega, p.omega_mu_rabi),
        ("delta_mu", t_of_delta, p.delta_mu),
    ):
        h = _fd_step(x)
        full = _central(f, x, h)
        half = _central(f, x, h / 2)
        ref = max(abs(full), abs(half))
        if ref > 0 and abs(full - half) > RICHARDSON_TOL * ref and ref > 1e-14:
            warnings.append(
                f"dT/d{name}: halving the step changed the estimate by "
                f"{abs(full - half) / ref:.2%}"
            )
        results.append(full)
    return Sensitivities(results[0], results[1], tuple(warnings))
