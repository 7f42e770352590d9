"""Three-level Lindblad model of the double-resonance atom.

Basis order is fixed to (|e>, |g2>, |g1>) everywhere in the package.
hbar = 1, so the Hamiltonian is in angular-frequency units (rad/s) and all
decoherence rates are in rad/s as well.

Internally the density matrix is also carried as a real 9-vector

    x = [rho_ee, rho_22, rho_11, Re rho_e2, Im rho_e2, Re rho_e1, Im rho_e1,
         Re rho_21, Im rho_21]

which keeps Hermiticity exact and lets the trace constraint be enforced row-wise
on the real Liouvillian.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Union

import numpy as np

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
E, G2, G1 = 0, 1, 2

# Rb D2 natural linewidth; a configuration default, split evenly between both ground states.
GAMMA_D2 = TWO_PI * 6.07e6

# dt * fastest_rate must stay below this for a step to count as resolved.
STEP_RATE_BOUND = 0.1
# Default dt * fastest_rate when no dt_max is given.
DEFAULT_STEP_FRACTION = 0.01

TRACE_TOL = 1e-8
HERMITIAN_TOL = 1e-10
POSITIVITY_TOL = -1e-9


class IntegrationError(RuntimeError):
    """Time integration produced an unphysical state."""


class TraceDriftError(IntegrationError):
    pass


class PositivityError(IntegrationError):
    pass


@dataclass(frozen=True)
class AtomFieldParams:
    """Rabi frequencies and detunings of the rotating-wave Hamiltonian (rad/s)."""

    omega_opt_rabi: float = 0.0
    delta_opt: float = 0.0
    omega_mu_rabi: float = 0.0
    delta_mu: float = 0.0

    def __post_init__(self):
        if self.omega_opt_rabi < 0 or self.omega_mu_rabi < 0:
            raise ValueError("Rabi frequencies must be non-negative")

    def with_mw(self, omega_mu_rabi=None, delta_mu=None) -> "AtomFieldParams":
        kw = {}
        if omega_mu_rabi is not None:
            kw["omega_mu_rabi"] = float(omega_mu_rabi)
        if delta_mu is not None:
            kw["delta_mu"] = float(delta_mu)
        return replace(self, **kw)


@dataclass(frozen=True)
class DecoherenceParams:
    """Relaxation rates (rad/s).

    gamma_e_g1, gamma_e_g2 : spontaneous decay of |e> into each ground state
    gamma_ground_relax : total g1 <-> g2 population exchange (split evenly
        between the two directions)
    gamma_mw_dephase : pure dephasing rate of the g2-g1 coherence
    """

    gamma_e_g1: float = GAMMA_D2 / 2
    gamma_e_g2: float = GAMMA_D2 / 2
    gamma_ground_relax: float = 0.0
    gamma_mw_dephase: float = 0.0

    def __post_init__(self):
        for name in ("gamma_e_g1", "gamma_e_g2", "gamma_ground_relax", "gamma_mw_dephase"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self) -> float:
        return self.gamma_e_g1 + self.gamma_e_g2 + self.gamma_ground_relax + self.gamma_mw_dephase


def build_hamiltonian(p: AtomFieldParams) -> np.ndarray:
    """RWA Hamiltonian in basis (|e>, |g2>, |g1>), rad/s, hbar = 1."""
    return 0.5 * np.array(
        [
            [2.0 * p.delta_opt, p.omega_opt_rabi, 0.0],
            [p.omega_opt_rabi, 0.0, p.omega_mu_rabi],
            [0.0, p.omega_mu_rabi, 2.0 * p.delta_mu],
        ],
        dtype=complex,
    )


def _ket_bra(i, j):
    op = np.zeros((3, 3), dtype=complex)
    op[i, j] = 1.0
    return op


def jump_operators(d: DecoherenceParams) -> list[tuple[float, np.ndarray]]:
    """(rate, operator) pairs for every dissipative channel."""
    return [
        (d.gamma_e_g1, _ket_bra(G1, E)),
        (d.gamma_e_g2, _ket_bra(G2, E)),
        (d.gamma_ground_relax / 2, _ket_bra(G1, G2)),
        (d.gamma_ground_relax / 2, _ket_bra(G2, G1)),
        (d.gamma_mw_dephase, np.diag([0.0, 1.0, -1.0]).astype(complex) / np.sqrt(2.0)),
    ]


def liouvillian_apply(rho, p: AtomFieldParams, d: DecoherenceParams) -> np.ndarray:
    """Return d(rho)/dt = -i[H, rho] + sum_k g_k (L rho L^+ - {L^+ L, rho}/2)."""
    rho = np.asarray(rho, dtype=complex)
    H = build_hamiltonian(p)
    out = -1j * (H @ rho - rho @ H)
    for rate, L in jump_operators(d):
        if rate == 0.0:
            continue
        Ld = L.conj().T
        LdL = Ld @ L
        out += rate * (L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL))
    return out


# --- real coordinates -------------------------------------------------------

_OFFDIAG = ((E, G2), (E, G1), (G2, G1))


def _complex_to_real_map() -> tuple[np.ndarray, np.ndarray]:
    # M maps row-major vec(rho) -> x; Minv maps x -> vec(rho) for Hermitian rho.
    M = np.zeros((9, 9), dtype=complex)
    Minv = np.zeros((9, 9), dtype=complex)
    for k in range(3):
        M[k, 3 * k + k] = 1.0
        Minv[3 * k + k, k] = 1.0
    for n, (i, j) in enumerate(_OFFDIAG):
        re, im = 3 + 2 * n, 4 + 2 * n
        M[re, 3 * i + j] = 0.5
        M[re, 3 * j + i] = 0.5
        M[im, 3 * i + j] = -0.5j
        M[im, 3 * j + i] = 0.5j
        Minv[3 * i + j, re] = 1.0
        Minv[3 * i + j, im] = 1.0j
        Minv[3 * j + i, re] = 1.0
        Minv[3 * j + i, im] = -1.0j
    return M, Minv


_M, _MINV = _complex_to_real_map()


def to_real(rho) -> np.ndarray:
    """Hermitian (..., 3, 3) -> real (..., 9)."""
    rho = np.asarray(rho)
    x = np.empty(rho.shape[:-2] + (9,))
    for k in range(3):
        x[..., k] = rho[..., k, k].real
    for n, (i, j) in enumerate(_OFFDIAG):
        x[..., 3 + 2 * n] = rho[..., i, j].real
        x[..., 4 + 2 * n] = rho[..., i, j].imag
    return x


def from_real(x) -> np.ndarray:
    """Real (..., 9) -> Hermitian (..., 3, 3)."""
    x = np.asarray(x, dtype=float)
    rho = np.zeros(x.shape[:-1] + (3, 3), dtype=complex)
    for k in range(3):
        rho[..., k, k] = x[..., k]
    for n, (i, j) in enumerate(_OFFDIAG):
        c = x[..., 3 + 2 * n] + 1j * x[..., 4 + 2 * n]
        rho[..., i, j] = c
        rho[..., j, i] = np.conj(c)
    return rho


def _superop(op_left, op_right):
    # vec(A rho B) = (A kron B^T) vec(rho) for row-major vec
    return np.kron(op_left, op_right.T)


def _real_generator(H, d: DecoherenceParams) -> np.ndarray:
    I = np.eye(3)
    S = -1j * (_superop(H, I) - _superop(I, H))
    for rate, L in jump_operators(d):
        if rate == 0.0:
            continue
        Ld = L.conj().T
        LdL = Ld @ L
        S = S + rate * (_superop(L, Ld) - 0.5 * (_superop(LdL, I) + _superop(I, LdL)))
    return (_M @ S @ _MINV).real


def _enforce_trace_rows(A):
    # trace functional annihilates the generator: row_ee = -(row_22 + row_11)
    A[..., 0, :] = -(A[..., 1, :] + A[..., 2, :])
    return A


def real_liouvillian(p: AtomFieldParams, d: DecoherenceParams) -> np.ndarray:
    """9x9 real generator acting on the real coordinates of rho."""
    return _enforce_trace_rows(_real_generator(build_hamiltonian(p), d))


@dataclass(frozen=True)
class _AffineGenerator:
    """Generator split as L = L0 + omega_mu * L_omega + delta_mu * L_delta."""

    L0: np.ndarray
    L_omega: np.ndarray
    L_delta: np.ndarray

    @classmethod
    def build(cls, base: AtomFieldParams, d: DecoherenceParams):
        zero = DecoherenceParams(0.0, 0.0, 0.0, 0.0)
        L0 = real_liouvillian(base.with_mw(0.0, 0.0), d)
        Lw = real_liouvillian(AtomFieldParams(omega_mu_rabi=1.0), zero)
        Ld = real_liouvillian(AtomFieldParams(delta_mu=1.0), zero)
        return cls(L0, Lw, Ld)

    def __call__(self, omega_mu, delta_mu):
        omega_mu = np.asarray(omega_mu, dtype=float)[..., None, None]
        delta_mu = np.asarray(delta_mu, dtype=float)[..., None, None]
        return self.L0 + omega_mu * self.L_omega + delta_mu * self.L_delta


# --- drives -----------------------------------------------------------------


@dataclass(frozen=True)
class PiecewiseDrive:
    """Zero-order-hold microwave drive.

    Sample k holds (omega_mu[k], delta_mu[k]) on [k/fs, (k+1)/fs); the optical
    parameters come from ``base``.
    """

    base: AtomFieldParams
    omega_mu: np.ndarray
    delta_mu: np.ndarray
    sample_rate: float

    def __post_init__(self):
        w = np.asarray(self.omega_mu, dtype=float)
        dl = np.asarray(self.delta_mu, dtype=float)
        if w.shape != dl.shape or w.ndim != 1 or w.size == 0:
            raise ValueError("omega_mu and delta_mu must be equal-length 1-D arrays")
        if np.any(w < 0):
            raise ValueError("omega_mu must be non-negative")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "omega_mu", w)
        object.__setattr__(self, "delta_mu", dl)

    @property
    def duration(self) -> float:
        return self.omega_mu.size / self.sample_rate

    def __call__(self, t: float) -> AtomFieldParams:
        k = int(np.clip(np.floor(t * self.sample_rate), 0, self.omega_mu.size - 1))
        return self.base.with_mw(self.omega_mu[k], self.delta_mu[k])


Drive = Union[AtomFieldParams, PiecewiseDrive, Callable[[float], AtomFieldParams]]


def fastest_rate(p: AtomFieldParams, d: DecoherenceParams) -> float:
    """Largest rate the integrator step has to resolve (rad/s)."""
    return max(
        p.omega_opt_rabi, p.omega_mu_rabi, abs(p.delta_opt), abs(p.delta_mu), d.total
    )


def _drive_fastest_rate(drive, d, t_span):
    if isinstance(drive, AtomFieldParams):
        return fastest_rate(drive, d)
    if isinstance(drive, PiecewiseDrive):
        return max(
            drive.base.omega_opt_rabi,
            abs(drive.base.delta_opt),
            float(np.max(drive.omega_mu)),
            float(np.max(np.abs(drive.delta_mu))),
            d.total,
        )
    # generic callable: probe on a coarse grid
    ts = np.linspace(0.0, t_span, 65)
    return max(fastest_rate(drive(t), d) for t in ts)


def _step_size(rate, dt_max, t_span):
    if dt_max is not None:
        if dt_max <= 0:
            raise ValueError("dt_max must be positive")
        if dt_max * rate > STEP_RATE_BOUND:
            log.warning(
                "dt_max=%g does not resolve the fastest rate %g rad/s (dt*rate=%.3g > %g)",
                dt_max, rate, dt_max * rate, STEP_RATE_BOUND,
            )
        return float(dt_max)
    if rate == 0.0:
        return float(t_span)
    return DEFAULT_STEP_FRACTION / rate


# --- RK4 propagation ----------------------------------------------------------


def rk4_step_matrix(L, h):
    """Deviation D = P - I of one classic RK4 step for the linear system x' = L x.

    For an autonomous linear system RK4 is exactly P = I + A + A^2/2 + A^3/6 + A^4/24
    with A = h L. Works on stacks (..., 9, 9).
    """
    A = h[..., None, None] * L if np.ndim(h) else h * L
    A2 = A @ A
    D = A + A2 @ (0.5 * np.eye(9) + A / 6.0 + A2 / 24.0)
    return _enforce_trace_rows(D)


def _power_deviation(D, n):
    """Deviation of (I + D)**n, by binary exponentiation on the deviations.

    Carrying D instead of P keeps slow rates from being rounded against 1.
    ``n`` may be an int or an integer array broadcast against the stack.
    """
    n = np.asarray(n, dtype=np.int64)
    result = np.zeros_like(D)
    base = D.copy()
    while np.any(n > 0):
        odd = (n & 1).astype(bool)
        if np.any(odd):
            prod = result + base + result @ base
            if odd.ndim:
                result = np.where(odd[..., None, None], prod, result)
            else:
                result = prod
            _enforce_trace_rows(result)
        n = n >> 1
        if np.any(n > 0):
            base = _enforce_trace_rows(2.0 * base + base @ base)
    return result


def _propagators(L, interval, h_target):
    """Deviation of the RK4 propagator over ``interval`` with steps <= h_target."""
    interval = np.asarray(interval, dtype=float)
    n = np.maximum(1, np.ceil(interval / h_target - 1e-9)).astype(np.int64)
    h = interval / n
    with np.errstate(over="ignore", invalid="ignore"):
        return _power_deviation(rk4_step_matrix(L, h), n)


@dataclass(frozen=True)
class Evolution:
    """Density-matrix time series: ``rho[k]`` is the state at ``t[k]``."""

    t: np.ndarray
    rho: np.ndarray

    def population(self, level: int) -> np.ndarray:
        return self.rho[:, level, level].real


def check_states(rho, trace_tol=TRACE_TOL, pos_tol=POSITIVITY_TOL):
    """Raise if any state in the (..., 3, 3) stack breaks the density-matrix invariants."""
    rho = np.asarray(rho)
    tr = np.trace(rho, axis1=-2, axis2=-1)
    if not np.all(np.isfinite(rho)) or np.any(np.abs(tr - 1.0) > trace_tol):
        err = np.abs(tr - 1.0)
        drift = np.inf if not np.all(np.isfinite(rho)) else err.max()
        raise TraceDriftError(f"trace drift {drift:.3g} exceeds {trace_tol:g}; step size too large?")
    herm = np.max(np.abs(rho - np.conj(np.swapaxes(rho, -1, -2))))
    if herm > HERMITIAN_TOL:
        raise IntegrationError(f"Hermiticity defect {herm:.3g}")
    lam = np.linalg.eigvalsh(rho)[..., 0].min()
    if lam < pos_tol:
        raise PositivityError(f"minimum eigenvalue {lam:.3g} below {pos_tol:g}")


def evolve_interval(rho0, drive: Drive, d: DecoherenceParams, t_span: float,
                    dt_max: float | None = None, t_eval=None) -> Evolution:
    """Integrate the Lindblad equation over [0, t_span] with fixed-step RK4.

    ``drive`` is a constant AtomFieldParams, a PiecewiseDrive (zero-order hold;
    states are returned at every sample boundary) or any callable t -> AtomFieldParams.
    Without ``dt_max`` the step is DEFAULT_STEP_FRACTION / fastest_rate. An explicit
    ``dt_max`` is honoured as given; if it under-resolves the dynamics the state
    checks on the returned series raise TraceDriftError or PositivityError.
    """
    if not t_span > 0:
        raise ValueError("t_span must be positive")
    rho0 = np.asarray(rho0, dtype=complex)
    check_states(rho0)
    x0 = to_real(rho0)
    rate = _drive_fastest_rate(drive, d, t_span)
    h_target = _step_size(rate, dt_max, t_span)

    # an under-resolved explicit step can overflow; check_states reports it below
    with np.errstate(over="ignore", invalid="ignore"):
        if isinstance(drive, PiecewiseDrive):
            if t_eval is not None:
                raise ValueError("t_eval is fixed by the sample grid for piecewise drives")
            xs, t = _evolve_piecewise(x0, drive, d, t_span, h_target)
        else:
            t = np.linspace(0.0, t_span, 101) if t_eval is None else np.asarray(t_eval, dtype=float)
            if t[0] != 0.0:
                t = np.concatenate([[0.0], t])
            if np.any(np.diff(t) <= 0) or t[-1] > t_span * (1 + 1e-12):
                raise ValueError("t_eval must be increasing within [0, t_span]")
            if isinstance(drive, AtomFieldParams):
                xs = _evolve_constant(x0, real_liouvillian(drive, d), np.diff(t), h_target)
            else:
                xs = _evolve_callable(x0, drive, d, t, h_target)

    rho = from_real(xs)
    check_states(rho)
    return Evolution(t, rho)


def _evolve_constant(x0, L, intervals, h_target):
    xs = np.empty((intervals.size + 1, 9))
    xs[0] = x0
    uniq, inv = np.unique(intervals, return_inverse=True)
    Ds = _propagators(np.broadcast_to(L, uniq.shape + (9, 9)), uniq, h_target)
    x = x0
    for k, idx in enumerate(inv):
        x = x + Ds[idx] @ x
        xs[k + 1] = x
    return xs


def _evolve_piecewise(x0, drive: PiecewiseDrive, d, t_span, h_target, chunk=4096):
    fs = drive.sample_rate
    n_full = int(np.floor(t_span * fs * (1 + 1e-12)))
    n_full = min(n_full, drive.omega_mu.size)
    edges = np.arange(n_full + 1) / fs
    if edges[-1] < t_span * (1 - 1e-12) and n_full < drive.omega_mu.size:
        edges = np.append(edges, t_span)
    intervals = np.diff(edges)
    gen = _AffineGenerator.build(drive.base, d)
    xs = np.empty((edges.size, 9))
    xs[0] = x0
    x = x0
    for start in range(0, intervals.size, chunk):
        stop = min(start + chunk, intervals.size)
        L = gen(drive.omega_mu[start:stop], drive.delta_mu[start:stop])
        Ds = _propagators(L, intervals[start:stop], h_target)
        for k in range(stop - start):
            x = x + Ds[k] @ x
            xs[start + k + 1] = x
    return xs, edges


def _evolve_callable(x0, drive, d, t, h_target):
    xs = np.empty((t.size, 9))
    xs[0] = x0
    x = x0
    for k in range(t.size - 1):
        t0, t1 = t[k], t[k + 1]
        n = max(1, int(np.ceil((t1 - t0) / h_target - 1e-9)))
        h = (t1 - t0) / n
        for i in range(n):
            s = t0 + i * h
            L1 = real_liouvillian(drive(s), d)
            Lm = real_liouvillian(drive(s + h / 2), d)
            L2 = real_liouvillian(drive(s + h), d)
            k1 = L1 @ x
            k2 = Lm @ (x + 0.5 * h * k1)
            k3 = Lm @ (x + 0.5 * h * k2)
            k4 = L2 @ (x + h * k3)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        xs[k + 1] = x
    return xs


def pure_state(level: int) -> np.ndarray:
    rho = np.zeros((3, 3), dtype=complex)
    rho[level, level] = 1.0
    return rho


def maximally_mixed() -> np.ndarray:
    return np.eye(3, dtype=complex) / 3.0
