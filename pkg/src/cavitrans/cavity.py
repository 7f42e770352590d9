"""Microwave cavity: power -> Rabi calibration and single-mode Lorentzian filtering."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

from .lindblad import TWO_PI
from .modulation import CarrierTrajectory, check_sample_rate

# Rb-87 ground-state hyperfine splitting (Hz).
F_HYPERFINE = 6_834_682_610.904
# Rabi frequency at 0 dBm input, Omega/2pi in Hz, from the power calibration.
RABI_HZ_AT_0DBM = 58.6e3
DEFAULT_RABI_PER_SQRT_MW = TWO_PI * RABI_HZ_AT_0DBM


@dataclass(frozen=True)
class CavityParams:
    """TE011 cavity seen by the atoms.

    rabi_per_sqrt_mw is the microwave Rabi frequency (rad/s) produced by 1 mW of
    input power; the spatial field enhancement is folded into it.
    """

    f_resonance: float = 6.834682610e9
    quality_factor: float = 27_000.0
    rabi_per_sqrt_mw: float = DEFAULT_RABI_PER_SQRT_MW

    def __post_init__(self):
        if not (self.f_resonance > 0 and self.quality_factor > 0):
            raise ValueError("f_resonance and quality_factor must be positive")
        if not self.rabi_per_sqrt_mw > 0:
            raise ValueError("rabi_per_sqrt_mw must be positive")

    @property
    def linewidth(self) -> float:
        """Full linewidth kappa in rad/s."""
        return TWO_PI * self.f_resonance / self.quality_factor

    @property
    def atom_offset(self) -> float:
        """Atomic hyperfine frequency minus cavity resonance, rad/s."""
        return TWO_PI * (F_HYPERFINE - self.f_resonance)

    def with_(self, **kw) -> "CavityParams":
        return replace(self, **kw)


def input_power_to_rabi(p_dbm, c: CavityParams = CavityParams()):
    """Microwave Rabi frequency (rad/s) for an input power in dBm.

    With the default calibration this is 2*pi * 58.6 kHz * 10**(P/20).
    """
    p_dbm = np.asarray(p_dbm, dtype=float)
    if not np.all(np.isfinite(p_dbm)):
        raise ValueError("input power must be finite")
    scale = c.rabi_per_sqrt_mw / DEFAULT_RABI_PER_SQRT_MW
    out = TWO_PI * RABI_HZ_AT_0DBM * 10.0 ** (p_dbm / 20.0) * scale
    return float(out) if out.ndim == 0 else out


def rabi_to_input_power(omega, c: CavityParams = CavityParams()):
    """Inverse of input_power_to_rabi (dBm)."""
    scale = c.rabi_per_sqrt_mw / DEFAULT_RABI_PER_SQRT_MW
    return 20.0 * np.log10(np.asarray(omega) / (TWO_PI * RABI_HZ_AT_0DBM * scale))


def attenuate_dbm(p_dbm, link_loss_db):
    """Free-space link modelled as a flat power loss before the cavity."""
    if link_loss_db < 0:
        raise ValueError("link loss must be >= 0 dB")
    return p_dbm - link_loss_db


def lorentzian(delta, c: CavityParams):
    """Complex amplitude response 1 / (1 + 2i delta / kappa); delta in rad/s."""
    return 1.0 / (1.0 + 2j * np.asarray(delta, dtype=float) / c.linewidth)


def cavity_transfer(carrier: CarrierTrajectory, c: CavityParams) -> CarrierTrajectory:
    """Filter a carrier trajectory through the cavity mode.

    The Rabi envelope is run through the single-pole cavity response in the frame
    of the carrier's mean frequency (exact zero-order-hold discretisation). Frequency
    excursions are slow next to the cavity linewidth, so they only reweight the
    amplitude by |H| at the instantaneous offset from resonance; delta_mu itself is
    passed through unchanged.
    """
    fs = carrier.sample_rate
    check_sample_rate(carrier)
    half_kappa = c.linewidth / 2.0
    offset = c.atom_offset + carrier.delta_mu  # carrier minus cavity, rad/s
    d0 = float(np.mean(offset))

    w = carrier.omega_mu
    if np.all(w == w[0]):
        env = w.astype(complex)
    else:
        pole = -(half_kappa + 1j * d0)
        decay = np.exp(pole / fs)
        drive = half_kappa * (decay - 1.0) / pole
        # start on the steady state of the first sample, normalised to the static gain
        h0 = half_kappa / (half_kappa + 1j * d0)
        env = lfilter([0.0, drive], [1.0, -decay], w.astype(complex), zi=[h0 * w[0]])[0]
        env = env / h0

    gain = np.abs(lorentzian(offset, c))
    out = np.abs(env) * gain
    return replace(carrier, omega_mu=out)
