"""Closed-form predictions for the polarisation protocol.

Everything here is derived from the first-order average Hamiltonian of the
4 tau bracket: per-spin flip-flop rates and detunings, the transfer
probability and its ceiling, side-dip locations, the dark/bright
decomposition of a spin pair, and the three-level algebra behind the
spin-blockade shift of a resonance.

All frequencies are rad/us and all times us, as everywhere else.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import atan2, cos, hypot, pi, sin, sqrt
from typing import NamedTuple

import numpy as np

from .errors import DegenerateSpins, ValidationError, ZeroCoupling
from .protocols import ModulationFunctions
from .spins import NuclearSpin, precession_frequency

#: Two spins within this distance in precession frequency (rad/us) cannot be
#: told apart by the blockade-shift formula; its denominator blows up.
DEGENERACY_TOL = 1e-4


@dataclass(frozen=True)
class EffectiveSpinParams:
    """Per-spin knobs of the average Hamiltonian at a given period.

    Attributes
    ----------
    label : str
        Nucleus label, carried through for reporting.
    omega_i : float
        Dressed precession frequency of the nucleus.
    period : float
        Protocol period T the parameters refer to.
    harmonic : int
        Harmonic index k of the resonance being addressed.
    detuning : float
        omega_i - 2 pi k / T; zero exactly on resonance.
    g : float
        Effective flip-flop rate (half the coupling matrix element).
    chi : float
        Phase of the flip-flop matrix element.
    """

    label: str
    omega_i: float
    period: float
    harmonic: int
    detuning: float
    g: float
    chi: float

    @property
    def resonant_period(self) -> float:
        """Period putting this spin exactly on its k-th harmonic."""
        return 2.0 * pi * self.harmonic / self.omega_i


def effective_params(
    spin: NuclearSpin, larmor: float, period: float, harmonic: int = 3
) -> EffectiveSpinParams:
    """Evaluate the average-Hamiltonian parameters of one spin.

    The flip-flop matrix element at harmonic k is assembled from the
    modulation-function Fourier coefficients,

        c = (A_perp / 8) [(a1 - b2) - i (b1 + a2)],   g = |c|,

    which vanishes at even k and at k = 1 mod 4 (those harmonics drive the
    double-quantum transition instead); a warning is emitted in that case.
    """
    if not period > 0:
        raise ValidationError(f"period: must be > 0, got {period}")
    omega_i = precession_frequency(spin, larmor)
    coeff = ModulationFunctions.fourier(harmonic)
    re = coeff.a1 - coeff.b2
    im = -(coeff.b1 + coeff.a2)
    amp = hypot(re, im)
    if amp < 1e-12:  # the k = 1 mod 4 family cancels only to rounding
        amp = 0.0
    g = (spin.a_perp / 8.0) * amp
    chi = atan2(im, re) if g > 0 else 0.0
    if g == 0.0:
        warnings.warn(
            f"harmonic k = {harmonic} gives zero flip-flop rate for {spin.label}"
            " (even harmonics and k = 1 mod 4 do not drive the flip-flop)",
            ZeroCoupling,
            stacklevel=2,
        )
    return EffectiveSpinParams(
        label=spin.label,
        omega_i=omega_i,
        period=period,
        harmonic=harmonic,
        detuning=omega_i - 2.0 * pi * harmonic / period,
        g=g,
        chi=chi,
    )


def single_spin_polarisation(params: EffectiveSpinParams, n_periods: int) -> float:
    """Transfer probability after one burst of n_periods periods.

        P = (2g / Omega_r)^2 sin^2(Omega_r n_periods T / 2),
        Omega_r = sqrt(detuning^2 + 4 g^2).
    """
    if n_periods < 1:
        raise ValidationError(f"n_periods: must be >= 1, got {n_periods}")
    t = n_periods * params.period
    omega_r = hypot(params.detuning, 2.0 * params.g)
    if omega_r == 0.0:
        return 0.0
    return (2.0 * params.g / omega_r) ** 2 * sin(omega_r * t / 2.0) ** 2


def polarisation_ceiling(params: EffectiveSpinParams) -> float:
    """Envelope of the transfer probability over all pulse counts.

    Equals 1 / (1 + (detuning / 2g)^2); zero when the coupling vanishes.
    """
    if params.g == 0.0:
        return 0.0
    omega_r_sq = params.detuning**2 + 4.0 * params.g**2
    return 4.0 * params.g**2 / omega_r_sq


def optimal_pulse_count(params: EffectiveSpinParams) -> int:
    """Number of periods per burst maximising the transfer probability.

    The probability peaks when Omega_r n T / 2 = pi / 2, so the best
    integer burst length is the nearest integer to pi / (Omega_r T).
    """
    omega_r = hypot(params.detuning, 2.0 * params.g)
    if omega_r == 0.0:
        raise ValidationError("cannot optimise a burst with zero coupling and detuning")
    return max(1, round(pi / (omega_r * params.period)))


class SideDip(NamedTuple):
    """One pair of finite-burst satellite dips flanking the main resonance."""

    order: int
    lower: float
    upper: float


def side_dips(
    params: EffectiveSpinParams, n_periods: int, orders: tuple[int, ...] = (1, 2, 3)
) -> tuple[SideDip, ...]:
    """Periods of the satellite dips of a burst of n_periods periods.

    The transfer of a finite burst vanishes where Omega_r n_periods T
    equals a multiple of 2 pi; solving that condition for the period gives

        T = T_r (1 +- (n / (k N_p)) sqrt(1 - mu^2 (k^2 N_p^2 / n^2 - 1)))
            / (1 + mu^2),        mu = 2 g / omega_i.

    Orders whose square root turns negative (dips swallowed by the
    resonance linewidth) are omitted from the result.
    """
    if n_periods < 1:
        raise ValidationError(f"n_periods: must be >= 1, got {n_periods}")
    k = params.harmonic
    t_r = params.resonant_period
    mu_sq = (2.0 * params.g / params.omega_i) ** 2
    out = []
    for n in orders:
        if n < 1:
            raise ValidationError(f"orders: must be >= 1, got {n}")
        disc = 1.0 - mu_sq * ((k * n_periods / n) ** 2 - 1.0)
        if disc <= 0.0:
            continue
        r = (n / (k * n_periods)) * sqrt(disc)
        out.append(
            SideDip(
                order=n,
                lower=t_r * (1.0 - r) / (1.0 + mu_sq),
                upper=t_r * (1.0 + r) / (1.0 + mu_sq),
            )
        )
    return tuple(out)


@dataclass(frozen=True)
class DarkBrightDecomposition:
    """Collective-mode picture of two spins sharing one resonance.

    The electron couples only to the bright combination
    cos(phi) |1> + sin(phi) |2| with tan(phi) = g2 / g1; the orthogonal
    dark mode decouples entirely. The bright mode behaves like a single
    spin of coupling g_rms at the common detuning.
    """

    phi: float
    theta: float
    g_rms: float
    detuning: float
    bright_ceiling: float
    transfer_ceiling: float


def dark_bright(
    p1: EffectiveSpinParams, p2: EffectiveSpinParams
) -> DarkBrightDecomposition:
    """Decompose a spin pair addressed at the same period into collective modes.

    bright_ceiling = cos^2(phi) is the fraction of a shared excitation that
    lives in the bright mode when starting from spin 1; the transfer
    ceiling multiplies that by the bright mode's own detuning envelope
    sin^2(theta), tan(theta) = 2 g_rms / detuning.
    """
    if abs(p1.period - p2.period) > 1e-12 or p1.harmonic != p2.harmonic:
        raise ValidationError(
            "dark/bright decomposition needs both spins at the same period and harmonic"
        )
    g_rms = hypot(p1.g, p2.g)
    if g_rms == 0.0:
        raise ValidationError("both couplings vanish; no bright mode exists")
    phi = atan2(p2.g, p1.g)
    detuning = 0.5 * (p1.detuning + p2.detuning)
    theta = atan2(2.0 * g_rms, detuning)
    sin_theta_sq = (2.0 * g_rms) ** 2 / (detuning**2 + 4.0 * g_rms**2)
    bright = cos(phi) ** 2
    return DarkBrightDecomposition(
        phi=phi,
        theta=theta,
        g_rms=g_rms,
        detuning=detuning,
        bright_ceiling=bright,
        transfer_ceiling=bright * sin_theta_sq,
    )


@dataclass(frozen=True)
class BlockadePair:
    """A strongly coupled blockade spin shadowing a weaker target spin.

    delta_minus is the precession-frequency split omega_B - omega_target;
    theta_p the mixing angle of the electron-blockade doublet at the
    target's resonance, theta_p = atan2(2 G, delta_minus) in (0, pi).
    """

    strong: EffectiveSpinParams
    weak: EffectiveSpinParams
    delta_minus: float
    theta_p: float


def blockade_pair(
    strong: EffectiveSpinParams, weak: EffectiveSpinParams
) -> BlockadePair:
    """Pair up a blockade spin with the target it detunes.

    Both parameter sets must refer to the same period; the natural choice
    is the target's resonant period, where the target detuning vanishes.
    """
    if abs(strong.period - weak.period) > 1e-12 or strong.harmonic != weak.harmonic:
        raise ValidationError("blockade pair needs a common period and harmonic")
    delta_minus = strong.omega_i - weak.omega_i
    if abs(delta_minus) < DEGENERACY_TOL:
        raise DegenerateSpins(
            f"{strong.label} and {weak.label} differ by {delta_minus:.2e} rad/us; "
            "the blockade shift diverges for coinciding precession frequencies"
        )
    theta_p = atan2(2.0 * strong.g, strong.detuning)
    return BlockadePair(
        strong=strong, weak=weak, delta_minus=delta_minus, theta_p=theta_p
    )


def blockade_rabi(pair: BlockadePair) -> float:
    """Attenuated flip-flop rate of the target under the blockade.

    The electron transition the target rides along is shared with the
    blockade doublet; its amplitude shrinks to 2 g sin(theta_p / 2).
    """
    return 2.0 * pair.weak.g * sin(pair.theta_p / 2.0)


class BlockadeShift(NamedTuple):
    """Displaced resonance of a target spin under a blockade spin."""

    ratio: float
    shifted_period: float
    base_period: float


def blockade_shift(
    strong_spin: NuclearSpin,
    weak_spin: NuclearSpin,
    larmor: float,
    harmonic: int = 3,
) -> BlockadeShift:
    """Relative displacement of the target resonance caused by the blockade.

        ratio = -G^2 / (omega_target delta_minus),

    with G the blockade spin's flip-flop rate and delta_minus the
    precession split. The sign follows the split: a blockade spin above
    the target in frequency pushes the dip to shorter periods.
    """
    omega_s = precession_frequency(weak_spin, larmor)
    omega_b = precession_frequency(strong_spin, larmor)
    delta_minus = omega_b - omega_s
    if abs(delta_minus) < DEGENERACY_TOL:
        raise DegenerateSpins(
            f"{strong_spin.label} and {weak_spin.label} differ by {delta_minus:.2e} "
            "rad/us; the blockade shift diverges for coinciding precession frequencies"
        )
    base_period = 2.0 * pi * harmonic / omega_s
    strong = effective_params(strong_spin, larmor, base_period, harmonic)
    ratio = -(strong.g**2) / (omega_s * delta_minus)
    return BlockadeShift(
        ratio=ratio,
        shifted_period=base_period * (1.0 + ratio),
        base_period=base_period,
    )


class ThreeLevelSystem(NamedTuple):
    """Exact and zeroth-order spectra of the single-flip blockade manifold."""

    hamiltonian: np.ndarray
    exact: np.ndarray
    unperturbed: np.ndarray


def three_level_eigensystem(pair: BlockadePair) -> ThreeLevelSystem:
    """Diagonalise the three-state manifold {electron flip, blockade flip, target flip}.

    In the frame of the drive the manifold Hamiltonian is

        [ -dm/2   G     0   ]
        [  G      dp/2  g   ]      dm = delta_B - delta_t,  dp = delta_B + delta_t,
        [  0      g     dm/2]

    with G, g the blockade and target flip-flop rates. ``unperturbed``
    holds the g = 0 spectrum {(delta_t - w)/2, (delta_t + w)/2, dm/2},
    w = sqrt(delta_B^2 + 4 G^2); the target line anticrosses the dressed
    doublet where the exact and unperturbed branches pull apart.
    """
    delta_b = pair.strong.detuning
    delta_t = pair.weak.detuning
    big_g = pair.strong.g
    small_g = pair.weak.g
    dm = delta_b - delta_t
    dp = delta_b + delta_t
    h = np.array(
        [
            [-dm / 2.0, big_g, 0.0],
            [big_g, dp / 2.0, small_g],
            [0.0, small_g, dm / 2.0],
        ]
    )
    exact = np.linalg.eigvalsh(h)
    w = hypot(delta_b, 2.0 * big_g)
    unperturbed = np.sort(
        np.array([(delta_t - w) / 2.0, (delta_t + w) / 2.0, dm / 2.0])
    )
    return ThreeLevelSystem(hamiltonian=h, exact=exact, unperturbed=unperturbed)


def shifted_crossing_frequency(
    strong_spin: NuclearSpin, weak_spin: NuclearSpin, larmor: float, harmonic: int = 3
) -> float:
    """Exact drive frequency at which the blockaded target line crosses.

    Setting g = 0, two levels of the three-state manifold become exactly
    degenerate when G^2 = -delta_t delta_minus, i.e. at drive frequency
    omega_target + G^2 / delta_minus: the observable dip sits there, not
    at the bare target frequency.
    """
    omega_s = precession_frequency(weak_spin, larmor)
    omega_b = precession_frequency(strong_spin, larmor)
    delta_minus = omega_b - omega_s
    if abs(delta_minus) < DEGENERACY_TOL:
        raise DegenerateSpins(
            f"{strong_spin.label} and {weak_spin.label} differ by {delta_minus:.2e} "
            "rad/us; the crossing condition degenerates"
        )
    base_period = 2.0 * pi * harmonic / omega_s
    strong = effective_params(strong_spin, larmor, base_period, harmonic)
    return omega_s + strong.g**2 / delta_minus
