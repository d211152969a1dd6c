"""Closed-form machinery for a spin bath in the collective (Dicke) subspace.

A central spin-1/2 couples uniformly to M bath spins-1/2.  Restricted to the
maximal angular-momentum sector, the bath lives on a ladder of M+1 levels
labelled by the excitation number m (m = 0 is fully polarized).  Repeated
ground-state measurements on the central spin act diagonally on this ladder:
each round rescales the level populations by |alpha_m(tau)|^2 and renormalizes
by the round's success probability.

All frequencies are in units of the central-spin frequency; all times in its
inverse.  Operations here are pure functions and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

MIN_ROUND_PROBABILITY = 1e-300
NORM_TOL = 1e-12


class Interaction(Enum):
    """Central-bath coupling type."""

    XY = "xy"    # flip-flop exchange only
    XX = "xx"    # adds counter-rotating terms (lab frame)
    XYZ = "xyz"  # adds a longitudinal coupling


class AnnihilationError(RuntimeError):
    """Raised when a measurement round retains numerically no population."""


@dataclass(frozen=True)
class ModelParams:
    """Dimensionless configuration of the spin-star model.

    Parameters
    ----------
    M : int
        Number of bath spins (>= 1).
    delta : float
        Detuning between central and bath spins, in units of the central
        frequency.
    g : float
        Uniform coupling strength, same units (> 0).
    beta_omega1 : float
        Dimensionless thermal parameter of the bath, hbar*omega1/(kB*T) (>= 0).
    interaction : Interaction
        Coupling type; the closed-form ladder treatment applies to XY.
    """

    M: int
    delta: float
    g: float
    beta_omega1: float
    interaction: Interaction = Interaction.XY

    def __post_init__(self) -> None:
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if self.g <= 0:
            raise ValueError(f"g must be positive, got {self.g}")
        if self.beta_omega1 < 0:
            raise ValueError(f"beta_omega1 must be >= 0, got {self.beta_omega1}")


@dataclass
class BathState:
    """Diagonal bath state: populations over ladder levels m = 0..M."""

    populations: np.ndarray

    def __post_init__(self) -> None:
        self.populations = np.asarray(self.populations, dtype=float)
        if self.populations.ndim != 1 or len(self.populations) < 2:
            raise ValueError("populations must be a 1-D vector over m = 0..M")
        if np.any(self.populations < -NORM_TOL):
            raise ValueError("negative population")
        total = self.populations.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"populations must sum to 1, got {total}")

    @property
    def M(self) -> int:
        return len(self.populations) - 1

    def copy(self) -> "BathState":
        return BathState(self.populations.copy())


@dataclass(frozen=True)
class PolarizationProfile:
    """Per-level survival factors |alpha_m(tau)|^(2N) after N equal rounds."""

    values: np.ndarray
    tau: float
    n_rounds: int


def thermal_populations(params: ModelParams) -> BathState:
    """Thermal bath state: populations proportional to exp(-beta_omega1 * m).

    The m-independent Boltzmann prefactor cancels in the normalization and is
    dropped, which keeps the weights in [0, 1] for any M * beta_omega1.
    beta_omega1 = 0 gives the uniform (infinite-temperature) distribution.
    """
    weights = np.exp(-params.beta_omega1 * np.arange(params.M + 1))
    return BathState(weights / weights.sum())


def rabi_frequency(m: int, params: ModelParams) -> float:
    """Effective flip frequency of ladder level m under one exchange cycle.

    Returns sqrt(delta^2/4 + 4 g^2 m (M - m + 1)); level m = 0 gives |delta|/2.
    """
    if not 0 <= m <= params.M:
        raise ValueError(f"m must be in [0, {params.M}], got {m}")
    return float(np.sqrt(params.delta**2 / 4 + 4 * params.g**2 * m * (params.M - m + 1)))


def resonant_rabi_frequency(m: int, params: ModelParams) -> float:
    """Zero-detuning flip frequency 2 g sqrt(m (M - m + 1)) of level m."""
    if not 0 <= m <= params.M:
        raise ValueError(f"m must be in [0, {params.M}], got {m}")
    return float(2 * params.g * np.sqrt(m * (params.M - m + 1)))


def rabi_frequencies(params: ModelParams) -> np.ndarray:
    """Vector of rabi_frequency(m) for m = 0..M."""
    m = np.arange(params.M + 1)
    return np.sqrt(params.delta**2 / 4 + 4 * params.g**2 * m * (params.M - m + 1))


def polarization_coefficient(m: int, tau: float, params: ModelParams) -> complex:
    """Survival amplitude of level m under one conditioned evolution of length tau.

    alpha_m(tau) = cos(Omega_m tau) + i delta sin(Omega_m tau) / (2 Omega_m),
    with |alpha_m| <= 1 and |alpha_0| = 1.  The degenerate point Omega_m = 0
    (delta = 0, m = 0) returns 1 by continuity.
    """
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    omega = rabi_frequency(m, params)
    if omega == 0.0:
        return 1.0 + 0.0j
    return complex(np.cos(omega * tau), params.delta * np.sin(omega * tau) / (2 * omega))


def coefficient_weights(params: ModelParams, tau: float) -> np.ndarray:
    """|alpha_m(tau)|^2 for all m at once.

    These are the per-round population reduction factors; protected levels
    (Omega_m tau at a multiple of pi, or m = 0) have weight 1.
    """
    omega = rabi_frequencies(params)
    omega2 = omega * omega
    cos2 = np.cos(omega * tau) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        floor = np.where(omega2 > 0, params.delta**2 / (4 * omega2), 1.0)
    weights = cos2 + floor * np.sin(omega * tau) ** 2
    weights[omega2 == 0] = 1.0
    return np.minimum(weights, 1.0)


def coefficient_profile(params: ModelParams, tau: float, n_rounds: int) -> PolarizationProfile:
    """Survival profile |alpha_m(tau)|^(2N) over m after N equal-interval rounds."""
    if n_rounds < 1:
        raise ValueError(f"n_rounds must be >= 1, got {n_rounds}")
    return PolarizationProfile(coefficient_weights(params, tau) ** n_rounds, tau, n_rounds)


def apply_round(state: BathState, tau: float, params: ModelParams) -> tuple[BathState, float]:
    """One evolution-and-measurement round conditioned on the ground outcome.

    Populations are rescaled by |alpha_m(tau)|^2 and renormalized by the round
    success probability P, which is returned alongside the new state.  The
    ground-level share p_0 never decreases.

    Raises
    ------
    AnnihilationError
        If P falls below 1e-300; the chosen tau wiped out the whole state and
        the round must be treated as invalid.
    """
    weights = coefficient_weights(params, tau)
    raw = weights * state.populations
    prob = float(raw.sum())
    if prob < MIN_ROUND_PROBABILITY:
        raise AnnihilationError(f"round probability {prob} below {MIN_ROUND_PROBABILITY}")
    new = np.clip(raw / prob, 0.0, None)
    drift = new.sum() - 1.0
    if abs(drift) > NORM_TOL:
        new = new / new.sum()
    out = BathState.__new__(BathState)  # populations already validated
    out.populations = new
    return out, prob


def polarization_degree(state: BathState) -> float:
    """Normalized mean bath magnetization, 0 (maximally mixed) to 1 (polarized)."""
    m = np.arange(state.M + 1)
    return abs(float(np.sum(state.populations * (state.M / 2 - m)))) / (state.M / 2)


def entropy(state: BathState) -> float:
    """Shannon/von Neumann entropy of the level populations (0 ln 0 = 0)."""
    p = state.populations[state.populations > 0]
    return float(-np.sum(p * np.log(p)))
