"""Measurement-interval optimization and protocol execution.

Three interval strategies over N evolution-and-measurement rounds:

* equal spacing -- one interval, fixed before the first round;
* analytic updates -- the closed-form optimum re-evaluated from the current
  polarization degree every L rounds;
* numeric updates -- the first peak of the single-round polarization gain,
  located by grid scan plus golden-section refinement, every L rounds.

The closed-form optimum 1/(g M sqrt(2 P (1-P))) is a second-order small-tau
estimate: it is detuning-independent and reliable only for large, warm baths.
The numeric search is the ground truth the estimate is judged against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .bath import (
    AnnihilationError,
    BathState,
    ModelParams,
    apply_round,
    coefficient_weights,
    entropy,
    polarization_degree,
    rabi_frequency,
    thermal_populations,
)

EPS_STOP = 1e-10
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class PolarizationSaturated(Exception):
    """The bath is fully polarized; no finite interval can improve it."""


class StrategyKind(Enum):
    EQUAL = "equal"
    UNEQUAL = "unequal"
    NUMERIC = "numeric"


@dataclass(frozen=True)
class Strategy:
    """Interval schedule: kind, update rate L, and numeric-search settings.

    ``update_every`` is the rate L: the interval is recomputed at rounds
    1, L+1, 2L+1, ...  Equal spacing behaves as L -> infinity.  ``seed`` picks
    how an equal-spacing interval is fixed: "analytic" (closed form at the
    thermal polarization) or "numeric" (peak search on the thermal state).
    """

    kind: StrategyKind
    update_every: int = 1
    seed: str = "analytic"
    window: float = 3.0
    grid_points: int = 2000
    rel_tol: float = 1e-6
    peak: str = "first"

    def __post_init__(self) -> None:
        if self.update_every < 1:
            raise ValueError("update_every must be >= 1")
        if self.seed not in ("analytic", "numeric"):
            raise ValueError(f"unknown seed {self.seed!r}")
        if self.peak not in ("first", "global"):
            raise ValueError(f"unknown peak mode {self.peak!r}")

    @classmethod
    def equal(cls, seed: str = "analytic", **kw) -> "Strategy":
        return cls(StrategyKind.EQUAL, seed=seed, **kw)

    @classmethod
    def unequal(cls, update_every: int = 1) -> "Strategy":
        return cls(StrategyKind.UNEQUAL, update_every=update_every)

    @classmethod
    def numeric(cls, update_every: int = 1, **kw) -> "Strategy":
        return cls(StrategyKind.NUMERIC, update_every=update_every, **kw)

    def describe(self) -> str:
        if self.kind is StrategyKind.EQUAL:
            return f"equal({self.seed})"
        return f"{self.kind.value}(L={self.update_every})"


@dataclass(frozen=True)
class RoundRecord:
    index: int
    tau: float
    polarization: float
    entropy: float
    round_prob: float
    cumulative_prob: float


@dataclass
class ProtocolTrace:
    """Per-round record of a protocol run plus the final bath state."""

    rounds: list[RoundRecord]
    params: ModelParams
    strategy: Strategy | None
    final_state: BathState
    stop_reason: str | None = None
    meta: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rounds)

    def polarizations(self) -> np.ndarray:
        return np.array([r.polarization for r in self.rounds])

    def entropies(self) -> np.ndarray:
        return np.array([r.entropy for r in self.rounds])

    def taus(self) -> np.ndarray:
        return np.array([r.tau for r in self.rounds])

    def cumulative_prob(self) -> float:
        return self.rounds[-1].cumulative_prob if self.rounds else 1.0

    def rounds_to_reach(self, target: float) -> int | None:
        for r in self.rounds:
            if r.polarization >= target:
                return r.index
        return None


def thermal_polarization_closed_form(M: int, beta_omega1: float) -> float:
    """Large-bath estimate 1 - 2x/(M(1-x)) of the thermal polarization degree.

    Valid when exp(-beta_omega1 * M) is negligible; otherwise it undershoots
    and can go negative.  Callers needing a safe seed should fall back to
    :func:`thermal_polarization_exact`.
    """
    if beta_omega1 <= 0:
        raise ValueError("beta_omega1 must be positive (x = 1 divides by zero)")
    x = math.exp(-beta_omega1)
    return 1.0 - 2.0 * x / (M * (1.0 - x))


def thermal_polarization_exact(M: int, beta_omega1: float) -> float:
    """Thermal polarization degree from the exact finite sum over levels."""
    params = ModelParams(M=M, delta=0.0, g=1.0, beta_omega1=beta_omega1)
    return polarization_degree(thermal_populations(params))


def tau_opt_analytic(g: float, M: int, P: float) -> float:
    """Closed-form interval estimate 1/(g M sqrt(2 (1-P) P)).

    Symmetric under P <-> 1-P and smallest at P = 1/2.
    """
    if not 0.0 < P < 1.0:
        raise ValueError(f"polarization degree must lie in (0, 1), got {P}")
    return 1.0 / (g * M * math.sqrt(2.0 * (1.0 - P) * P))


def tau_opt_iterative(current_polarization: float, g: float, M: int) -> float:
    """Interval update from the current polarization degree.

    Grows as the bath polarizes (further polarization gets harder).

    Raises
    ------
    PolarizationSaturated
        When 1 - P < 1e-10: the expression diverges and the protocol is done.
    """
    if current_polarization >= 1.0 - EPS_STOP:
        raise PolarizationSaturated(f"polarization {current_polarization} at saturation")
    if current_polarization <= 0.0:
        raise ValueError(f"polarization degree must be positive, got {current_polarization}")
    return tau_opt_analytic(g, M, current_polarization)


def _seed_polarization(params: ModelParams) -> float:
    """Thermal polarization for seeding the closed form: the large-bath
    estimate when it lands in (0, 1), else the exact finite sum."""
    if params.beta_omega1 > 0:
        closed = thermal_polarization_closed_form(params.M, params.beta_omega1)
        if 0.0 < closed < 1.0:
            return closed
    return thermal_polarization_exact(params.M, params.beta_omega1)


def _golden_max(f, a: float, b: float, rel_tol: float) -> float:
    """Golden-section maximizer on [a, b]; returns the midpoint of the final
    bracket (ties resolve toward the left edge via the >= test)."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > rel_tol * max(abs(a), abs(b)):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _search_window(current: float, params: ModelParams, window: float) -> float:
    """Upper end of the tau scan.

    Base span is ``window`` times the closed-form estimate at the current
    polarization (or window/(gM) when that estimate is unavailable), floored
    at the half period of the slowest ladder mode so late-stage optima stay
    reachable, and capped at four periods so the grid always resolves the
    objective's oscillation.
    """
    if 0.0 < current < 1.0:
        base = window * tau_opt_analytic(params.g, params.M, current)
    else:
        base = window / (params.g * params.M)
    slowest = rabi_frequency(1, params)
    return float(min(max(base, 1.05 * math.pi / slowest), 8.0 * math.pi / slowest))


def _pick_peak(obj: np.ndarray, mode: str) -> int:
    """Index of the first interior local maximum (or the global argmax)."""
    if mode == "first":
        falls = np.nonzero((obj[1:-1] >= obj[:-2]) & (obj[1:-1] > obj[2:]))[0]
        if falls.size:
            return int(falls[0] + 1)
    return int(np.argmax(obj))


def tau_opt_numeric(state: BathState, params: ModelParams, *, window: float = 3.0,
                    grid_points: int = 2000, rel_tol: float = 1e-6,
                    peak: str = "first") -> float:
    """Interval that maximizes the polarization degree after one round.

    A coarse grid over the search window locates the peak of the single-round
    polarization objective -- the first interior local maximum by default
    (``peak="global"`` takes the best grid point instead) -- and golden-section
    refinement narrows it to the requested relative tolerance.  Among equal
    grid maxima the smallest tau wins.

    Raises
    ------
    PolarizationSaturated
        If the state is already fully polarized or the objective is flat.
    """
    current = polarization_degree(state)
    if current >= 1.0 - EPS_STOP:
        raise PolarizationSaturated(f"polarization {current} at saturation")
    hi = _search_window(current, params, window)
    taus = np.linspace(hi / grid_points, hi, grid_points)

    m = np.arange(params.M + 1)
    omega = np.sqrt(params.delta**2 / 4 + 4 * params.g**2 * m * (params.M - m + 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        floor = np.where(omega > 0, params.delta**2 / (4 * omega**2), 1.0)
    phases = np.outer(taus, omega)
    weights = np.cos(phases) ** 2 + floor * np.sin(phases) ** 2
    scaled = weights * state.populations
    num = np.abs(scaled @ (params.M / 2 - m))
    den = scaled.sum(axis=1)
    obj = num / (params.M / 2 * den)
    if float(obj.max() - obj.min()) < 1e-15:
        raise PolarizationSaturated("flat single-round objective")

    i = _pick_peak(obj, peak)
    lo_b = taus[max(i - 1, 0)]
    hi_b = taus[min(i + 1, grid_points - 1)]

    def one_round_pol(tau: float) -> float:
        q = coefficient_weights(params, tau) * state.populations
        return abs(float(q @ (params.M / 2 - m))) / (params.M / 2 * float(q.sum()))

    return _golden_max(one_round_pol, lo_b, hi_b, rel_tol)


def _choose_tau(state: BathState, params: ModelParams, strategy: Strategy,
                round_index: int, held_tau: float | None) -> float:
    """Interval for the given round under the strategy's update pattern."""
    if strategy.kind is StrategyKind.EQUAL:
        if held_tau is not None:
            return held_tau
        if strategy.seed == "numeric":
            return tau_opt_numeric(state, params, window=strategy.window,
                                   grid_points=strategy.grid_points,
                                   rel_tol=strategy.rel_tol, peak=strategy.peak)
        return tau_opt_analytic(params.g, params.M, _seed_polarization(params))

    due = (round_index - 1) % strategy.update_every == 0
    if not due and held_tau is not None:
        return held_tau
    if strategy.kind is StrategyKind.UNEQUAL:
        if round_index == 1:
            return tau_opt_analytic(params.g, params.M, _seed_polarization(params))
        return tau_opt_iterative(polarization_degree(state), params.g, params.M)
    return tau_opt_numeric(state, params, window=strategy.window,
                           grid_points=strategy.grid_points,
                           rel_tol=strategy.rel_tol, peak=strategy.peak)


def run_schedule(params: ModelParams, taus) -> ProtocolTrace:
    """Execute an explicit interval sequence and record every round."""
    state = thermal_populations(params)
    records: list[RoundRecord] = []
    cumulative = 1.0
    reason = None
    for i, tau in enumerate(taus, start=1):
        try:
            state, prob = apply_round(state, float(tau), params)
        except AnnihilationError:
            reason = "annihilated"
            break
        cumulative *= prob
        records.append(RoundRecord(i, float(tau), polarization_degree(state),
                                   entropy(state), prob, cumulative))
    return ProtocolTrace(records, params, None, state, reason)


def run_protocol(params: ModelParams, strategy: Strategy, n_rounds: int) -> ProtocolTrace:
    """Run N rounds under a strategy, tracking polarization, entropy and the
    per-round and cumulative success probabilities.

    On saturation or annihilation the trace truncates at the failing round
    with the reason recorded in ``stop_reason``.
    """
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    state = thermal_populations(params)
    records: list[RoundRecord] = []
    cumulative = 1.0
    reason = None
    tau: float | None = None
    for i in range(1, n_rounds + 1):
        try:
            tau = _choose_tau(state, params, strategy, i, tau)
            state, prob = apply_round(state, tau, params)
        except PolarizationSaturated:
            reason = "saturated"
            break
        except AnnihilationError:
            reason = "annihilated"
            break
        cumulative *= prob
        records.append(RoundRecord(i, tau, polarization_degree(state),
                                   entropy(state), prob, cumulative))
    return ProtocolTrace(records, params, strategy, state, reason)


def sweep_tau(params: ModelParams, tau_grid) -> tuple[np.ndarray, np.ndarray]:
    """Single-round polarization degree over a grid of candidate intervals.

    Returns the grid and the polarization after one round at each tau,
    starting from the thermal state.  The curve rises to a peak near the
    optimal interval, drops sharply past it, then relaxes back toward the
    thermal value.
    """
    taus = np.asarray(tau_grid, dtype=float)
    if taus.ndim != 1 or len(taus) == 0:
        raise ValueError("tau_grid must be a non-empty 1-D array")
    if np.any(taus <= 0) or np.any(np.diff(taus) <= 0):
        raise ValueError("tau_grid must be positive and strictly increasing")
    state = thermal_populations(params)
    m = np.arange(params.M + 1)
    omega = np.sqrt(params.delta**2 / 4 + 4 * params.g**2 * m * (params.M - m + 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        floor = np.where(omega > 0, params.delta**2 / (4 * omega**2), 1.0)
    phases = np.outer(taus, omega)
    weights = np.cos(phases) ** 2 + floor * np.sin(phases) ** 2
    scaled = weights * state.populations
    pol = np.abs(scaled @ (params.M / 2 - m)) / (params.M / 2 * scaled.sum(axis=1))
    return taus, pol
