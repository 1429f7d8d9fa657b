"""Stochastic-stability certificates and stability-region boundaries.

A certificate is the expected Lyapunov contraction over one renewal cycle of
the closed loop.  With per-step contraction ``rho`` under computed inputs and
worst-case growth ``alpha`` under zero input, a cycle of length j contributes
``alpha * rho^(j-1)``, so each certificate is the series

    alpha * sum_j Pr{return time = j} * rho^(j-1)

over the matching first-return distribution.  A value below one certifies
stochastic stability (summable expected Lyapunov values along the whole
trajectory).  Three certificates are provided:

* ``omega`` - buffered controller, buffer-depletion renewals;
* ``theta`` - baseline controller, zero-availability renewals;
* ``upsilon`` - the worst-case criterion inherited from hidden-state
  analyses of the same loop, evaluated per conditioning level.

``omega`` and ``theta`` are evaluated in closed form: the series is the
resolvent identity ``alpha * (q00 + rho * exit (I - rho * avoid)^-1 enter)``,
computed by one small dense solve with a step of iterative refinement, never
by truncation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .aggregate import AggregateChain, build_aggregate
from .chain import ProcessorChain, uniform_chain
from .errors import GridOutOfRange, NotApplicable, SolverFailure

SOLVE_RESIDUAL_LIMIT = 1e-8
BOUNDARY_BISECTION_TOL = 1e-8


@dataclass(frozen=True)
class LyapunovRates:
    """Per-step Lyapunov rates: contraction under feedback, growth under zero input."""

    rho: float
    alpha: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if not self.alpha >= 0.0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")


@dataclass(frozen=True)
class Certificate:
    """Certificate value with verdict and trajectory-sum bound coefficient.

    ``bound_coefficient`` multiplies the initial Lyapunov level in the
    stability bound: sum_k E{phi1(|x(k)|)} < bound_coefficient * E{phi2(|x(0)|)}.
    It is finite exactly when the certificate is below one.
    ``truncation_error`` is a certified bound on the numerical error of
    ``value`` (solver residual effects; zero for closed-form evaluations).
    """

    value: float
    stable: bool
    bound_coefficient: float
    truncation_error: float


def _certificate(value: float, rates: LyapunovRates, truncation_error: float) -> Certificate:
    stable = value < 1.0
    beta = (1.0 + rates.alpha - rates.rho) / (1.0 - rates.rho)
    coeff = beta / (1.0 - value) if stable else math.inf
    return Certificate(value=value, stable=stable, bound_coefficient=coeff, truncation_error=truncation_error)


def _resolvent_term(exit_row: np.ndarray, avoid: np.ndarray, enter: np.ndarray, rho: float) -> tuple[float, float]:
    """exit . (I - rho*avoid)^-1 . enter, with a certified residual bound.

    One step of iterative refinement is applied; if the residual still
    exceeds ``SOLVE_RESIDUAL_LIMIT`` the solve is considered failed.  The
    returned error bound uses ||(I - rho*avoid)^-1||_inf <= 1/(1 - rho),
    valid because ``avoid`` is substochastic.
    """
    n = avoid.shape[0]
    a = np.eye(n) - rho * avoid
    try:
        y = np.linalg.solve(a, enter)
        residual = enter - a @ y
        y = y + np.linalg.solve(a, residual)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - structurally nonsingular
        raise SolverFailure(f"resolvent system is singular: {exc}") from exc
    residual = enter - a @ y
    res_norm = float(np.linalg.norm(residual, ord=np.inf))
    if res_norm > SOLVE_RESIDUAL_LIMIT:
        raise SolverFailure(f"resolvent residual {res_norm} exceeds {SOLVE_RESIDUAL_LIMIT}")
    return float(exit_row @ y), res_norm / (1.0 - rho)


def omega(agg: AggregateChain, rates: LyapunovRates) -> Certificate:
    """Certificate for the buffered controller over buffer-depletion cycles."""
    term, err = _resolvent_term(agg.theta, agg.p_bar, agg.mu, rates.rho)
    value = rates.alpha * (agg.q00 + rates.rho * term)
    return _certificate(value, rates, rates.alpha * rates.rho * err)


def theta(chain: ProcessorChain, rates: LyapunovRates) -> Certificate:
    """Certificate for the baseline controller over zero-availability cycles."""
    q = chain.q
    term, err = _resolvent_term(q[0, 1:], q[1:, 1:], q[1:, 0], rates.rho)
    value = rates.alpha * (float(q[0, 0]) + rates.rho * term)
    return _certificate(value, rates, rates.alpha * rates.rho * err)


def _upsilon_value(q00: float, exit_to_zero: float, rates: LyapunovRates, varsigma: int) -> float:
    """Worst-case criterion for one conditioning level (closed form)."""
    rho, alpha = rates.rho, rates.alpha
    geometric = q00 ** (varsigma - 2) * rho ** (varsigma - 1)
    inner = (alpha - rho) / (1.0 - q00 * alpha) * geometric + rho**2
    return exit_to_zero * (1.0 - q00) / (1.0 - q00 * rho) * inner + rho * (1.0 - exit_to_zero)


def upsilon_profile(chain: ProcessorChain, rates: LyapunovRates) -> np.ndarray:
    """Per-level values of the worst-case criterion, levels 2..capacity+1.

    Requires ``alpha * q00 < 1``; outside that hypothesis the criterion is
    undefined and :class:`NotApplicable` is raised.
    """
    q00 = float(chain.q[0, 0])
    if rates.alpha * q00 >= 1.0:
        raise NotApplicable(f"alpha * q00 = {rates.alpha * q00} >= 1; criterion hypothesis fails")
    return np.array(
        [
            _upsilon_value(q00, float(chain.q[s - 1, 0]), rates, s)
            for s in range(2, chain.capacity + 2)
        ]
    )


def upsilon(chain: ProcessorChain, rates: LyapunovRates) -> Certificate:
    """Worst-case certificate: maximum of the per-level criterion values."""
    value = float(upsilon_profile(chain, rates).max())
    return _certificate(value, rates, 0.0)


def upsilon_matrix_oracle(chain: ProcessorChain, rates: LyapunovRates, varsigma: int) -> float:
    """Un-condensed matrix form of the worst-case criterion (test oracle).

    Evaluates the criterion through its original resolvent expression over
    the rank-one matrix whose only nonzero row is the zero-availability row
    of the chain, instead of the algebraically condensed scalar form.
    """
    if not 2 <= varsigma <= chain.capacity + 1:
        raise ValueError(f"varsigma {varsigma} outside 2..{chain.capacity + 1}")
    rho, alpha = rates.rho, rates.alpha
    q = chain.q
    q00 = float(q[0, 0])
    if alpha * q00 >= 1.0:
        raise NotApplicable(f"alpha * q00 = {alpha * q00} >= 1; criterion hypothesis fails")
    n = chain.n_levels
    q_hat = np.zeros((n, n))
    q_hat[0] = q[0]
    p_bar = np.ones(n)
    p_bar[0] = 0.0
    selector = np.linalg.matrix_power(rho * q_hat, varsigma - 1)
    inner = rho * p_bar + (alpha - rho) * np.linalg.solve(np.eye(n) - alpha * q_hat, selector @ p_bar)
    return float(q[varsigma - 1] @ np.linalg.solve(np.eye(n) - rho * q_hat, inner))


@dataclass(frozen=True)
class RegionPoint:
    """One point of a stability-region boundary: the largest admissible growth rate.

    ``capped`` marks points where the worst-case criterion never reaches one
    on its admissible bracket, so the boundary is set by the hypothesis
    ``alpha < 1/q00`` instead.
    """

    rho: float
    alpha_star: float
    capped: bool = False


def _alpha_coefficient(exit_row: np.ndarray, avoid: np.ndarray, enter: np.ndarray, hold: float, rho: float) -> float:
    term, _ = _resolvent_term(exit_row, avoid, enter, rho)
    return hold + rho * term


def region_boundary(model: str, chain: ProcessorChain, rho_grid) -> list[RegionPoint]:
    """Boundary alpha*(rho) of the stability region certified by one model.

    For the renewal certificates the value is linear in alpha, so the
    boundary is the reciprocal of the alpha coefficient.  For the worst-case
    criterion the boundary is located by bisection over the hypothesis
    bracket (0, 1/q00); ties resolve toward the smaller alpha.
    """
    grid = [float(r) for r in rho_grid]
    if not grid:
        raise GridOutOfRange("rho grid is empty")
    bad = [r for r in grid if not 0.0 <= r < 1.0]
    if bad:
        raise GridOutOfRange(f"rho values outside [0, 1): {bad}")
    if model not in ("omega", "theta", "upsilon"):
        raise ValueError(f"unknown region model {model!r}")

    points: list[RegionPoint] = []
    if model in ("omega", "theta"):
        if model == "omega":
            agg = build_aggregate(chain)
            parts = (agg.theta, agg.p_bar, agg.mu, agg.q00)
        else:
            q = chain.q
            parts = (q[0, 1:], q[1:, 1:], q[1:, 0], float(q[0, 0]))
        for rho in grid:
            g = _alpha_coefficient(*parts[:3], parts[3], rho)
            points.append(RegionPoint(rho=rho, alpha_star=1.0 / g if g > 0.0 else math.inf))
        return points

    q00 = float(chain.q[0, 0])
    hi_cap = 1.0 / q00 if q00 > 0.0 else math.inf
    for rho in grid:
        def crosses(alpha: float) -> bool:
            rates = LyapunovRates(rho=rho, alpha=alpha)
            return bool(upsilon_profile(chain, rates).max() >= 1.0)

        lo = 1e-9
        hi = hi_cap - 1e-9 if math.isfinite(hi_cap) else 1e12
        if not crosses(hi):
            points.append(RegionPoint(rho=rho, alpha_star=hi_cap, capped=True))
            continue
        if crosses(lo):
            points.append(RegionPoint(rho=rho, alpha_star=lo))
            continue
        while hi - lo > BOUNDARY_BISECTION_TOL:
            mid = 0.5 * (lo + hi)
            if crosses(mid):
                hi = mid
            else:
                lo = mid
        points.append(RegionPoint(rho=rho, alpha_star=lo))
    return points


def f_bar(capacity: int, rho: float) -> float:
    """Normalized alpha coefficient of the buffered certificate on the uniform chain.

    Scaled so that the certificate equals ``alpha / (capacity + 1)`` times
    this value; equals one at ``rho = 0`` for every capacity.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    agg = build_aggregate(uniform_chain(capacity))
    term, _ = _resolvent_term(agg.theta, agg.p_bar, agg.mu, rho)
    return (capacity + 1) * (agg.q00 + rho * term)


@dataclass(frozen=True)
class ConservatismGap:
    """Comparison of the renewal-certificate region against the worst-case one."""

    theorem1_less_conservative: bool
    lhs: float
    rhs: float


def corollary15_gap(capacity: int, rho: float) -> ConservatismGap:
    """Check whether the renewal certificate admits a strictly larger region.

    On the uniform chain the worst-case boundary is ``capacity + 1 -
    capacity * rho``; the renewal certificate is less conservative exactly
    when that boundary times the normalized coefficient stays below
    ``capacity + 1``.  Equality holds at ``rho = 0``.
    """
    lhs = f_bar(capacity, rho) * (capacity + 1 - capacity * rho)
    rhs = float(capacity + 1)
    return ConservatismGap(theorem1_less_conservative=lhs < rhs, lhs=lhs, rhs=rhs)
