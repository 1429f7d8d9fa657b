"""Shared test utilities: fuzz generators and independent oracles.

The oracles here deliberately take different computational routes than the
library: truncated series instead of resolvent solves, and a direct
buffer-length-recursion construction of the joint chain instead of the
case-by-case transition table.
"""

from __future__ import annotations

import numpy as np
from scipy import stats

from anyctrl.aggregate import build_aggregate, delta_pmf, tau_pmf
from anyctrl.certify import LyapunovRates
from anyctrl.chain import ProcessorChain, validate_chain


def random_chain(rng: np.random.Generator, capacity: int) -> ProcessorChain:
    """Random dense row-stochastic chain (strictly positive entries)."""
    raw = rng.random((capacity + 1, capacity + 1)) + 1e-3
    raw /= raw.sum(axis=1, keepdims=True)
    return validate_chain(raw, capacity)


def rederive_aggregate_matrix(chain: ProcessorChain) -> np.ndarray:
    """Joint-chain transition matrix straight from the buffer-length recursion.

    For each joint state (availability, effective length) and each next
    availability level, the next effective length follows the recursion
    (fresh count if positive, else previous length minus one floored at
    zero); the probability of the move is the availability transition
    probability.  This is an independent re-derivation of the transition
    table the library builds explicitly.
    """
    cap = chain.capacity
    if cap == 1:
        states = [(0, 0), (1, 1)]
    else:
        states = [(i, i) for i in range(cap + 1)] + [(0, j) for j in range(1, cap)]
    index = {s: i for i, s in enumerate(states)}
    p = np.zeros((len(states), len(states)))
    for (avail, lam), row in index.items():
        for nxt in range(cap + 1):
            lam_next = nxt if nxt >= 1 else max(lam - 1, 0)
            p[row, index[(nxt, lam_next)]] += chain.q[avail, nxt]
    return p


def series_omega(chain: ProcessorChain, rates: LyapunovRates, j_max: int = 500) -> float:
    """Truncated-series evaluation of the buffered-controller certificate."""
    pmf = delta_pmf(build_aggregate(chain), j_max)
    powers = rates.rho ** np.arange(pmf.j_max)
    return rates.alpha * float(pmf.mass @ powers)


def series_theta(chain: ProcessorChain, rates: LyapunovRates, j_max: int = 500) -> float:
    """Truncated-series evaluation of the baseline-controller certificate."""
    pmf = tau_pmf(chain, j_max)
    powers = rates.rho ** np.arange(pmf.j_max)
    return rates.alpha * float(pmf.mass @ powers)


def chi_square_pvalue(observed: np.ndarray, expected: np.ndarray) -> float:
    """p-value of a Pearson chi-square test with matched totals."""
    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(expected, dtype=float)
    statistic = float(((observed - expected) ** 2 / expected).sum())
    return float(stats.chi2.sf(statistic, df=len(observed) - 1))


def pmf_chi_square_pvalue(empirical, analytic, n_samples: int, bins: int = 12) -> float:
    """Chi-square p-value of empirical return-time counts against an analytic pmf.

    Bins return times 1..bins individually and lumps everything beyond into
    one overflow bin whose expected mass is the analytic tail.
    """
    obs = np.zeros(bins + 1)
    for j in range(1, empirical.j_max + 1):
        target = j - 1 if j <= bins else bins
        obs[target] += empirical.prob(j) * n_samples
    exp = np.zeros(bins + 1)
    for j in range(1, bins + 1):
        exp[j - 1] = analytic.prob(j) * n_samples
    exp[bins] = (1.0 - sum(analytic.prob(j) for j in range(1, bins + 1))) * n_samples
    return chi_square_pvalue(np.round(obs), exp)
