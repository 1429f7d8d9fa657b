"""Processor-availability Markov chain: validation, construction, sampling.

The availability level at step k is the number of tentative control inputs
the processor manages to compute during that step.  It takes values in
{0, .., capacity} and evolves as a homogeneous Markov chain with a
row-stochastic transition matrix that must be irreducible and aperiodic.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CapacityTooSmall,
    DimensionMismatch,
    NegativeEntry,
    NonStochasticRow,
    Periodic,
    Reducible,
)

# Row sums may deviate by this much on input (user-entered decimals are
# inexact in binary); rows are renormalized afterwards.
ROW_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class ProcessorChain:
    """Validated availability chain over levels 0..capacity.

    ``q[i, j]`` is the probability that the next availability level is j
    given the current level i.  Instances are immutable; construct them
    through :func:`validate_chain` or :func:`uniform_chain`.
    """

    capacity: int
    q: np.ndarray
    row_cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        cdf = np.cumsum(self.q, axis=1)
        self.q.setflags(write=False)
        cdf.setflags(write=False)
        object.__setattr__(self, "row_cdf", cdf)

    @property
    def n_levels(self) -> int:
        return self.capacity + 1

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProcessorChain):
            return NotImplemented
        return self.capacity == other.capacity and np.array_equal(self.q, other.q)

    __hash__ = None  # type: ignore[assignment]


def _reachable(adjacency: np.ndarray, start: int) -> np.ndarray:
    n = adjacency.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[start] = True
    frontier = deque([start])
    while frontier:
        u = frontier.popleft()
        for v in np.flatnonzero(adjacency[u]):
            if not seen[v]:
                seen[v] = True
                frontier.append(int(v))
    return seen


def _period(adjacency: np.ndarray) -> int:
    """Period of a strongly connected digraph via BFS-distance gcd."""
    n = adjacency.shape[0]
    dist = np.full(n, -1, dtype=int)
    dist[0] = 0
    frontier = deque([0])
    while frontier:
        u = frontier.popleft()
        for v in np.flatnonzero(adjacency[u]):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                frontier.append(int(v))
    g = 0
    for u in range(n):
        for v in np.flatnonzero(adjacency[u]):
            g = math.gcd(g, dist[u] + 1 - dist[v])
    return g


def validate_chain(q, capacity: int) -> ProcessorChain:
    """Validate a transition matrix and wrap it as a ProcessorChain.

    Checks shape, nonnegativity, row sums (tolerance ``ROW_SUM_TOLERANCE``,
    then renormalizes each row to sum to one), irreducibility (strong
    connectivity of the positive-entry digraph), and aperiodicity.  The
    aperiodicity test short-circuits when the chain can hold at level 0;
    otherwise the exact period is computed from BFS distances.
    """
    if capacity < 1:
        raise CapacityTooSmall(f"capacity must be >= 1, got {capacity}")
    arr = np.asarray(q, dtype=float)
    expected = (capacity + 1, capacity + 1)
    if arr.ndim != 2 or arr.shape != expected:
        raise DimensionMismatch(f"expected a {expected[0]}x{expected[1]} matrix, got shape {arr.shape}")
    if np.any(arr < 0.0):
        i, j = np.argwhere(arr < 0.0)[0]
        raise NegativeEntry(f"q[{i}][{j}] = {arr[i, j]} is negative")
    sums = arr.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOLERANCE)
    if bad.size:
        i = int(bad[0])
        raise NonStochasticRow(f"row {i} sums to {sums[i]!r}, expected 1 within {ROW_SUM_TOLERANCE}")
    arr = arr / sums[:, None]

    adjacency = arr > 0.0
    fwd = _reachable(adjacency, 0)
    back = _reachable(adjacency.T, 0)
    if not (fwd.all() and back.all()):
        missing = np.flatnonzero(~(fwd & back))
        raise Reducible(f"levels {missing.tolist()} do not communicate with level 0")
    if arr[0, 0] <= 0.0:
        period = _period(adjacency)
        if period != 1:
            raise Periodic(f"chain has period {period}")
    return ProcessorChain(capacity=capacity, q=arr)


def uniform_chain(capacity: int) -> ProcessorChain:
    """Chain in which every transition has probability 1/(capacity+1)."""
    n = capacity + 1
    return validate_chain(np.full((n, n), 1.0 / n), capacity)


def sample_next(chain: ProcessorChain, current: int, r: float) -> int:
    """Inverse-CDF draw of the next availability level.

    Returns the level j whose cumulative row band contains r, i.e.
    sum(q[current, :j]) <= r < sum(q[current, :j+1]).  Pure function of its
    arguments: identical inputs always yield the identical level.
    """
    if not 0 <= current <= chain.capacity:
        raise ValueError(f"current level {current} outside 0..{chain.capacity}")
    j = int(np.searchsorted(chain.row_cdf[current], r, side="right"))
    return min(j, chain.capacity)
