"""Aggregated (availability, buffer-length) chain and first-return-time pmfs.

The buffered controller's renewal analysis runs on the joint chain
``Z(k) = (N(k), lambda(k))`` whose state space has 2*capacity elements:

* ``s_i = (i, i)`` for i in 0..capacity: the level-i states reachable right
  after a step with fresh computation (or full depletion for i = 0);
* ``s_{capacity+j} = (0, j)`` for j in 1..capacity-1: zero availability with
  j buffered inputs still unconsumed.

Two renewal sequences matter: returns of Z to ``s_0`` (buffer depletion,
governing the buffered controller) and returns of N to level 0 (governing
the baseline controller).  Both first-return-time distributions are computed
exactly from partitions of the respective transition matrices, and a
path-enumeration oracle is provided for cross-checking.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .chain import ProcessorChain
from .errors import CapacityTooSmall, OracleTooLarge

# Hard caps for the exponential path-enumeration oracle.
ORACLE_MAX_STATES = 12
ORACLE_MAX_RETURN_TIME = 12

_ROW_SUM_ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class AggregateChain:
    """Joint (availability, effective-buffer-length) chain with its renewal partition.

    ``p`` is the 2L x 2L transition matrix (L = capacity).  The partition
    splits it around the depletion state ``s_0``::

        p = [[q00, theta^T],
             [mu,  p_bar  ]]

    ``q00`` is the hold probability of ``s_0``, ``theta`` the exit
    distribution, ``mu`` the one-step return probabilities, and ``p_bar``
    the substochastic block of transitions that avoid ``s_0``.
    """

    capacity: int
    states: tuple[tuple[int, int], ...]
    p: np.ndarray
    q00: float
    theta: np.ndarray
    mu: np.ndarray
    p_bar: np.ndarray

    def __post_init__(self) -> None:
        for name in ("p", "theta", "mu", "p_bar"):
            getattr(self, name).setflags(write=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AggregateChain):
            return NotImplemented
        return self.capacity == other.capacity and np.array_equal(self.p, other.p)

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class ReturnPmf:
    """Truncated first-return-time distribution with a certified tail bound.

    ``mass[i]`` is the probability of a return after ``i + 1`` steps; ``tail``
    bounds the probability mass beyond the truncation point.  Analytic
    constructors guarantee ``prob(1)`` equals the renewal state's hold
    probability exactly; empirical estimators only approach it.
    """

    kind: str  # "delta" (buffer depletion) or "tau" (zero availability)
    mass: np.ndarray
    tail: float

    def __post_init__(self) -> None:
        self.mass.setflags(write=False)
        if self.kind not in ("delta", "tau"):
            raise ValueError(f"unknown pmf kind {self.kind!r}")
        if np.any(self.mass < -_ROW_SUM_ATOL) or np.any(self.mass > 1.0 + _ROW_SUM_ATOL):
            raise ValueError("pmf masses must lie in [0, 1]")
        if self.tail < 0.0:
            raise ValueError("tail bound must be nonnegative")
        total = float(self.mass.sum()) + self.tail
        if not (1.0 - 1e-9 <= total <= 1.0 + 1e-9):
            raise ValueError(f"mass plus tail is {total!r}, expected 1 within 1e-9")

    @property
    def j_max(self) -> int:
        return len(self.mass)

    def prob(self, j: int) -> float:
        """Probability of a first return after exactly j steps (1-indexed)."""
        if not 1 <= j <= self.j_max:
            raise IndexError(f"return time {j} outside 1..{self.j_max}")
        return float(self.mass[j - 1])

    def write_csv(self, fp) -> None:
        """Two-column CSV (j, probability) plus a tail-bound comment line."""
        fp.write("j,probability\n")
        for j in range(1, self.j_max + 1):
            fp.write(f"{j},{self.mass[j - 1]:.12g}\n")
        fp.write(f"# tail,{self.tail:.12g}\n")

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def build_aggregate(chain: ProcessorChain) -> AggregateChain:
    """Assemble the joint chain's transition matrix from the availability chain.

    The nonzero entries follow directly from the buffer-length recursion:
    a step with fresh computation jumps to ``(j, j)`` regardless of the
    buffer, a zero-availability step from ``(i, i)`` with i >= 2 leaves
    ``i - 1`` buffered inputs, and zero-availability runs walk the
    ``(0, m)`` tail states down toward depletion.  Every other transition
    is structurally impossible and stays exactly zero.

    For capacity 1 the buffer never outlives the current step, the tail
    states vanish, and the joint chain coincides with the availability
    chain itself.
    """
    cap = chain.capacity
    q = chain.q
    if cap < 1:
        raise CapacityTooSmall(f"capacity must be >= 1, got {cap}")
    if cap == 1:
        states = ((0, 0), (1, 1))
        p = q.copy()
    else:
        states = tuple((i, i) for i in range(cap + 1)) + tuple((0, j) for j in range(1, cap))
        n = 2 * cap
        p = np.zeros((n, n))
        p[0, 0] = q[0, 0]
        p[1, 0] = q[1, 0]
        p[cap + 1, 0] = q[0, 0]
        for i in range(cap + 1):
            p[i, 1 : cap + 1] = q[i, 1 : cap + 1]
        for j in range(1, cap):
            p[j + 1, cap + j] = q[j + 1, 0]
        for m in range(2, cap):
            p[cap + m, cap + m - 1] = q[0, 0]
        for k in range(1, cap):
            p[cap + k, 1 : cap + 1] = q[0, 1 : cap + 1]

    sums = p.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise AssertionError(f"aggregate rows sum to {sums!r}; input chain invalid?")
    return AggregateChain(
        capacity=cap,
        states=states,
        p=p,
        q00=float(p[0, 0]),
        theta=p[0, 1:].copy(),
        mu=p[1:, 0].copy(),
        p_bar=p[1:, 1:].copy(),
    )


def _partial_pmf(
    hold: float, exit_row: np.ndarray, avoid: np.ndarray, enter: np.ndarray, j_max: int
) -> tuple[np.ndarray, float]:
    """First-return masses from a renewal partition, by left-vector recursion.

    mass(1) = hold, mass(j) = exit_row . avoid^(j-2) . enter for j >= 2.
    The powers are never formed; the row vector is pushed through ``avoid``
    once per step (O(j_max * n^2)).  The truncation tail is exactly one
    minus the accumulated mass, which is nonnegative because ``avoid`` is
    substochastic.
    """
    if j_max < 2:
        raise ValueError(f"j_max must be >= 2, got {j_max}")
    mass = np.zeros(j_max)
    mass[0] = hold
    v = exit_row.copy()
    for j in range(2, j_max + 1):
        mass[j - 1] = v @ enter
        if j < j_max:
            v = v @ avoid
    tail = 1.0 - float(mass.sum())
    if tail < 0.0:
        if tail < -1e-9:
            raise AssertionError(f"negative tail {tail!r}")
        tail = 0.0
    return mass, tail


def delta_pmf(agg: AggregateChain, j_max: int) -> ReturnPmf:
    """Distribution of the time between consecutive buffer depletions."""
    mass, tail = _partial_pmf(agg.q00, agg.theta, agg.p_bar, agg.mu, j_max)
    return ReturnPmf(kind="delta", mass=mass, tail=tail)


def tau_pmf(chain: ProcessorChain, j_max: int) -> ReturnPmf:
    """Distribution of the time between consecutive zero-availability steps."""
    q = chain.q
    mass, tail = _partial_pmf(float(q[0, 0]), q[0, 1:].copy(), q[1:, 1:], q[1:, 0], j_max)
    return ReturnPmf(kind="tau", mass=mass, tail=tail)


def return_pmf_bruteforce(target: AggregateChain | ProcessorChain, j_max: int) -> ReturnPmf:
    """First-return pmf by explicit enumeration of every return path.

    Walks all state paths that start and end at the renewal state without
    visiting it in between, summing the product of transition probabilities
    per path.  Exponential in j_max; intended purely as a test oracle, hence
    the hard size caps.
    """
    if isinstance(target, AggregateChain):
        p, kind = target.p, "delta"
    else:
        p, kind = target.q, "tau"
    n = p.shape[0]
    if n > ORACLE_MAX_STATES or j_max > ORACLE_MAX_RETURN_TIME:
        raise OracleTooLarge(
            f"path enumeration supports <= {ORACLE_MAX_STATES} states and "
            f"j_max <= {ORACLE_MAX_RETURN_TIME}, got {n} states, j_max {j_max}"
        )
    if j_max < 2:
        raise ValueError(f"j_max must be >= 2, got {j_max}")

    succ = [tuple(int(v) for v in np.flatnonzero(row > 0.0)) for row in p]
    back = p[:, 0]
    mass = np.zeros(j_max)
    mass[0] = p[0, 0]
    # Depth-first walk over path prefixes s_0 -> ... -> s (s != s_0); each
    # stack entry is (state, transitions so far, product of probabilities).
    stack = [(v, 1, p[0, v]) for v in succ[0] if v != 0]
    while stack:
        s, t, prob = stack.pop()
        if back[s] > 0.0:
            mass[t] += prob * back[s]
        if t + 1 < j_max:
            row = p[s]
            for v in succ[s]:
                if v != 0:
                    stack.append((v, t + 1, prob * row[v]))
    tail = max(1.0 - float(mass.sum()), 0.0)
    return ReturnPmf(kind=kind, mass=mass, tail=tail)
