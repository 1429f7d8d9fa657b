"""Monte Carlo closed-loop engine.

Trajectories are mutually independent: trajectory i draws from its own
counter-based substream (Philox keyed by the root seed with spawn key
``(i,)``), so any trajectory is reproducible in isolation and ensemble
results are bit-identical no matter how trajectories are batched or how
many worker processes run them.  Each trajectory consumes its draws in a
fixed order: first the block of chain uniforms, then (if configured) the
block of disturbance draws.

Scalar plants run through a vectorized engine that steps a whole batch of
trajectories at once; vector plants fall back to a per-trajectory loop over
the reference step functions in :mod:`anyctrl.loop`.  Both advance state
with the same elementwise float64 operations, and the vectorized engine is
tested against step-by-step replays of the reference semantics.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import loop as loop_mod
from .aggregate import ReturnPmf, build_aggregate
from .certify import omega
from .chain import ProcessorChain
from .errors import (
    CertificateNotSatisfied,
    HorizonTooShort,
    NonScalarPlant,
    NumericOverflow,
    ValidationError,
)
from .loop import STATE_DIVERGENCE_GUARD, AnytimeState, PlantModel

CONTROLLERS = ("anytime", "baseline", "ideal")
_BATCH_SIZE = 1024
_WALKERS = 4096
_WALKER_CHUNK = 256


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean white disturbance: uniform on [-scale, scale] or Gaussian(scale)."""

    distribution: str
    scale: float

    def __post_init__(self) -> None:
        if self.distribution not in ("uniform", "gaussian"):
            raise ValueError(f"unknown noise distribution {self.distribution!r}")
        if self.scale < 0.0:
            raise ValueError(f"noise scale must be >= 0, got {self.scale}")

    @property
    def mean_abs(self) -> float:
        """E|w| of the configured law."""
        if self.distribution == "uniform":
            return self.scale / 2.0
        return self.scale * math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class SimConfig:
    """Ensemble configuration for one closed-loop experiment."""

    horizon: int
    trajectories: int
    seed: int
    controller: str = "anytime"
    initial_state: float | tuple[float, ...] = 1.0
    initial_availability: int = 0
    noise: NoiseSpec | None = None
    cost_horizon: int = 50
    cost_weights: tuple[float, float] = (0.2, 2.0)
    checkpoints: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.trajectories < 1:
            raise ValueError(f"trajectories must be >= 1, got {self.trajectories}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")
        if self.controller not in CONTROLLERS:
            raise ValueError(f"controller must be one of {CONTROLLERS}, got {self.controller!r}")
        if self.initial_availability < 0:
            raise ValueError("initial availability must be >= 0")
        if self.cost_horizon < 1:
            raise ValueError("cost horizon must be >= 1")
        bad = [k for k in self.checkpoints if not 0 <= k < self.horizon]
        if bad:
            raise ValueError(f"checkpoints outside 0..{self.horizon - 1}: {bad}")


@dataclass
class SimTrace:
    """Per-step record of one trajectory plus its renewal bookkeeping.

    ``renewals`` holds buffer-depletion instants for the buffered controller
    (availability and effective length both zero) and zero-availability
    instants otherwise.
    """

    k: np.ndarray
    availability: np.ndarray
    effective_len: np.ndarray
    inputs: np.ndarray
    states: np.ndarray
    v: np.ndarray
    cost: float | None
    renewals: np.ndarray
    diverged: bool


@dataclass
class EnsembleResult:
    """Per-trajectory outputs of one ensemble run.

    Diverged trajectories (state magnitude beyond the guard) carry NaN in
    ``costs`` and ``v_sums`` and are excluded from summary statistics.
    """

    controller: str
    horizon: int
    seed: int
    costs: np.ndarray | None
    cost_reason: str | None
    v_sums: np.ndarray
    diverged: np.ndarray
    checkpoints: dict[int, np.ndarray] = field(default_factory=dict)
    traces: list[SimTrace] | None = None

    @property
    def n_trajectories(self) -> int:
        return len(self.v_sums)

    @property
    def n_diverged(self) -> int:
        return int(self.diverged.sum())


@dataclass(frozen=True)
class CostSummary:
    mean: float
    stderr: float
    n: int
    n_diverged: int


def _substream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def _draw_noise(gen: np.random.Generator, noise: NoiseSpec, steps: int, dim: int):
    size = (steps,) if dim == 1 else (steps, dim)
    if noise.distribution == "uniform":
        return gen.uniform(-noise.scale, noise.scale, size)
    return gen.normal(0.0, noise.scale, size)


def _mean_stderr(values: np.ndarray) -> tuple[float, float]:
    n = len(values)
    mean = float(values.mean()) if n else math.nan
    if n <= 1:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / math.sqrt(n))


# --- vectorized scalar engine ----------------------------------------------

def _run_scalar_batch(
    plant: PlantModel,
    chain: ProcessorChain,
    config: SimConfig,
    start: int,
    count: int,
    collect_traces: bool,
) -> dict:
    horizon = config.horizon
    steps = horizon - 1
    cap = chain.capacity
    uniforms = np.empty((count, steps)) if steps else np.empty((count, 0))
    noise_draws = None
    if config.noise is not None and config.noise.scale > 0.0 and steps:
        noise_draws = np.empty((count, steps))
    for row in range(count):
        gen = _substream(config.seed, start + row)
        if steps:
            uniforms[row] = gen.random(steps)
            if noise_draws is not None:
                noise_draws[row] = _draw_noise(gen, config.noise, steps, 1)

    x = np.full(count, float(config.initial_state))
    if np.any(np.abs(x) > STATE_DIVERGENCE_GUARD):
        raise NumericOverflow(f"initial state magnitude exceeds {STATE_DIVERGENCE_GUARD}")
    avail = np.full(count, config.initial_availability, dtype=np.int64)
    lam = np.zeros(count, dtype=np.int64)
    buf = np.zeros((count, cap))
    alive = np.ones(count, dtype=bool)
    cost_acc = np.zeros(count)
    v_sum = np.zeros(count)
    w_cost_x, w_cost_u = config.cost_weights
    checkpoint_vals: dict[int, np.ndarray] = {}
    if collect_traces:
        rec_x = np.empty((count, horizon))
        rec_u = np.empty((count, horizon))
        rec_n = np.empty((count, horizon), dtype=np.int64)
        rec_lam = np.empty((count, horizon), dtype=np.int64)

    controller = config.controller
    row_cdf = chain.row_cdf
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(horizon):
            if controller == "anytime":
                shifted = np.concatenate([buf[:, 1:], np.zeros((count, 1))], axis=1)
                fresh = avail >= 1
                u_fresh = plant.kappa(x)
                roll = np.zeros((count, cap))
                roll[:, 0] = u_fresh
                chi = x
                u_prev = u_fresh
                for j in range(2, cap + 1):
                    chi = plant.f(chi, u_prev, 0.0)
                    u_prev = plant.kappa(chi)
                    roll[:, j - 1] = np.where(avail >= j, u_prev, 0.0)
                u = np.where(fresh, u_fresh, shifted[:, 0])
                new_lam = np.where(fresh, avail, np.maximum(lam - 1, 0))
                new_buf = np.where(fresh[:, None], roll, shifted)
                u = np.where(alive, u, 0.0)
                lam = np.where(alive, new_lam, lam)
                buf = np.where(alive[:, None], new_buf, buf)
            elif controller == "baseline":
                u = np.where(alive & (avail >= 1), plant.kappa(x), 0.0)
            else:  # ideal
                u = np.where(alive, plant.kappa(x), 0.0)

            if k < config.cost_horizon:
                cost_acc += np.where(alive, w_cost_x * x * x + w_cost_u * u * u, 0.0)
            v_sum += np.where(alive, plant.v(x), 0.0)
            if k in config.checkpoints:
                checkpoint_vals[k] = np.asarray(plant.phi1(np.abs(x)), dtype=float).copy()
            if collect_traces:
                rec_x[:, k] = x
                rec_u[:, k] = u
                rec_n[:, k] = avail
                rec_lam[:, k] = lam

            if k < steps:
                w_k = noise_draws[:, k] if noise_draws is not None else 0.0
                x_next = plant.f(x, u, w_k)
                overflow = alive & ~(np.abs(x_next) <= STATE_DIVERGENCE_GUARD)
                x = np.where(alive, x_next, x)
                cdf_rows = row_cdf[avail]
                nxt = np.minimum((cdf_rows <= uniforms[:, k, None]).sum(axis=1), cap)
                avail = np.where(alive, nxt, avail)
                alive = alive & ~overflow

    diverged = ~alive
    cost_acc /= config.cost_horizon
    cost_acc[diverged] = np.nan
    v_sum = v_sum.copy()
    v_sum[diverged] = np.nan

    out = {
        "costs": cost_acc,
        "v_sums": v_sum,
        "diverged": diverged,
        "checkpoints": checkpoint_vals,
    }
    if collect_traces:
        out["trace_arrays"] = (rec_x, rec_u, rec_n, rec_lam)
    return out


def _scalar_batch_worker(args) -> dict:
    return _run_scalar_batch(*args)


# --- general (vector-plant) engine -----------------------------------------

def _run_general(
    plant: PlantModel,
    chain: ProcessorChain,
    config: SimConfig,
    collect_traces: bool,
) -> dict:
    horizon = config.horizon
    steps = horizon - 1
    n_dim, p_dim = plant.state_dim, plant.input_dim
    x0 = np.asarray(config.initial_state, dtype=float)
    x0 = np.full(n_dim, float(x0)) if x0.ndim == 0 else x0.reshape(n_dim)
    if np.any(np.abs(x0) > STATE_DIVERGENCE_GUARD):
        raise NumericOverflow(f"initial state magnitude exceeds {STATE_DIVERGENCE_GUARD}")
    total = config.trajectories

    v_sums = np.zeros(total)
    diverged = np.zeros(total, dtype=bool)
    checkpoint_vals = {k: np.zeros(total) for k in config.checkpoints}
    traces: list[SimTrace] | None = [] if collect_traces else None

    for i in range(total):
        gen = _substream(config.seed, i)
        uniforms = gen.random(steps) if steps else np.empty(0)
        noise_draws = None
        if config.noise is not None and config.noise.scale > 0.0 and steps:
            noise_draws = _draw_noise(gen, config.noise, steps, n_dim)

        x = x0.copy()
        avail = config.initial_availability
        st = AnytimeState.fresh(chain.capacity, p_dim)
        rec_x = np.empty((horizon, n_dim))
        rec_u = np.empty((horizon, p_dim))
        rec_n = np.empty(horizon, dtype=np.int64)
        rec_lam = np.empty(horizon, dtype=np.int64)
        alive = True
        zero_w = np.zeros(n_dim)
        for k in range(horizon):
            w_k = noise_draws[k] if (noise_draws is not None and k < steps) else zero_w
            if not alive:
                u = np.zeros(p_dim)
                x_next = x
            elif config.controller == "anytime":
                u, x_next, st = loop_mod.anytime_step(plant, st, x, avail, w_k)
            elif config.controller == "baseline":
                u, x_next = loop_mod.baseline_step(plant, x, avail, w_k)
            else:
                u = np.asarray(plant.kappa(x), dtype=float)
                x_next = np.asarray(plant.f(x, u, w_k), dtype=float)

            v_sums[i] += float(np.asarray(plant.v(x)).reshape(())) if alive else 0.0
            if k in checkpoint_vals:
                checkpoint_vals[k][i] = float(plant.phi1(float(np.linalg.norm(x))))
            rec_x[k] = x
            rec_u[k] = u
            rec_n[k] = avail
            rec_lam[k] = st.effective_len if config.controller == "anytime" else 0
            if k < steps and alive:
                x = x_next
                avail = int(min((chain.row_cdf[avail] <= uniforms[k]).sum(), chain.capacity))
                if not np.all(np.abs(x) <= STATE_DIVERGENCE_GUARD):
                    alive = False
        if not alive:
            diverged[i] = True
            v_sums[i] = np.nan
        if collect_traces:
            traces.append(
                _assemble_trace(config, rec_x.squeeze(-1) if n_dim == 1 else rec_x,
                                rec_u.squeeze(-1) if p_dim == 1 else rec_u,
                                rec_n, rec_lam, cost=None, diverged=bool(diverged[i]))
            )
    return {
        "costs": None,
        "v_sums": v_sums,
        "diverged": diverged,
        "checkpoints": checkpoint_vals,
        "traces": traces,
    }


def _assemble_trace(config: SimConfig, xs, us, ns, lams, cost, diverged) -> SimTrace:
    ks = np.arange(config.horizon)
    if config.controller == "anytime":
        renewals = ks[(ns == 0) & (lams == 0)]
    else:
        renewals = ks[ns == 0]
    v = np.abs(xs) if xs.ndim == 1 else np.linalg.norm(xs, axis=1)
    return SimTrace(
        k=ks,
        availability=ns,
        effective_len=lams,
        inputs=us,
        states=xs,
        v=v,
        cost=cost,
        renewals=renewals,
        diverged=diverged,
    )


def run_ensemble(
    plant: PlantModel,
    chain: ProcessorChain,
    config: SimConfig,
    *,
    collect_traces: bool = False,
    threads: int = 1,
) -> EnsembleResult:
    """Simulate an ensemble of independent closed-loop trajectories.

    Returns per-trajectory quantities (empirical cost when the plant is
    scalar and the horizon covers the cost window, accumulated Lyapunov
    values, divergence flags, checkpoint magnitudes) and, when requested,
    full per-step traces.  Identical inputs produce bit-identical results
    for any ``threads`` value.
    """
    if config.initial_availability > chain.capacity:
        raise ValidationError(
            f"initial availability {config.initial_availability} exceeds capacity {chain.capacity}"
        )
    if not plant.scalar:
        parts = _run_general(plant, chain, config, collect_traces)
        return EnsembleResult(
            controller=config.controller,
            horizon=config.horizon,
            seed=config.seed,
            costs=None,
            cost_reason="nonscalar",
            v_sums=parts["v_sums"],
            diverged=parts["diverged"],
            checkpoints=parts["checkpoints"],
            traces=parts["traces"],
        )

    total = config.trajectories
    batches = [
        (plant, chain, config, s, min(_BATCH_SIZE, total - s), collect_traces)
        for s in range(0, total, _BATCH_SIZE)
    ]
    if threads > 1 and len(batches) > 1:
        try:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(_scalar_batch_worker, batches))
        except Exception:  # unpicklable plant callables; results are identical serially
            parts = [_run_scalar_batch(*b) for b in batches]
    else:
        parts = [_run_scalar_batch(*b) for b in batches]

    costs = np.concatenate([p["costs"] for p in parts])
    v_sums = np.concatenate([p["v_sums"] for p in parts])
    diverged = np.concatenate([p["diverged"] for p in parts])
    checkpoints = {
        k: np.concatenate([p["checkpoints"][k] for p in parts]) for k in config.checkpoints
    }
    cost_ok = config.horizon >= config.cost_horizon
    traces = None
    if collect_traces:
        traces = []
        for part, (_, _, _, start, count, _) in zip(parts, batches):
            rec_x, rec_u, rec_n, rec_lam = part["trace_arrays"]
            for row in range(count):
                idx = start + row
                traces.append(
                    _assemble_trace(
                        config,
                        rec_x[row],
                        rec_u[row],
                        rec_n[row],
                        rec_lam[row],
                        cost=float(costs[idx]) if cost_ok else None,
                        diverged=bool(diverged[idx]),
                    )
                )
    return EnsembleResult(
        controller=config.controller,
        horizon=config.horizon,
        seed=config.seed,
        costs=costs if cost_ok else None,
        cost_reason=None if cost_ok else "horizon",
        v_sums=v_sums,
        diverged=diverged,
        checkpoints=checkpoints,
        traces=traces,
    )


def empirical_cost(result: EnsembleResult | Sequence[SimTrace]) -> CostSummary:
    """Mean and standard error of the per-trajectory quadratic cost.

    The cost averages ``w_x * x(k)^2 + w_u * u(k)^2`` over the cost window;
    diverged trajectories are excluded (and counted).
    """
    if isinstance(result, EnsembleResult):
        if result.cost_reason == "nonscalar":
            raise NonScalarPlant("empirical cost is defined for scalar plants only")
        if result.cost_reason == "horizon" or result.costs is None:
            raise HorizonTooShort("horizon does not cover the cost window")
        costs, diverged = result.costs, result.diverged
    else:
        vals = [t.cost for t in result]
        if any(c is None for c in vals):
            raise HorizonTooShort("traces carry no cost (horizon below the cost window)")
        costs = np.array(vals, dtype=float)
        diverged = np.array([t.diverged for t in result], dtype=bool)
    good = costs[~diverged]
    mean, stderr = _mean_stderr(good)
    return CostSummary(mean=mean, stderr=stderr, n=len(good), n_diverged=int(diverged.sum()))


def empirical_return_pmf(chain: ProcessorChain, kind: str, cycles: int, seed: int) -> ReturnPmf:
    """Empirical first-return-time frequencies from simulated renewal cycles.

    Runs a population of independent walkers on the availability chain (plus
    the buffer-length recursion for the depletion kind), starting at the
    renewal state, and records gaps between successive renewals until the
    requested number of cycles is collected.  Deterministic given the seed.
    """
    if kind not in ("delta", "tau"):
        raise ValueError(f"kind must be 'delta' or 'tau', got {kind!r}")
    if cycles < 1:
        raise ValueError(f"cycles must be >= 1, got {cycles}")

    n_walkers = min(cycles, _WALKERS)
    quota = np.full(n_walkers, cycles // n_walkers, dtype=np.int64)
    quota[: cycles % n_walkers] += 1
    gens = [_substream(seed, i) for i in range(n_walkers)]
    buf = np.empty((n_walkers, _WALKER_CHUNK))
    ptr = _WALKER_CHUNK

    avail = np.zeros(n_walkers, dtype=np.int64)
    lam = np.zeros(n_walkers, dtype=np.int64)
    gap = np.zeros(n_walkers, dtype=np.int64)
    counts = np.zeros(64, dtype=np.int64)
    active = quota > 0
    remaining = cycles
    cap = chain.capacity
    row_cdf = chain.row_cdf

    while remaining > 0:
        if ptr == _WALKER_CHUNK:
            for i, gen in enumerate(gens):
                buf[i] = gen.random(_WALKER_CHUNK)
            ptr = 0
        r = buf[:, ptr]
        ptr += 1
        nxt = np.minimum((row_cdf[avail] <= r[:, None]).sum(axis=1), cap)
        if kind == "delta":
            lam = np.where(nxt >= 1, nxt, np.maximum(lam - 1, 0))
            renewed = (nxt == 0) & (lam == 0)
        else:
            renewed = nxt == 0
        avail = nxt
        gap += 1
        hit = renewed & active
        if hit.any():
            gaps_hit = gap[hit]
            top = int(gaps_hit.max())
            while top > counts.size:
                counts = np.concatenate([counts, np.zeros(counts.size, dtype=np.int64)])
            np.add.at(counts, gaps_hit - 1, 1)
            remaining -= int(hit.sum())
            quota[hit] -= 1
            gap[hit] = 0
            active = quota > 0

    j_max = int(np.flatnonzero(counts)[-1]) + 1
    mass = counts[:j_max].astype(float) / cycles
    return ReturnPmf(kind=kind, mass=mass, tail=0.0)


@dataclass(frozen=True)
class RobustnessReport:
    """Checkpoint means of phi1(|x|) under process noise, with the governing certificate."""

    omega_value: float
    w_mean: float
    n_trajectories: int
    checkpoint_means: dict[int, float]
    checkpoint_stderrs: dict[int, float]


def robustness_experiment(
    plant: PlantModel,
    chain: ProcessorChain,
    config: SimConfig,
    k_checkpoints: Sequence[int],
    *,
    threads: int = 1,
) -> RobustnessReport:
    """Noise-robustness experiment for the buffered controller.

    Requires the renewal certificate below one (the boundedness result's
    hypothesis), a strictly positive noise scale, and a plant with globally
    valid rates and Lipschitz constants.  Reports the ensemble mean of
    phi1(|x(k)|) at each checkpoint; bounded, plateauing means are the
    expected signature of per-step moment boundedness.
    """
    if config.noise is None or config.noise.scale <= 0.0:
        raise ValidationError("robustness experiment requires a positive noise scale")
    if not plant.alpha_global or plant.robustness is None:
        raise ValidationError("robustness experiment requires globally valid rates and Lipschitz constants")
    bad = [k for k in k_checkpoints if not 0 <= k < config.horizon]
    if bad:
        raise ValidationError(f"checkpoints outside the horizon: {bad}")
    cert = omega(build_aggregate(chain), plant.rates)
    if cert.value >= 1.0:
        raise CertificateNotSatisfied(
            f"renewal certificate is {cert.value:.6g} >= 1; boundedness hypothesis fails"
        )
    cfg = replace(config, controller="anytime", checkpoints=tuple(sorted(set(k_checkpoints))))
    result = run_ensemble(plant, chain, cfg, threads=threads)
    good = ~result.diverged
    means: dict[int, float] = {}
    stderrs: dict[int, float] = {}
    for k in cfg.checkpoints:
        mean, stderr = _mean_stderr(result.checkpoints[k][good])
        means[k] = mean
        stderrs[k] = stderr
    return RobustnessReport(
        omega_value=cert.value,
        w_mean=config.noise.mean_abs,
        n_trajectories=result.n_trajectories,
        checkpoint_means=means,
        checkpoint_stderrs=stderrs,
    )
