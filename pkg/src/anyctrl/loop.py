"""Plant models and the buffered / baseline control-loop step functions.

The buffered controller keeps up to ``capacity`` tentative future inputs.
Each step the buffer shifts by one block.  When the processor completes
n >= 1 computations it applies a fresh feedback input, rebuilds the buffer
by rolling the *nominal* (noise-free) model forward n - 1 times, and the
effective buffer length becomes n.  When the processor completes nothing,
the shifted first block (zero once the buffer has depleted) is applied and
the effective length drops by one, floored at zero.

The baseline controller applies the feedback law whenever any computation
is possible and zero input otherwise.

All functions here are deterministic; disturbances are passed in by the
caller per step.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Callable, NamedTuple

import numpy as np

from .certify import LyapunovRates
from .errors import ZeroInputGain

STATE_DIVERGENCE_GUARD = 1e12


@dataclass(frozen=True)
class RobustnessParams:
    """Global Lipschitz and noise-gain constants of a plant.

    lambda_x, lambda_u, lambda_w bound the dynamics' sensitivity to state,
    input, and disturbance; lambda_v and lambda_kappa bound the Lyapunov
    function and the feedback law.  beta_noise and eta_noise are the additive
    noise gains of the Lyapunov contraction/growth inequalities, and w_mean
    is the configured mean absolute disturbance.
    """

    lambda_x: float
    lambda_u: float
    lambda_w: float
    lambda_v: float
    lambda_kappa: float
    beta_noise: float
    eta_noise: float
    w_mean: float = 0.0

    def __post_init__(self) -> None:
        for name in ("lambda_x", "lambda_u", "lambda_w", "lambda_v", "lambda_kappa", "beta_noise", "eta_noise", "w_mean"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class PlantModel:
    """Plant dynamics with feedback law and Lyapunov scaffolding.

    ``f(x, u, w)`` maps state, input, and additive disturbance to the next
    state (pass ``w = 0`` for the nominal model).  ``kappa`` is the feedback
    policy, ``v`` the Lyapunov function, ``phi1``/``phi2`` its sandwich
    bounds (used for diagnostics).  ``rates`` carries the asserted
    contraction/growth factors; ``alpha_global`` records whether the growth
    factor is valid on the whole state space, which gates certificate
    emission.  Scalar plants must accept numpy arrays elementwise so the
    Monte Carlo engine can batch trajectories.
    """

    state_dim: int
    input_dim: int
    f: Callable
    kappa: Callable
    v: Callable
    phi1: Callable
    phi2: Callable
    rates: LyapunovRates
    alpha_global: bool = True
    robustness: RobustnessParams | None = None
    name: str = ""

    @property
    def scalar(self) -> bool:
        return self.state_dim == 1 and self.input_dim == 1


@dataclass(frozen=True)
class AnytimeState:
    """Buffer contents and effective length of the buffered controller."""

    buffer: np.ndarray  # (capacity, input_dim)
    effective_len: int
    capacity: int

    def __post_init__(self) -> None:
        self.buffer.setflags(write=False)

    @classmethod
    def fresh(cls, capacity: int, input_dim: int) -> "AnytimeState":
        return cls(buffer=np.zeros((capacity, input_dim)), effective_len=0, capacity=capacity)


class AnytimeStepResult(NamedTuple):
    applied_input: np.ndarray
    next_state: np.ndarray
    state: AnytimeState


class BaselineStepResult(NamedTuple):
    applied_input: np.ndarray
    next_state: np.ndarray


def anytime_step(plant: PlantModel, st: AnytimeState, x, n_avail: int, w) -> AnytimeStepResult:
    """One step of the buffered controller.

    Tentative inputs are always rolled out with the nominal model, even when
    the actual plant is disturbed; the mismatch between prediction and
    reality is exactly what the robustness analysis quantifies.
    """
    if not 0 <= n_avail <= st.capacity:
        raise ValueError(f"availability {n_avail} outside 0..{st.capacity}")
    x = np.asarray(x, dtype=float)
    cap, p = st.capacity, plant.input_dim
    zero_w = np.zeros(plant.state_dim) if plant.state_dim > 1 else 0.0

    if n_avail == 0:
        buf = np.vstack([st.buffer[1:], np.zeros((1, p))])
        u = buf[0].copy()
        lam = max(st.effective_len - 1, 0)
    else:
        buf = np.zeros((cap, p))
        chi = x
        u_j = np.asarray(plant.kappa(x), dtype=float)
        buf[0] = u_j
        for j in range(2, n_avail + 1):
            chi = np.asarray(plant.f(chi, u_j, zero_w), dtype=float)
            u_j = np.asarray(plant.kappa(chi), dtype=float)
            buf[j - 1] = u_j
        u = buf[0].copy()
        lam = n_avail

    next_state = np.asarray(plant.f(x, u, w), dtype=float)
    return AnytimeStepResult(u, next_state, AnytimeState(buffer=buf, effective_len=lam, capacity=cap))


def baseline_step(plant: PlantModel, x, n_avail: int, w) -> BaselineStepResult:
    """One step of the baseline controller: fresh feedback or zero input."""
    x = np.asarray(x, dtype=float)
    if n_avail >= 1:
        u = np.asarray(plant.kappa(x), dtype=float)
    else:
        u = np.zeros(plant.input_dim)
    return BaselineStepResult(u, np.asarray(plant.f(x, u, w), dtype=float))


# --- built-in plants -------------------------------------------------------

def _cubic_f(x, u, w):
    return x + 0.01 * (x**3 + u) + w


def _cubic_kappa(x):
    return -(x**3) - x


def _abs_v(x):
    return np.abs(x)


def _identity(r):
    return r


def builtin_cubic_plant() -> PlantModel:
    """Scalar cubic benchmark plant x+ = x + 0.01(x^3 + u) + w.

    The feedback u = -x^3 - x contracts |x| by exactly 0.99 per step
    everywhere.  In open loop, |x + 0.01 x^3| / |x| grows without bound, so
    no finite global growth factor exists: ``alpha_global`` is False (the
    stored 1.01 is valid only on |x| <= 1) and certificate emission for this
    plant is refused.
    """
    return PlantModel(
        state_dim=1,
        input_dim=1,
        f=_cubic_f,
        kappa=_cubic_kappa,
        v=_abs_v,
        phi1=_identity,
        phi2=_identity,
        rates=LyapunovRates(rho=0.99, alpha=1.01),
        alpha_global=False,
        robustness=None,
        name="cubic",
    )


def _linear_f(x, u, w, a, b):
    return a * x + b * u + w


def _linear_kappa(x, gain):
    return gain * x


def builtin_linear_plant(a: float, b: float, rho_target: float) -> PlantModel:
    """Scalar linear test plant with exactly known Lyapunov rates.

    The feedback gain places the closed-loop multiplier at ``rho_target``
    with the sign of ``a``, so V = |x| contracts by exactly ``rho_target``
    under feedback and grows by exactly |a| under zero input, globally.
    This is the plant used to exercise certificate-versus-simulation
    claims, and it satisfies the global Lipschitz bounds recorded in
    ``robustness``.
    """
    if b == 0.0:
        raise ZeroInputGain("input gain b must be nonzero")
    if not 0.0 <= rho_target < 1.0:
        raise ValueError(f"rho_target must lie in [0, 1), got {rho_target}")
    closed = rho_target if a >= 0.0 else -rho_target
    gain = (closed - a) / b
    return PlantModel(
        state_dim=1,
        input_dim=1,
        f=partial(_linear_f, a=a, b=b),
        kappa=partial(_linear_kappa, gain=gain),
        v=_abs_v,
        phi1=_identity,
        phi2=_identity,
        rates=LyapunovRates(rho=rho_target, alpha=abs(a)),
        alpha_global=True,
        robustness=RobustnessParams(
            lambda_x=abs(a),
            lambda_u=abs(b),
            lambda_w=1.0,
            lambda_v=1.0,
            lambda_kappa=abs(gain),
            beta_noise=1.0,
            eta_noise=1.0,
        ),
        name="linear",
    )


def spot_check_plant(plant: PlantModel, samples: int = 64, seed: int = 0) -> list[dict]:
    """Spot-check the plant's declared contracts on sampled states.

    Checks the equilibrium at the origin, the sandwich bounds
    phi1(|x|) <= V(x) <= phi2(|x|), the feedback contraction, and (only when
    ``alpha_global`` is set) the zero-input growth bound.  Violations are
    returned as records, not raised: the declarations are user assertions
    and a failed sample is diagnostic information.
    """
    issues: list[dict] = []
    zero_x = np.zeros(plant.state_dim)
    zero_u = np.zeros(plant.input_dim)
    zero_w = np.zeros(plant.state_dim)
    origin = np.asarray(plant.f(zero_x, zero_u, zero_w), dtype=float)
    if not np.allclose(origin, 0.0, atol=1e-12):
        issues.append({"check": "equilibrium", "detail": f"f(0, 0, 0) = {origin}"})

    rng = np.random.default_rng(seed)
    tol = 1e-9
    for _ in range(samples):
        x = rng.standard_normal(plant.state_dim) * rng.choice([0.1, 1.0, 10.0])
        norm = float(np.linalg.norm(x))
        v = float(np.asarray(plant.v(x)).reshape(()))
        lo, hi = float(plant.phi1(norm)), float(plant.phi2(norm))
        if not lo - tol <= v <= hi + tol:
            issues.append({"check": "sandwich", "detail": f"V({x}) = {v} outside [{lo}, {hi}]"})
        closed = plant.f(x, plant.kappa(x), zero_w)
        v_closed = float(np.asarray(plant.v(closed)).reshape(()))
        if v_closed > plant.rates.rho * v + tol:
            issues.append({"check": "contraction", "detail": f"V step {v} -> {v_closed} exceeds rho = {plant.rates.rho}"})
        if plant.alpha_global:
            open_loop = plant.f(x, zero_u, zero_w)
            v_open = float(np.asarray(plant.v(open_loop)).reshape(()))
            if v_open > plant.rates.alpha * v + tol:
                issues.append({"check": "growth", "detail": f"V step {v} -> {v_open} exceeds alpha = {plant.rates.alpha}"})
    return issues
