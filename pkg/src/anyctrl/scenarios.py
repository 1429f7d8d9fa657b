"""Scenario configuration: schema, strict parsing, and built-in scenarios.

A scenario is a JSON object with a required ``version`` field that resolves
to validated library objects (chain, plant, rates, simulation config).
Unknown keys are hard errors at every level: a silently ignored typo inside
a probability matrix would be catastrophic.

Built-in scenarios ship with the package so the reference experiments run
with zero authored configuration:

* ``case_study``       - the capacity-5 benchmark matrix with the cubic plant;
* ``qlambda(L)``       - the equal-escape family (diagonal 0.4, off-diagonal
                         0.6/L) for L in 1..7, with the cubic plant;
* ``fig4``             - the full capacity sweep 1..7 over all three
                         controllers (cost-comparison experiment).
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass

import numpy as np

from .certify import LyapunovRates
from .chain import ProcessorChain, uniform_chain, validate_chain
from .errors import ParseError, ValidationError
from .loop import PlantModel, builtin_cubic_plant, builtin_linear_plant
from .mc import CONTROLLERS, NoiseSpec, SimConfig

CONFIG_VERSION = 1

CASE_STUDY_CAPACITY = 5
CASE_STUDY_MATRIX = (
    (0.2, 0.16, 0.16, 0.16, 0.16, 0.16),
    (0.9, 0.05, 0.05, 0.0, 0.0, 0.0),
    (0.0, 0.1, 0.225, 0.225, 0.225, 0.225),
    (0.0, 0.0, 0.25, 0.25, 0.25, 0.25),
    (0.0, 0.0, 0.25, 0.25, 0.25, 0.25),
    (0.0, 0.0, 0.25, 0.25, 0.25, 0.25),
)

DEFAULT_SEED = 20260808


def case_study_chain() -> ProcessorChain:
    """The capacity-5 benchmark availability chain."""
    return validate_chain(np.array(CASE_STUDY_MATRIX), CASE_STUDY_CAPACITY)


def qlambda_chain(capacity: int) -> ProcessorChain:
    """Equal-escape family: stay with 0.4, move to any other level with 0.6/capacity."""
    if capacity < 1:
        raise ValidationError(f"qlambda capacity must be >= 1, got {capacity}")
    n = capacity + 1
    q = np.full((n, n), 0.6 / capacity)
    np.fill_diagonal(q, 0.4)
    return validate_chain(q, capacity)


@dataclass(frozen=True)
class SweepSpec:
    capacities: tuple[int, ...]
    controllers: tuple[str, ...]


@dataclass(frozen=True, eq=False)
class Scenario:
    """A parsed, resolved scenario.

    ``config`` retains the canonical configuration dict; scenarios compare
    equal when their canonical configurations do, and the scenario hash in
    output metadata is derived from the same canonical form.
    """

    name: str
    chain: ProcessorChain
    plant: PlantModel | None
    rates: LyapunovRates | None
    sim: SimConfig
    sweep: SweepSpec | None
    config: dict

    def canonical_json(self) -> str:
        return json.dumps(self.config, sort_keys=True, separators=(",", ":"))

    def scenario_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()[:16]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scenario):
            return NotImplemented
        return self.canonical_json() == other.canonical_json()

    __hash__ = None  # type: ignore[assignment]

    def certificate_rates(self) -> LyapunovRates:
        """Rates usable for certificate emission, or a refusal.

        Explicitly configured rates win; otherwise the plant's rates are
        used when they hold globally.  A plant whose growth factor is only
        local (the cubic benchmark) cannot be certified at all: no finite
        global growth factor exists for it.
        """
        if self.plant is not None and not self.plant.alpha_global:
            raise ValidationError(
                f"plant {self.plant.name!r} has no globally valid growth factor; "
                "certificates are refused for it (use a linear plant or a chain-only "
                "scenario with explicit rates)"
            )
        if self.rates is not None:
            return self.rates
        if self.plant is not None:
            return self.plant.rates
        raise ValidationError("scenario provides neither rates nor a certifiable plant")


def _require_keys(obj: dict, allowed: set[str], required: set[str], path: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ValidationError(f"{path}: unknown keys {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ValidationError(f"{path}: missing required keys {sorted(missing)}")


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{path}: expected an integer, got {value!r}")
    return value


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _parse_chain(spec, path: str) -> tuple[ProcessorChain, dict]:
    if not isinstance(spec, dict):
        raise ValidationError(f"{path}: expected an object")
    kind = spec.get("kind")
    if kind == "case_study":
        _require_keys(spec, {"kind"}, {"kind"}, path)
        return case_study_chain(), {"kind": "case_study"}
    if kind == "uniform":
        _require_keys(spec, {"kind", "capacity"}, {"kind", "capacity"}, path)
        cap = _as_int(spec["capacity"], f"{path}.capacity")
        return uniform_chain(cap), {"kind": "uniform", "capacity": cap}
    if kind == "qlambda":
        _require_keys(spec, {"kind", "capacity"}, {"kind", "capacity"}, path)
        cap = _as_int(spec["capacity"], f"{path}.capacity")
        return qlambda_chain(cap), {"kind": "qlambda", "capacity": cap}
    if kind == "matrix":
        _require_keys(spec, {"kind", "capacity", "q"}, {"kind", "capacity", "q"}, path)
        cap = _as_int(spec["capacity"], f"{path}.capacity")
        rows = spec["q"]
        if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
            raise ValidationError(f"{path}.q: expected a list of rows")
        chain = validate_chain(np.array(rows, dtype=float), cap)
        return chain, {"kind": "matrix", "capacity": cap, "q": [[float(v) for v in r] for r in rows]}
    raise ValidationError(f"{path}.kind: expected one of case_study|uniform|qlambda|matrix, got {kind!r}")


def _parse_plant(spec, path: str) -> tuple[PlantModel, dict]:
    if not isinstance(spec, dict):
        raise ValidationError(f"{path}: expected an object")
    kind = spec.get("kind")
    if kind == "cubic":
        _require_keys(spec, {"kind"}, {"kind"}, path)
        return builtin_cubic_plant(), {"kind": "cubic"}
    if kind == "linear":
        _require_keys(spec, {"kind", "a", "b", "rho"}, {"kind", "a", "b", "rho"}, path)
        a = _as_number(spec["a"], f"{path}.a")
        b = _as_number(spec["b"], f"{path}.b")
        rho = _as_number(spec["rho"], f"{path}.rho")
        try:
            plant = builtin_linear_plant(a, b, rho)
        except ValueError as exc:
            raise ValidationError(f"{path}: {exc}") from exc
        return plant, {"kind": "linear", "a": a, "b": b, "rho": rho}
    raise ValidationError(f"{path}.kind: expected cubic|linear, got {kind!r}")


def _parse_rates(spec, path: str) -> tuple[LyapunovRates, dict]:
    if not isinstance(spec, dict):
        raise ValidationError(f"{path}: expected an object")
    _require_keys(spec, {"rho", "alpha"}, {"rho", "alpha"}, path)
    rho = _as_number(spec["rho"], f"{path}.rho")
    alpha = _as_number(spec["alpha"], f"{path}.alpha")
    try:
        rates = LyapunovRates(rho=rho, alpha=alpha)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    return rates, {"rho": rho, "alpha": alpha}


def _parse_noise(spec, path: str) -> tuple[NoiseSpec | None, dict | None]:
    if spec is None:
        return None, None
    if not isinstance(spec, dict):
        raise ValidationError(f"{path}: expected an object or null")
    _require_keys(spec, {"distribution", "scale"}, {"distribution", "scale"}, path)
    try:
        noise = NoiseSpec(distribution=spec["distribution"], scale=_as_number(spec["scale"], f"{path}.scale"))
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    return noise, {"distribution": noise.distribution, "scale": noise.scale}


_SIM_KEYS = {
    "horizon",
    "trajectories",
    "seed",
    "controller",
    "initial_state",
    "initial_availability",
    "noise",
    "cost_horizon",
    "cost_weights",
    "checkpoints",
}


def _parse_sim(spec, path: str) -> tuple[SimConfig, dict]:
    if not isinstance(spec, dict):
        raise ValidationError(f"{path}: expected an object")
    _require_keys(spec, _SIM_KEYS, {"horizon", "trajectories", "seed"}, path)
    noise, noise_cfg = _parse_noise(spec.get("noise"), f"{path}.noise")
    kwargs: dict = dict(
        horizon=_as_int(spec["horizon"], f"{path}.horizon"),
        trajectories=_as_int(spec["trajectories"], f"{path}.trajectories"),
        seed=_as_int(spec["seed"], f"{path}.seed"),
        noise=noise,
    )
    cfg: dict = dict(kwargs)
    cfg["noise"] = noise_cfg
    if "controller" in spec:
        controller = spec["controller"]
        if controller not in CONTROLLERS:
            raise ValidationError(f"{path}.controller: expected one of {CONTROLLERS}, got {controller!r}")
        kwargs["controller"] = cfg["controller"] = controller
    if "initial_state" in spec:
        kwargs["initial_state"] = cfg["initial_state"] = _as_number(spec["initial_state"], f"{path}.initial_state")
    if "initial_availability" in spec:
        kwargs["initial_availability"] = cfg["initial_availability"] = _as_int(
            spec["initial_availability"], f"{path}.initial_availability"
        )
    if "cost_horizon" in spec:
        kwargs["cost_horizon"] = cfg["cost_horizon"] = _as_int(spec["cost_horizon"], f"{path}.cost_horizon")
    if "cost_weights" in spec:
        weights = spec["cost_weights"]
        if not isinstance(weights, list) or len(weights) != 2:
            raise ValidationError(f"{path}.cost_weights: expected [state_weight, input_weight]")
        kwargs["cost_weights"] = (
            _as_number(weights[0], f"{path}.cost_weights[0]"),
            _as_number(weights[1], f"{path}.cost_weights[1]"),
        )
        cfg["cost_weights"] = list(kwargs["cost_weights"])
    if "checkpoints" in spec:
        points = spec["checkpoints"]
        if not isinstance(points, list):
            raise ValidationError(f"{path}.checkpoints: expected a list of step indices")
        kwargs["checkpoints"] = tuple(_as_int(k, f"{path}.checkpoints") for k in points)
        cfg["checkpoints"] = list(kwargs["checkpoints"])
    try:
        sim = SimConfig(**kwargs)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    return sim, cfg


def _parse_sweep(spec, path: str) -> tuple[SweepSpec, dict]:
    if not isinstance(spec, dict):
        raise ValidationError(f"{path}: expected an object")
    _require_keys(spec, {"capacity", "controller"}, {"capacity", "controller"}, path)
    caps = spec["capacity"]
    ctrls = spec["controller"]
    if not isinstance(caps, list) or not caps:
        raise ValidationError(f"{path}.capacity: expected a nonempty list")
    if not isinstance(ctrls, list) or not ctrls:
        raise ValidationError(f"{path}.controller: expected a nonempty list")
    capacities = tuple(_as_int(c, f"{path}.capacity") for c in caps)
    for c in ctrls:
        if c not in CONTROLLERS:
            raise ValidationError(f"{path}.controller: expected entries from {CONTROLLERS}, got {c!r}")
    return (
        SweepSpec(capacities=capacities, controllers=tuple(ctrls)),
        {"capacity": list(capacities), "controller": list(ctrls)},
    )


_TOP_KEYS = {"version", "name", "chain", "plant", "rates", "sim", "sweep"}


def parse_scenario(obj) -> Scenario:
    """Parse and resolve a configuration object into a Scenario."""
    if not isinstance(obj, dict):
        raise ValidationError("top level: expected a JSON object")
    _require_keys(obj, _TOP_KEYS, {"version", "name", "chain", "sim"}, "top level")
    version = obj["version"]
    if version != CONFIG_VERSION:
        raise ValidationError(f"version: expected {CONFIG_VERSION}, got {version!r}")
    name = obj["name"]
    if not isinstance(name, str) or not name:
        raise ValidationError("name: expected a nonempty string")

    chain, chain_cfg = _parse_chain(obj["chain"], "chain")
    plant = plant_cfg = None
    if "plant" in obj and obj["plant"] is not None:
        plant, plant_cfg = _parse_plant(obj["plant"], "plant")
    rates = rates_cfg = None
    if "rates" in obj and obj["rates"] is not None:
        rates, rates_cfg = _parse_rates(obj["rates"], "rates")
    sim, sim_cfg = _parse_sim(obj["sim"], "sim")
    sweep = sweep_cfg = None
    if "sweep" in obj and obj["sweep"] is not None:
        sweep, sweep_cfg = _parse_sweep(obj["sweep"], "sweep")
        if chain_cfg["kind"] not in ("uniform", "qlambda"):
            raise ValidationError("sweep: capacity sweeps require a uniform or qlambda chain")
    if sim.initial_availability > chain.capacity:
        raise ValidationError(
            f"sim.initial_availability: {sim.initial_availability} exceeds chain capacity {chain.capacity}"
        )

    config: dict = {"version": CONFIG_VERSION, "name": name, "chain": chain_cfg, "sim": sim_cfg}
    if plant_cfg is not None:
        config["plant"] = plant_cfg
    if rates_cfg is not None:
        config["rates"] = rates_cfg
    if sweep_cfg is not None:
        config["sweep"] = sweep_cfg
    return Scenario(name=name, chain=chain, plant=plant, rates=rates, sim=sim, sweep=sweep, config=config)


def parse_scenario_text(text: str) -> Scenario:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    return parse_scenario(obj)


def _builtin_config(name: str) -> dict | None:
    sim_defaults = {
        "horizon": 50,
        "trajectories": 10000,
        "seed": DEFAULT_SEED,
        "controller": "anytime",
        "initial_state": 1.0,
        "initial_availability": 0,
        "noise": None,
    }
    if name == "case_study":
        return {
            "version": CONFIG_VERSION,
            "name": "case_study",
            "chain": {"kind": "case_study"},
            "plant": {"kind": "cubic"},
            "sim": dict(sim_defaults),
        }
    match = re.fullmatch(r"qlambda\((\d+)\)", name) or re.fullmatch(r"qlambda(\d+)", name)
    if match:
        cap = int(match.group(1))
        return {
            "version": CONFIG_VERSION,
            "name": f"qlambda({cap})",
            "chain": {"kind": "qlambda", "capacity": cap},
            "plant": {"kind": "cubic"},
            "sim": dict(sim_defaults),
        }
    if name == "fig4":
        return {
            "version": CONFIG_VERSION,
            "name": "fig4",
            "chain": {"kind": "qlambda", "capacity": 5},
            "plant": {"kind": "cubic"},
            "sim": dict(sim_defaults),
            "sweep": {"capacity": [1, 2, 3, 4, 5, 6, 7], "controller": ["ideal", "anytime", "baseline"]},
        }
    return None


def builtin_scenario_names() -> list[str]:
    return ["case_study", "fig4"] + [f"qlambda({c})" for c in range(1, 8)]


def load_scenario(source: str) -> Scenario:
    """Resolve a scenario from a built-in name or a configuration file path."""
    cfg = _builtin_config(source)
    if cfg is not None:
        return parse_scenario(cfg)
    try:
        with open(source, "r", encoding="utf-8") as fp:
            text = fp.read()
    except OSError as exc:
        raise ParseError(f"cannot read configuration {source!r}: {exc}") from exc
    return parse_scenario_text(text)


def resolve_sweep_chain(scenario: Scenario, capacity: int) -> ProcessorChain:
    """Chain for one sweep point, preserving the scenario's chain family."""
    kind = scenario.config["chain"]["kind"]
    if kind == "qlambda":
        return qlambda_chain(capacity)
    if kind == "uniform":
        return uniform_chain(capacity)
    raise ValidationError(f"chain kind {kind!r} cannot be swept over capacities")
