"""Buffered anytime control under Markov-modulated processor availability.

Library layout:

* :mod:`anyctrl.chain`     - availability Markov chain (validation, sampling);
* :mod:`anyctrl.aggregate` - joint (availability, buffer-length) chain and
  first-return-time distributions;
* :mod:`anyctrl.certify`   - stochastic-stability certificates and
  stability-region boundaries;
* :mod:`anyctrl.loop`      - plants, the buffered controller state machine,
  and the baseline controller;
* :mod:`anyctrl.mc`        - Monte Carlo ensembles, empirical costs and
  return times, the noise-robustness experiment;
* :mod:`anyctrl.scenarios` - configuration schema and built-in scenarios;
* :mod:`anyctrl.report`    - optional figure rendering;
* :mod:`anyctrl.cli`       - command-line frontend.
"""

__version__ = "0.1.0"

from .aggregate import AggregateChain, ReturnPmf, build_aggregate, delta_pmf, return_pmf_bruteforce, tau_pmf
from .certify import (
    Certificate,
    ConservatismGap,
    LyapunovRates,
    RegionPoint,
    corollary15_gap,
    f_bar,
    omega,
    region_boundary,
    theta,
    upsilon,
    upsilon_matrix_oracle,
    upsilon_profile,
)
from .chain import ProcessorChain, sample_next, uniform_chain, validate_chain
from .loop import (
    AnytimeState,
    PlantModel,
    RobustnessParams,
    anytime_step,
    baseline_step,
    builtin_cubic_plant,
    builtin_linear_plant,
)
from .mc import (
    NoiseSpec,
    SimConfig,
    SimTrace,
    empirical_cost,
    empirical_return_pmf,
    robustness_experiment,
    run_ensemble,
)
from .scenarios import Scenario, case_study_chain, load_scenario, parse_scenario, qlambda_chain

__all__ = [
    "__version__",
    "AggregateChain",
    "AnytimeState",
    "Certificate",
    "ConservatismGap",
    "LyapunovRates",
    "NoiseSpec",
    "PlantModel",
    "ProcessorChain",
    "RegionPoint",
    "ReturnPmf",
    "RobustnessParams",
    "Scenario",
    "SimConfig",
    "SimTrace",
    "anytime_step",
    "baseline_step",
    "build_aggregate",
    "builtin_cubic_plant",
    "builtin_linear_plant",
    "case_study_chain",
    "corollary15_gap",
    "delta_pmf",
    "empirical_cost",
    "empirical_return_pmf",
    "f_bar",
    "load_scenario",
    "omega",
    "parse_scenario",
    "qlambda_chain",
    "region_boundary",
    "return_pmf_bruteforce",
    "robustness_experiment",
    "run_ensemble",
    "sample_next",
    "tau_pmf",
    "theta",
    "uniform_chain",
    "upsilon",
    "upsilon_matrix_oracle",
    "upsilon_profile",
    "validate_chain",
]
