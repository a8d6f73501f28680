"""Distributed expectation propagation for multi-sensor multi-object tracking."""

from .baseline import PooledMeasurements, centralized_gibbs_step
from .config import ConfigError, ExperimentConfig, MethodSpec, load_config, parse_config_dict
from .ep import (
    EPConfig,
    EPDivergenceError,
    EPResult,
    GlobalApproximation,
    NaturalBlocks,
    SiteApproximation,
    cavity,
    combine_global,
    init_sites,
    moment_match,
    run_ep_timestep,
    site_update,
)
from .gaussian import (
    GaussianBelief,
    GaussianMixture,
    InvalidCavityError,
    NaturalParams,
    NotPositiveDefiniteError,
    mixture_moments,
    natural_add,
    natural_sub,
    sample_gaussian,
    to_moment,
    to_natural,
)
from .gibbs import (
    GibbsConfig,
    TiltedMixture,
    run_tilted_gibbs,
    sample_association_conditional,
    sample_state_conditional,
)
from .metrics import AggregateStats, GospaConfig, GospaResult, aggregate, assignment_solve, gospa
from .model import (
    DynamicsModel,
    ModelParams,
    Rect,
    Scenario,
    SensorModel,
    association_prior_probs,
    dataset1_params,
    dataset2_params,
    generate_scenario,
    initial_beliefs,
    load_scenario,
    predict_prior,
    save_scenario,
    simulate_measurements,
    simulate_trajectories,
)
from .network import (
    DisconnectedTopologyError,
    FloodOnce,
    FloodToConsensus,
    FullExchange,
    Topology,
    ci_count,
    exchange_full,
    flood_once,
    flood_until_consensus,
    generate_topology,
)
from .runner import (
    ResultsRecord,
    read_results_csv,
    render_table,
    run_experiment,
    run_method_on_scenario,
    score_scenario,
    summarize_records,
    write_results_csv,
)

__version__ = "0.1.0"
