"""Joint active-user detection and channel estimation for multi-panel massive MIMO."""

from .array import (ActivityPattern, ArrayGeometry, OfdmConfig, PathParams, build_channel_matrix,
                    draw_activity, draw_channels, multi_panel_response, steering_factor,
                    synth_user_channel)
from .baseline import GreedyConfig, somp
from .detect import DetectorConfig, aud_error_prob, bi_ad, cg_ad, nmse, threshold_fn
from .frontend import (Combiner, DenseOperator, MeasurementSet, PilotBook, SensingOperator, assemble_sensing,
                       build_combiner, build_sensing, gen_pilots, simulate_received)
from .harness import ExperimentConfig, load_config, run_sweep, symbol_latency
from .solver import SolverConfig, SolverDivergence, init_params, run

__all__ = [
    "ActivityPattern", "ArrayGeometry", "OfdmConfig", "PathParams", "build_channel_matrix",
    "draw_activity", "draw_channels", "multi_panel_response", "steering_factor",
    "synth_user_channel", "GreedyConfig", "somp", "DetectorConfig", "aud_error_prob", "bi_ad",
    "cg_ad", "nmse", "threshold_fn", "Combiner", "DenseOperator", "MeasurementSet", "PilotBook",
    "SensingOperator", "assemble_sensing", "build_combiner", "build_sensing", "gen_pilots",
    "simulate_received", "ExperimentConfig", "load_config", "run_sweep", "symbol_latency",
    "SolverConfig", "SolverDivergence", "init_params", "run",
]
