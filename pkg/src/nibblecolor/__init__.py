"""Semi-random (nibble) coloring of triangle-free graphs."""

from .baselines import Coloring, dsatur_color, greedy_color, verify_proper
from .engine import (
    ColoringState,
    CompletionFailure,
    CompletionPolicy,
    EmptyPalette,
    NotTriangleFree,
    complete_coloring,
    default_params,
    init_state,
    run_rounds,
)
from .graph import Graph, GraphFamilySpec, build_graph, generate, is_triangle_free, read_dimacs, write_dimacs
from .runner import ExperimentConfig, ExperimentReport, compare_baselines, run_experiment
from .schedule import Schedule, ScheduleParams, build_schedule, error_budget, feasibility_report

__version__ = "0.1.0"
