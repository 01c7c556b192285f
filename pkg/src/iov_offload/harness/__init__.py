"""Experiment drivers, deterministic CSV/SVG outputs, and the CLI."""

from .configio import describe_config_text, load_config_file
from .experiments import (
    ConvergenceResult,
    ExperimentError,
    ExperimentSpec,
    ScalabilityResult,
    evaluate_learner,
    net_policy,
    oracle_gap_table,
    run_convergence,
    run_scalability,
    write_csv,
)
from .svgplot import LineSeries, render_csv_chart, render_line_chart

__all__ = [
    "describe_config_text",
    "load_config_file",
    "ConvergenceResult",
    "ExperimentError",
    "ExperimentSpec",
    "ScalabilityResult",
    "evaluate_learner",
    "net_policy",
    "oracle_gap_table",
    "run_convergence",
    "run_scalability",
    "write_csv",
    "LineSeries",
    "render_csv_chart",
    "render_line_chart",
]
