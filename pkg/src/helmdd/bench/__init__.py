"""Benchmark problems, sweeps and result tables."""
from .experiment import ExperimentGrid, SolverSettings, run_case, run_experiment
from .problems import (
    ConstantVelocity,
    LayeredVelocity,
    MarmousiLike,
    ProblemSpec,
    VelocityRaster,
    build_problem,
    load_velocity_raster,
)
from .tables import TableLayout, render_table

__all__ = [
    "ConstantVelocity",
    "ExperimentGrid",
    "LayeredVelocity",
    "MarmousiLike",
    "ProblemSpec",
    "SolverSettings",
    "TableLayout",
    "VelocityRaster",
    "build_problem",
    "load_velocity_raster",
    "render_table",
    "run_case",
    "run_experiment",
]
