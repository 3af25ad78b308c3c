"""Scenario orchestration, accuracy tables, maps and the tree-depth demo."""

from .config import ConfigError, ScenarioConfig, load_config, parse_config
from .heatmap import diverging_color, render_heatmap
from .matrix import SUMMARY_HEADER, run_matrix, table_matrix, write_summary, write_tables
from .scenario import ScenarioResult, StageError, build_points, builtin_points, run_scenario
from .treedemo import tree_depth_demo

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "load_config",
    "parse_config",
    "diverging_color",
    "render_heatmap",
    "SUMMARY_HEADER",
    "run_matrix",
    "table_matrix",
    "write_summary",
    "write_tables",
    "ScenarioResult",
    "StageError",
    "build_points",
    "builtin_points",
    "run_scenario",
    "tree_depth_demo",
]
