"""Command line, configuration and file formats."""
from .config import ConfigError, DataSource, RunConfig, dump_config, load_config
from .io import FitReport, read_fit_report, read_task_csv, write_fit_report, write_task_csv
from .main import main
from .svg import emit_svg_diagnostics, qq_data

__all__ = [
    "ConfigError",
    "DataSource",
    "FitReport",
    "RunConfig",
    "dump_config",
    "emit_svg_diagnostics",
    "load_config",
    "main",
    "qq_data",
    "read_fit_report",
    "read_task_csv",
    "write_fit_report",
    "write_task_csv",
]
