"""Scenario configuration, run orchestration and the command line."""
from .config import ConfigError, ScenarioConfig, load_config, parse_config_text
from .runner import BlowupSignal, RunError, RunSummary, Simulation, detect_blowup, run

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "parse_config_text", "BlowupSignal",
           "RunError", "RunSummary", "Simulation", "detect_blowup", "run"]
