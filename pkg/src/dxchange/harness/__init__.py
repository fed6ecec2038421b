"""Experiment configuration, CSV emission, CLI and the socket peer mode."""

from .config import ExperimentConfig, load_config, parse_config
from .experiment import build_protocol, peer_session, run_experiment, write_csv

__all__ = ["ExperimentConfig", "load_config", "parse_config", "build_protocol", "peer_session",
           "run_experiment", "write_csv"]
