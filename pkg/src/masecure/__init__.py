"""Secure downlink design for RIS-aided movable-antenna MIMO with hardware impairments."""
from .config import SystemConfig, default_config, load_config
from .exceptions import (ConfigError, DomainError, InfeasibleError, NumericalError,
                         StageError)
from .geometry import ChannelSet, Geometry, build_channels, sample_channel_errors
from .pipeline import Scenario, algorithm1, evaluate_selection, full_pipeline
from .signal import BeamformerState, PositionSelection, RateReport, rate_report

__version__ = "0.1.0"
