"""Joint discrete antenna positioning and downlink beamforming toolkit."""

from .beamforming import BeamformingNet, BfConfig, beamformer_from_structure
from .channel import (ChannelConfig, ChannelDataset, SamplingGrid, build_grid,
                      generate_dataset, load_dataset, save_dataset)
from .config import ExperimentConfig, load_config
from .positioning import PolicyConfig, PositioningPolicy
from .solvers import (WmmseConfig, exhaustive_oracle, random_feasible_positioning,
                      strongest_positioning, wmmse, zero_forcing)
from .system import (RateReport, check_feasibility, compute_rates, feasible_mask,
                     select_channel)
from .training import TrainConfig, evaluate_policy, init_state, train_loop

__all__ = [
    "BeamformingNet", "BfConfig", "beamformer_from_structure",
    "ChannelConfig", "ChannelDataset", "SamplingGrid", "build_grid",
    "generate_dataset", "load_dataset", "save_dataset",
    "ExperimentConfig", "load_config",
    "PolicyConfig", "PositioningPolicy",
    "WmmseConfig", "exhaustive_oracle", "random_feasible_positioning",
    "strongest_positioning", "wmmse", "zero_forcing",
    "RateReport", "check_feasibility", "compute_rates", "feasible_mask",
    "select_channel",
    "TrainConfig", "evaluate_policy", "init_state", "train_loop",
]

__version__ = "0.1.0"
