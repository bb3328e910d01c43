"""Robust joint active/passive beamforming for IRS-assisted cell-free
MIMO downlink networks under statistical CSI uncertainty."""

from .scenario import (
    SystemConfig,
    Placement,
    ChannelEstimate,
    ErrorSample,
    default_placement,
    generate_channels,
    sample_csi_error,
)
from .rate import (
    BeamformerSet,
    AuxiliaryState,
    avg_sum_rate_mc,
    deterministic_rate,
    expectation_closed_form,
    instant_sum_rate,
    nats_to_bits,
    surrogate_f1,
)
from .optim import init_beamformers, run_bcd
from .harness import ExperimentSpec, load_config, run_experiment, write_results

__version__ = "0.1.0"
