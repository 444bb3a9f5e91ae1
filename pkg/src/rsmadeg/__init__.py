"""Beamforming toolkit for RIS-assisted rate-splitting downlinks with
hardware impairments and imperfect successive interference cancellation.

The toolkit evaluates common/private SINRs and rates, optimizes RSMA and
SDMA beamformers, and certifies that dropping the common stream never hurts
private-stream SINRs, which drives RSMA to SDMA as SIC fails.
"""

__version__ = "0.1.0"

from .errors import DimensionError, SpecError, ValidationError
from .channel import (
    ChannelInstance,
    RayleighModel,
    Topology,
    cascaded_channel,
    generate_instance,
)
from .link import (
    BeamformerSet,
    ImpairmentProfile,
    LinkMetrics,
    aggregate_gram,
    compute_metrics,
    phi_c,
    phi_p,
    sdma_metrics,
    sinr_common,
    sinr_private,
)
from .optimize import (
    OptimizationResult,
    OptimizerConfig,
    evaluate_utility,
    optimize_rsma,
    optimize_sdma,
    power_split_oracle,
    project_power,
    random_search_oracle,
    utility_gradient,
)
from .verify import (
    DegenerationCertificate,
    SweepResult,
    certify_instance,
    degeneration_verdict,
    delta_sweep,
    zero_common,
)

__all__ = [
    "BeamformerSet",
    "ChannelInstance",
    "DegenerationCertificate",
    "DimensionError",
    "ImpairmentProfile",
    "LinkMetrics",
    "OptimizationResult",
    "OptimizerConfig",
    "RayleighModel",
    "SpecError",
    "SweepResult",
    "Topology",
    "ValidationError",
    "aggregate_gram",
    "cascaded_channel",
    "certify_instance",
    "compute_metrics",
    "degeneration_verdict",
    "delta_sweep",
    "evaluate_utility",
    "generate_instance",
    "optimize_rsma",
    "optimize_sdma",
    "phi_c",
    "phi_p",
    "power_split_oracle",
    "project_power",
    "random_search_oracle",
    "sdma_metrics",
    "sinr_common",
    "sinr_private",
    "utility_gradient",
    "zero_common",
]
