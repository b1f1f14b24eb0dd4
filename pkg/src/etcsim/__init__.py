"""Event-triggered stabilization of LTI plants under bounded bit rates.

The package covers the full pipeline: controller/trigger design constants,
the dynamic hypercube quantization codec (synchronized encoder/decoder state
machines), three trigger regimes (instantaneous with finite or bounded bits,
non-instantaneous with bounded bits), a deterministic hybrid simulator, and
necessary/sufficient data-rate accounting, plus a CLI that reproduces the
reference simulation study.
"""

__version__ = "0.1.0"

from .errors import (
    CertificationError,
    CodecError,
    ConfigError,
    DesignError,
    EtcSimError,
)
from .mat_core import (
    exp_rise,
    inf_norm,
    is_hurwitz,
    mat_exp,
    solve_lyapunov,
    spectral_norm,
    sym_eig_extrema,
)
from .design import (
    DesignConstants,
    PerformanceSpec,
    PlantSpec,
    derive_constants,
    validate_assumptions,
)
from .triggers import Scenario, TriggerSnapshot, min_bits, trigger_check, trigger_levels
from .codec import CodecState, Packet, dequantize, quantize, states_match
from .simulate import (
    DelayModel,
    Disturbance,
    ScenarioConfig,
    SimTrace,
    TransmissionEvent,
    integrate_step,
    run,
)
from .rates import (
    RateReport,
    cumulative_bits,
    necessary_asymptotic_rate,
    necessary_bits,
    rate_report,
    realized_interp,
    sufficient_bits_inst,
    sufficient_bits_noninst,
    sufficient_pk_bound_general,
    write_rates_csv,
)
from .config import (
    ResolvedConfig,
    RunManifest,
    config_digest,
    constants_dump,
    derive_from_config,
    load_config,
    load_raw,
    resolve_config,
)

__all__ = [
    "__version__",
    "EtcSimError",
    "DesignError",
    "ConfigError",
    "CodecError",
    "CertificationError",
    "mat_exp",
    "exp_rise",
    "sym_eig_extrema",
    "spectral_norm",
    "inf_norm",
    "solve_lyapunov",
    "is_hurwitz",
    "PlantSpec",
    "PerformanceSpec",
    "DesignConstants",
    "derive_constants",
    "validate_assumptions",
    "Scenario",
    "TriggerSnapshot",
    "trigger_levels",
    "trigger_check",
    "min_bits",
    "Packet",
    "CodecState",
    "quantize",
    "dequantize",
    "states_match",
    "Disturbance",
    "DelayModel",
    "ScenarioConfig",
    "TransmissionEvent",
    "SimTrace",
    "integrate_step",
    "run",
    "RateReport",
    "necessary_bits",
    "necessary_asymptotic_rate",
    "sufficient_bits_inst",
    "sufficient_bits_noninst",
    "sufficient_pk_bound_general",
    "cumulative_bits",
    "realized_interp",
    "rate_report",
    "write_rates_csv",
    "ResolvedConfig",
    "RunManifest",
    "config_digest",
    "constants_dump",
    "derive_from_config",
    "load_config",
    "load_raw",
    "resolve_config",
]
