"""Exception hierarchy for the etcsim package."""


class EtcSimError(Exception):
    """Base class for all etcsim errors."""


class DesignError(EtcSimError):
    """A design-time requirement is infeasible (e.g. W <= 0, Abar not Hurwitz)."""


class ConfigError(EtcSimError):
    """A configuration file is missing, malformed, or inconsistent."""


class CodecError(EtcSimError):
    """Encoder/decoder protocol violation (overlapping packets, bad index, ...)."""


class CertificationError(EtcSimError):
    """A certified runtime invariant was breached mid-run.

    Carries the partial trace (when available) so the failure can be inspected.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
