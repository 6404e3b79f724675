"""Exception hierarchy shared by every xrisk module."""


class XRiskError(Exception):
    """Base class for domain errors (CLI exit status 1)."""


class ConfigurationError(XRiskError):
    """Invalid configuration or precondition (CLI exit status 2)."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class InputError(XRiskError):
    pass


class NumericalError(XRiskError):
    pass


class SingularFitError(XRiskError):
    pass


class UndefinedAttentionError(XRiskError):
    pass


class NotComputableError(XRiskError):
    pass


class SpecError(XRiskError):
    pass


class CheckpointError(XRiskError):
    pass


class TrainingError(XRiskError):
    def __init__(self, message, epoch):
        super().__init__(f"{message} (epoch {epoch})")
        self.epoch = epoch
