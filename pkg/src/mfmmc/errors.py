"""Exception hierarchy for the pricing engine."""


class MFMMCError(Exception):
    """Base class for all engine errors."""


class ModelEvaluationError(MFMMCError):
    """A coefficient evaluated to a non-finite value."""


class SingularJumpCoefficientError(MFMMCError):
    """The z-derivative of the jump amplitude vanished where a weight divides by it."""


class DegenerateVariationError(MFMMCError):
    """The first-variation process hit (or came too close to) zero."""


class NumericalIntegrationError(MFMMCError):
    pass


class LocalizationDegenerateError(MFMMCError):
    """Optimal localization parameter is undefined (all target values vanish)."""


class EstimatorBreakdownError(MFMMCError):
    """Too many conditioning points had a degenerate denominator."""


class FDInstabilityError(MFMMCError):
    pass


class UnsupportedModelError(MFMMCError):
    pass


class ConfigError(MFMMCError):
    pass
