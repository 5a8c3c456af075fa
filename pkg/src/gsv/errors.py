"""Exception hierarchy. Every error carries a machine-readable ``category``."""


class GSVError(Exception):
    category = "GSV_ERROR"

    def __init__(self, message="", **context):
        super().__init__(message)
        self.context = context

    def to_dict(self):
        out = {"error": self.category, "message": str(self)}
        out.update({k: v for k, v in self.context.items() if v is not None})
        return out


class UnsupportedKernel(GSVError):
    category = "UNSUPPORTED_KERNEL"


class NotPSD(GSVError):
    category = "NOT_PSD"


class NotSelfSimilar(GSVError):
    category = "NOT_SELF_SIMILAR"


class DegenerateEstimate(GSVError):
    category = "DEGENERATE_ESTIMATE"


class DegenerateCorrelation(GSVError):
    category = "DEGENERATE_CORRELATION"


class WrongRegime(GSVError):
    category = "WRONG_REGIME"


class GrowthViolation(GSVError):
    category = "GROWTH_VIOLATION"


class ZeroRate(GSVError):
    category = "ZERO_RATE"


class PriceOutOfRange(GSVError):
    category = "PRICE_OUT_OF_RANGE"


class Unclassified(GSVError):
    category = "UNCLASSIFIED"


class WitnessNotSmooth(GSVError):
    category = "WITNESS_NOT_SMOOTH"


class NonpositiveVariance(GSVError):
    category = "NONPOSITIVE_VARIANCE"


class InapplicableGamma(GSVError):
    category = "INAPPLICABLE_GAMMA"


class ConfigInvalid(GSVError):
    category = "CONFIG_INVALID"

    def __init__(self, field, reason):
        super().__init__(f"{field}: {reason}", field=field)
        self.field = field
