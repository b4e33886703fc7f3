"""Exception hierarchy shared by the library and the CLI."""


class HoughVPError(Exception):
    """Base class for all library errors."""


class DimensionError(HoughVPError, ValueError):
    """Array shape or size does not satisfy an operation's precondition."""


class OutOfQuadrantError(HoughVPError, ValueError):
    """A segment slope falls outside the angular range of its Hough family."""


class DegenerateError(HoughVPError, ArithmeticError):
    """Singular geometry: zero denominators, collinear points, zero-area frames."""


class RegimeError(HoughVPError, ValueError):
    """Input violates the supported regime (e.g. vanishing point inside the image)."""


class NoStructureError(HoughVPError, ValueError):
    """Image carries no usable edge structure."""


class InvalidMapError(HoughVPError, ValueError):
    """Accumulator map has no finite values."""


class UnrepresentableTargetError(HoughVPError, ValueError):
    """Vanishing point maps outside the network output grid."""


class TrainingDivergenceError(HoughVPError, FloatingPointError):
    """Non-finite gradients or loss during training."""
