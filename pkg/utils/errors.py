"""
Error hierarchy - Every failure the toolkit raises derives from PiVaeError
"""


class PiVaeError(Exception):
    """Base class for all toolkit errors"""


class ShapeError(PiVaeError, ValueError):
    """Array extents do not agree"""


class StateError(PiVaeError, RuntimeError):
    """Operation called in the wrong state (e.g. backward without a recorded graph)"""


class NumericError(PiVaeError, ArithmeticError):
    """Non-finite value or out-of-domain numeric input"""


class ConfigError(PiVaeError, ValueError):
    """Invalid configuration"""


class DataError(PiVaeError, ValueError):
    """Invalid dataset content"""


class LabelError(PiVaeError, ValueError):
    """Label outside its declared support"""


class ArgumentError(PiVaeError, ValueError):
    """Invalid combination of call arguments"""


class DegenerateInputError(PiVaeError, ValueError):
    """Input sits on a boundary where the inverse is undefined"""


class NotInImageError(PiVaeError):
    """Rate vector is not in the image of the decoder"""


class UnsupportedError(PiVaeError, NotImplementedError):
    """Requested variant is not implemented"""
