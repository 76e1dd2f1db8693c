"""Exception types shared across the toolkit."""


class PanopticError(Exception):
    """Base class for all toolkit errors."""


class FormatError(PanopticError):
    """Malformed input file or payload. Readers reject, they never repair."""


class CapacityError(FormatError):
    """Input exceeds a hard encoding bound (e.g. too many segments for the raster)."""


class UnknownClassError(PanopticError):
    """A segment references a class id absent from the registry."""
