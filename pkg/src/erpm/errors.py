class ERPMError(Exception):
    """Base class for model errors."""


class EmptySupportError(ERPMError):
    """No partition satisfies the size bounds."""


class EnumerationCapError(ERPMError):
    """Exact enumeration requested above the actor cap."""


class NotSizeOnlyError(ERPMError):
    """A recursion was asked for a statistic that depends on more than block sizes."""


class MLEAtInfinityError(ERPMError):
    """Observed statistics lie on the boundary of the achievable set; the MLE diverges."""


class DegenerateStatisticError(ERPMError):
    """A statistic is constant (or statistics are collinear) over the sampled support."""


class DegeneracyError(ERPMError):
    """Parameter iterates diverged; the model is likely degenerate or misspecified."""


class UnreachableSupportError(ERPMError):
    """The restricted support cannot be explored from the initial partition."""


class BridgeOverlapError(ERPMError):
    """Adjacent path-sampling bridges barely overlap; more bridges are needed."""
