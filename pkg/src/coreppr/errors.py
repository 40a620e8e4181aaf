"""Exception hierarchy shared by every coreppr module."""


class CorePPRError(Exception):
    """Base class for all errors raised by coreppr."""


class GraphFormatError(CorePPRError, ValueError):
    """Malformed edge list or graph construction input."""


class DanglingNodeError(CorePPRError, ValueError):
    """A random walk reached a node with no outgoing edges."""


class ConvergenceError(CorePPRError, RuntimeError):
    """An iterative solver hit its iteration cap."""


class DataFormatError(CorePPRError, ValueError):
    """Malformed feature, label, split, cache or checkpoint file."""


class TrainingError(CorePPRError, RuntimeError):
    """Training produced a non-finite loss."""
