"""Exception hierarchy shared by all solvers."""


class QHAError(Exception):
    """Base class for every error raised by the package."""


class NodeError(QHAError):
    """Density fell below the node threshold inside the region of interest."""


class SupportError(QHAError):
    """A trajectory or sample left the support of the field it samples."""


class StabilityError(QHAError):
    """The wave packet reached the Dirichlet wall of the grid."""


class ResolutionError(QHAError):
    """A transition kernel is too narrow for the phase-space mesh."""


class MassLossError(QHAError):
    """Probability mass leaked through the boundary of the phase-space mesh."""


class InsufficientSamples(QHAError):
    """Too few samples for a statistically meaningful estimate."""


class ConfigError(QHAError):
    """Invalid scenario configuration; the message names the key path."""


class MissingColumn(QHAError):
    """A result file lacks a column needed for plot-data emission."""
