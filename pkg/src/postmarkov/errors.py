"""Exception types shared across the package."""


class PostMarkovError(Exception):
    """Base class for all package-specific errors."""


class StateInvariantError(PostMarkovError):
    """A density matrix violates Hermiticity, unit trace or positivity."""


class DegenerateSteadyStateError(PostMarkovError):
    """The generator kernel is not one-dimensional; no unique steady state."""


class GridMismatchError(PostMarkovError):
    """A tabulated kernel and an integrator disagree on the time step."""


class RenewalStructureError(PostMarkovError):
    """A channel set does not define a renewal measurement.

    ``channel_index`` names the first offending channel.
    """

    def __init__(self, message, channel_index=None):
        super().__init__(message)
        self.channel_index = channel_index


class ClosureError(PostMarkovError):
    """The bipartite detection transformation has no closed system form."""


class HorizonError(PostMarkovError):
    """A waiting-time table could not be extended far enough."""


class UsageError(PostMarkovError):
    """Invalid run configuration; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
