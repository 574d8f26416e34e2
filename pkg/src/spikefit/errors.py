"""Exception hierarchy shared by every fitter."""


class SpikeFitError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(SpikeFitError, ValueError):
    pass


class InsufficientPoints(SpikeFitError, ValueError):
    pass


class DegenerateSubset(SpikeFitError, ValueError):
    """A subset does not determine a unique least-squares model."""


class DegenerateData(SpikeFitError, RuntimeError):
    """Every sampled subset was degenerate up to the retry cap."""


class InvalidGroundTruth(SpikeFitError, ValueError):
    pass


class ConfigError(SpikeFitError, ValueError):
    pass


class ConfigOverflow(ConfigError):
    """A derived fixed-point constant does not fit in the state range."""


class InvalidSeed(SpikeFitError, ValueError):
    pass


class WeightOverflow(SpikeFitError, ValueError):
    """A synaptic weight does not fit in the configured weight width.

    ``entry`` names the offending operator entry, e.g. ``("Q'", 3, 0, 1)``.
    """

    def __init__(self, message, entry=None, value=None):
        super().__init__(message)
        self.entry = entry
        self.value = value


class NonIntegerData(SpikeFitError, ValueError):
    pass


class DegenerateHomography(SpikeFitError, ValueError):
    pass


class InstanceFormatError(SpikeFitError, ValueError):
    """An input file could not be parsed."""
