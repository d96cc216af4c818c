"""Exception hierarchy shared by every module of the package."""


class IGTError(Exception):
    """Base class; the CLI turns any of these into a one-line diagnostic."""


class ParseError(IGTError):
    pass


class EmptyStructureError(ParseError):
    pass


class ManifestError(IGTError):
    pass


class GraphError(IGTError):
    pass


class EmptyPocketError(GraphError):
    pass


class NoContactError(GraphError):
    pass


class EmptyGraphError(GraphError):
    pass


class ShapeError(IGTError, ValueError):
    pass


class NumericFaultError(IGTError, FloatingPointError):
    pass


class StaleTapeError(IGTError, RuntimeError):
    pass


class UndefinedMetricError(IGTError, ValueError):
    pass


class SplitError(IGTError):
    pass


class ConfigError(IGTError):
    pass


class TrainingError(IGTError):
    pass


class CheckpointError(IGTError):
    pass
