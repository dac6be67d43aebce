class MARError(Exception):
    """
    Base class for every failure raised by the toolkit.

    The CLI maps `exit_code` to the process exit status.
    """
    exit_code = 1


class ConfigError(MARError):
    exit_code = 2


class GeometryError(ConfigError, ValueError):
    pass


class DataError(MARError):
    exit_code = 3


class ShapeError(DataError, ValueError):
    pass


class UnitError(DataError, ValueError):
    pass


class EmptyMaskError(DataError):
    pass


class TraceBoundaryError(DataError):
    """A metal-trace run touches the first or last detector bin of a view."""
    pass


class DivergenceError(MARError):
    exit_code = 4
