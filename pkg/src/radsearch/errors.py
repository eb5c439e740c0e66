"""Exception hierarchy shared across the package.

Every error carries a stable ``code`` string so the command-line front end can
emit machine-parsable diagnostics and map failures onto exit codes.
"""


class RadSearchError(Exception):
    code = "error"
    exit_code = 2


class ConfigError(RadSearchError, ValueError):
    code = "config"
    exit_code = 2


class ParameterError(ConfigError):
    code = "parameter"


class DimensionError(RadSearchError, ValueError):
    code = "dimension"
    exit_code = 2


class RasterKindError(RadSearchError, TypeError):
    code = "raster_kind"
    exit_code = 2


class FormatError(RadSearchError, ValueError):
    """Malformed input file. ``lineno`` is 1-based when known."""

    code = "format"
    exit_code = 4

    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if lineno is not None:
            where.append(f"line {lineno}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class DegenerateDisparityError(RadSearchError, ValueError):
    code = "degenerate_disparity"


class ProximityError(RadSearchError, ValueError):
    code = "proximity"


class EmptyInputError(RadSearchError, ValueError):
    code = "empty_input"
    exit_code = 2


class UndefinedStatisticError(RadSearchError, ValueError):
    code = "undefined_statistic"
    exit_code = 2


class EndpointError(RadSearchError, ValueError):
    code = "endpoint"
    exit_code = 3


class NoPathError(RadSearchError):
    """Goal unreachable. ``explored`` is the number of nodes settled before the frontier ran dry."""

    code = "no_path"
    exit_code = 3

    def __init__(self, message, explored=0):
        self.explored = explored
        super().__init__(f"{message} (explored {explored} nodes, frontier exhausted)")


class ContractError(RadSearchError, ValueError):
    code = "contract"


class BoundsError(RadSearchError, ValueError):
    code = "bounds"
