"""Exception types raised across the package."""


class PehError(Exception):
    """Base class for package errors."""


class BoundsError(PehError, ValueError):
    def __init__(self, field, value, lo, hi):
        self.field = field
        super().__init__(f"{field}={value!r} outside bounds [{lo}, {hi}]")


class GeometryError(PehError, ValueError):
    pass


class DomainError(PehError, ValueError):
    pass


class AssemblyError(PehError):
    pass


class MeshError(AssemblyError):
    pass


class EigenError(PehError, ArithmeticError):
    pass


class StiffnessError(PehError, ArithmeticError):
    def __init__(self, t, message="step size collapsed"):
        self.time = t
        super().__init__(f"{message} at t={t:.6g} s")


class DataFormatError(PehError, ValueError):
    pass


class DataError(PehError, ValueError):
    def __init__(self, row, message="non-finite value"):
        self.row = row
        super().__init__(f"{message} at row {row}")


class ClusteringError(PehError, ValueError):
    pass


class ConfigError(PehError, ValueError):
    pass
