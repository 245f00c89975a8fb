class CspineError(Exception):
    """
    Base class for every error raised by the cspine package.
    """


class ConfigError(CspineError, ValueError):
    pass


class SchemaError(CspineError, ValueError):
    pass


class DimensionMismatch(CspineError, ValueError):
    pass


class NonFinite(CspineError, ValueError):
    pass


class BinaryViolation(CspineError, ValueError):
    pass


class DegenerateColumn(CspineError, ValueError):
    pass


class DegenerateDoF(CspineError, ValueError):
    pass


class ZeroVariance(CspineError, ValueError):
    pass


class FoldTooSmall(CspineError, ValueError):
    pass


class SolverDiverged(CspineError, RuntimeError):
    pass


class SingularAfterRidge(CspineError, RuntimeError):
    pass


class AllZeroGamma(CspineError, RuntimeError):
    pass


class NonPdOmega(CspineError, RuntimeError):
    def __init__(self, subject: int, min_eigenvalue: float):
        super().__init__(f"Precision matrix of subject {subject} is not safely positive definite (min eigenvalue {min_eigenvalue:.3e})")
        self.subject = subject
        self.min_eigenvalue = min_eigenvalue

    def __reduce__(self):
        return self.__class__, (self.subject, self.min_eigenvalue)


class NodeFitError(CspineError, RuntimeError):
    """
    Wraps a failure of one nodewise regression with the node index attached.
    """
    def __init__(self, node: int, cause: Exception):
        super().__init__(f"Node {node}: {cause}")
        self.node = node
        self.cause = cause

    def __reduce__(self):
        return self.__class__, (self.node, self.cause)
