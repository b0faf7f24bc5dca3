class MagflowError(Exception):
    """Base class for all errors raised by the library"""

class GeometryError(MagflowError):
    """Invalid metric, missing primitive or unavailable geometric constant"""

class ClassError(MagflowError):
    """Operation not defined on the requested free homotopy class"""

class ConstantsError(MagflowError):
    """A growth or isoperimetric constant cannot be computed"""

class SolverError(MagflowError):
    """Descent or Newton refinement failed"""

    def __init__(self, message: str, diagnostics: dict = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

class LegendreError(MagflowError):
    """Per-fiber Legendre solve did not converge"""

class FlowError(MagflowError):
    """Hamiltonian flow integration produced a non-finite state"""

    def __init__(self, message: str, step: int = -1):
        super().__init__(message)
        self.step = step

class ConfigError(MagflowError):
    """Scenario configuration could not be parsed or validated"""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(message)
        self.pointer = pointer
