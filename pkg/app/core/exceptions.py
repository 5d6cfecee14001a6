class SimulationError(Exception):
    """
    Base class for errors raised by the sensing and estimation services.
    """


class ConfigurationError(SimulationError, ValueError):
    """
    Invalid experiment configuration: bad grid, unknown keys, out-of-range values.
    """


class GeometryError(SimulationError, ValueError):
    """
    Geometric quantity undefined for the given points (e.g. coincident anchor and point).
    """


class SceneGenerationError(SimulationError):
    """
    Scene placement could not satisfy its constraints within the retry budget.
    """
