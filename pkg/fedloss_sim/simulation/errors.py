class SimulationError(Exception):
    """Base class for every error raised by the simulator."""


class ShapeError(SimulationError, ValueError):
    """Parameter or sample dimensions do not match the model spec."""


class TrainingDivergenceError(SimulationError, ArithmeticError):
    """Local training produced a non-finite loss or gradient."""


class AggregationError(SimulationError, ValueError):
    """Client updates cannot be aggregated (non-finite loss, count mismatch)."""


class ConfigurationError(SimulationError, ValueError):
    """Invalid configuration, config file, or client pool."""


class UndefinedMetricError(SimulationError, ValueError):
    """Metric is undefined for the input (single class) or unknown by name."""


class DegenerateDataError(SimulationError, RuntimeError):
    """Bootstrap could not draw a resample containing both classes."""


class CohortFormatError(SimulationError, ValueError):
    """A cohort file line violates the cohort invariants."""
