"""Common utilities for the neural Q-learning laboratory."""

import functools
import logging
import os
from typing import Optional

from dotenv import load_dotenv

DEFAULT_MAX_PARAMS = 2_000_000

logger = logging.getLogger(__name__)


class NeuralQError(ValueError):
    """Base class for every error raised by the laboratory."""


# Configuration


class ConfigError(NeuralQError):
    pass


class ConfigParseError(ConfigError):
    def __init__(self, path: str, line: int, column: int, message: str):
        super().__init__(f"{path}:{line}:{column}: {message}")
        self.path = path
        self.line = line
        self.column = column


class UnknownKey(ConfigError):
    def __init__(self, key: str, section: str = ""):
        where = f" in section '{section}'" if section else ""
        super().__init__(f"Unknown configuration key '{key}'{where}")
        self.key = key
        self.section = section


class MissingRequired(ConfigError):
    def __init__(self, key: str, section: str = ""):
        where = f" in section '{section}'" if section else ""
        super().__init__(f"Missing required configuration key '{key}'{where}")
        self.key = key
        self.section = section


# MDP validation


class MdpValidationError(NeuralQError):
    pass


class NonStochasticRow(MdpValidationError):
    pass


class RewardOutOfRange(MdpValidationError):
    pass


class BadDiscount(MdpValidationError):
    pass


class InvalidState(MdpValidationError):
    pass


# Markov chain structure


class ChainStructureError(NeuralQError):
    pass


class ReducibleChain(ChainStructureError):
    pass


class PeriodicChain(ChainStructureError):
    pass


# Numerics


class NonConvergence(NeuralQError):
    pass


class FitDegenerate(NeuralQError):
    def __init__(self, message: str, curve=None):
        super().__init__(message)
        self.curve = curve


class ShapeMismatch(NeuralQError):
    pass


class WidthCapExceeded(NeuralQError):
    pass


class DirectionMissing(NeuralQError):
    pass


class SigmaSingular(NeuralQError):
    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class InvalidArgument(NeuralQError):
    pass


# Persisted data


class SchemaMismatch(NeuralQError):
    pass


class NoDataError(SchemaMismatch):
    pass


def resolve_max_params(max_params: Optional[int] = None) -> int:
    """Resolve the parameter-count cap for a network.

    Args:
        max_params: Optional explicit cap. If None, uses NEURALQ_MAX_PARAMS
            from the environment (a .env file is honoured), falling back to
            DEFAULT_MAX_PARAMS.

    Returns:
        The cap as a positive integer

    Raises:
        InvalidArgument: If the resolved cap is not a positive integer
    """
    if max_params is None:
        load_dotenv()
        raw = os.getenv("NEURALQ_MAX_PARAMS")
        if not raw:
            return DEFAULT_MAX_PARAMS
        try:
            max_params = int(raw)
        except ValueError:
            raise InvalidArgument(f"NEURALQ_MAX_PARAMS must be an integer, got {raw!r}")
    if max_params < 1:
        raise InvalidArgument(f"Parameter cap must be positive, got {max_params}")
    return max_params


def configure_logging(level: Optional[str] = None) -> None:
    """Configure root logging from an explicit level or NEURALQ_LOG_LEVEL."""
    if level is None:
        load_dotenv()
        level = os.getenv("NEURALQ_LOG_LEVEL", "WARNING")
    logging.basicConfig(
        level=level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def handle_lab_exceptions(operation_name: str):
    """Decorator that reports laboratory errors with context and re-raises them.

    Args:
        operation_name: Name of the operation being performed for error messages
    """

    def decorator(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except ConfigError as e:
                print(f"Configuration error during {operation_name}: {e}")
                raise
            except MdpValidationError as e:
                print(f"Invalid MDP during {operation_name}: {type(e).__name__}: {e}")
                raise
            except NeuralQError as e:
                print(f"Error during {operation_name}: {type(e).__name__}: {e}")
                raise

        return wrapper

    return decorator


def print_summary(title: str, **metrics: int | float | str) -> None:
    """Print a formatted summary with metrics.

    Args:
        title: Title of the summary
        **metrics: Key-value pairs of metrics to display
    """
    print(format_summary(title, **metrics))


def format_summary(title: str, **metrics: int | float | str) -> str:
    """Render the summary banner used by print_summary as a string."""
    lines = ["", "=" * 60, title.upper(), "=" * 60]
    for key, value in metrics.items():
        # Convert snake_case to Title Case
        display_key = key.replace("_", " ").title()
        lines.append(f"{display_key}: {value}")
    lines.append("=" * 60)
    return "\n".join(lines)
