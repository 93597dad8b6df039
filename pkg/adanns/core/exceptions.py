"""
Exception hierarchy for adanns

Every error carries the process exit code the CLI reports for it.
"""

from typing import Optional


class AdannsError(Exception):
    """Base class for toolkit errors"""

    exit_code = 4


class ConfigurationError(AdannsError, ValueError):
    """Invalid parameters or configuration"""

    exit_code = 2


class DimensionError(ConfigurationError):
    """Prefix width or vector dimension out of range / mismatched"""


class InsufficientDataError(ConfigurationError):
    """Not enough points for the requested number of clusters"""


class FormatError(AdannsError):
    """Malformed or truncated binary file"""

    exit_code = 3

    def __init__(self, message: str, offset: Optional[int] = None, path: Optional[str] = None):
        self.offset = offset
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte offset {offset}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(f"{message}{suffix}")


class MetricError(AdannsError, ValueError):
    """Metric cannot be evaluated on the given inputs"""
