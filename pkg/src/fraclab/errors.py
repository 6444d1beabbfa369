"""Exception types shared across the package."""


class FraclabError(Exception):
    """Base class for package-specific failures."""


class ParameterError(FraclabError):
    """Raised when inputs fall outside the admissible parameter ranges."""


class ConvergenceError(FraclabError):
    """Raised when an iterative routine fails to reach its tolerance."""
