"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: I/O problems exit 1,
validation problems exit 2, property-sweep failures exit 3 and training
divergence exits 4.
"""


class ValidationError(ValueError):
    """An argument violates a documented precondition."""


class DegenerateSpectrumError(ValidationError):
    """All singular values are zero; effective ranks are undefined."""


class NumericError(ArithmeticError):
    """A numerical routine failed (e.g. SVD did not converge)."""


class BundleNotFoundError(FileNotFoundError):
    """A bundle manifest or data file is missing."""


class BundleCorruptionError(RuntimeError):
    """A bundle's data files disagree with its manifest."""


class UnsupportedFormatError(ValidationError):
    """A bundle declares a dtype this library does not handle."""


class TrainingDivergedError(RuntimeError):
    """A gradient-descent run blew up instead of converging."""
