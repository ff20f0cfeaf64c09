"""Exception hierarchy shared across the toolkit.

Every failure surfaced to callers derives from VitalidError so the service
layer can map categories onto HTTP status codes and the CLI onto exit codes.
"""


class VitalidError(Exception):
    """Base class for all toolkit errors."""

    category = "internal"


class InputError(VitalidError):
    """Malformed files, inconsistent metadata, out-of-range arguments."""

    category = "input"


class ExtractionError(VitalidError):
    """Signal processing failed (no target, degenerate fit, too short)."""

    category = "extraction"


class DegenerateSupportError(ExtractionError):
    """Plateau support too small for a parabola fit."""


class TrainingError(VitalidError):
    """Classifier training failed (non-convergence, divergence, bad fold)."""

    category = "training"
