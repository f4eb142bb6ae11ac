"""
Exceptions Module

Error types raised across the pipeline. All derive from ValueError so callers
that only catch ValueError keep working.
"""

from typing import Dict, List, Optional


class ChfSurvivalError(ValueError):
    """Base class for every error raised by the package."""


class ConfigError(ChfSurvivalError):
    """Invalid or unknown configuration value."""


# Signal processing

class SignalError(ChfSurvivalError):
    """A segment or record cannot be processed."""


class FlatSegmentError(SignalError):
    """Segment has max == min and cannot be scaled."""

    def __init__(self, message: str = "flat segment"):
        super().__init__(message)


class PeakDetectionError(SignalError):
    """Fewer R-peaks than needed were detected."""


class CycleExtractionError(SignalError):
    """No usable heart cycle could be cut from a segment."""


class NoUsableSegmentError(SignalError):
    """
    No segment of a record passed the quality gate.

    Attributes:
    -----------
    diagnostics : List[Dict]
        One entry per candidate segment (index, status, quality, reason)
    """

    def __init__(self, record_id: str, diagnostics: List[Dict]):
        self.record_id = record_id
        self.diagnostics = diagnostics
        reasons = "; ".join(
            f"segment {d['segment']}: {d['status']}"
            + (f" (quality={d['quality']:.3f})" if d.get('quality') is not None else "")
            for d in diagnostics
        )
        super().__init__(f"no usable segment in record '{record_id}': {reasons or 'record too short'}")


# Features

class FeatureError(ChfSurvivalError):
    """Feature computation or validation failure."""


class DegeneratePoincareError(FeatureError):
    """
    SD2 is zero, so the SD1/SD2 ratio is undefined.

    The HRV values that are still defined are kept on the exception so the
    caller can record the ratio as missing and carry on.
    """

    def __init__(self, mean_hr: float, sdnn: float):
        self.mean_hr = mean_hr
        self.sdnn = sdnn
        super().__init__("degenerate Poincaré geometry: SD2 = 0")


class MissingFeatureError(FeatureError):
    """Required feature columns are absent."""

    def __init__(self, missing: List[str]):
        self.missing = list(missing)
        super().__init__(f"missing features: {', '.join(self.missing)}")


class DatasetError(ChfSurvivalError):
    """Dataset or manifest violates its invariants."""


# Models

class ConvergenceError(ChfSurvivalError):
    """Iterative fit did not converge."""


class SingularMatrixError(ChfSurvivalError):
    """A linear system that must be solved is singular."""


class ModelFormatError(ChfSurvivalError):
    """Serialized model has the wrong version or violates the schema."""


# Metrics

class MetricError(ChfSurvivalError):
    """A metric cannot be computed."""


class NoComparablePairsError(MetricError):
    """Concordance is undefined without comparable pairs."""

    def __init__(self, message: str = "no comparable pairs"):
        super().__init__(message)


class UndefinedMetricError(MetricError):
    """Metric undefined on this sample (e.g. no cases or controls)."""


# Explanations

class ExplanationError(ChfSurvivalError):
    """Shapley attribution cannot be computed."""


def format_error(exc: Exception, context: Optional[str] = None) -> str:
    """Single-line, machine-parsable error string used by the CLI."""
    message = " ".join(str(exc).split())
    prefix = f"{context}: " if context else ""
    return f"error: {type(exc).__name__}: {prefix}{message}"
