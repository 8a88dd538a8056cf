from .correlation import NullSummary, correlation, random_correlation_baseline
from .eye import EyeDiagram, EyeMetrics, PatternError, build_eye
from .snr import SnrEstimate, SweepRow, estimate_snr, sweep_snr

__all__ = [
    "EyeDiagram", "EyeMetrics", "NullSummary", "PatternError", "SnrEstimate", "SweepRow",
    "build_eye", "correlation", "estimate_snr", "random_correlation_baseline", "sweep_snr",
]
