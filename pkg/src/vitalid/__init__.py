"""Radar vital-sign biometric toolkit.

Extracts respiratory and heartbeat feature vectors from radar baseband
signals and identifies individuals with built-in classifiers.  The heavy
lifting lives in the submodules; this package root only re-exports the
most common entry points.
"""

from .errors import (
    VitalidError,
    InputError,
    ExtractionError,
    DegenerateSupportError,
    TrainingError,
)
from .io import RadarParams, ComplexSeries, SegmentMeta, load_cw_record, save_cw_record, segment
from .signals import DisplacementSeries, Spectrogram, phase_demodulate, stft
from .respiration import MRCWParams, mrcw_eval, mrcw_fit, resp_feature
from .heartbeat import hb_feature
from .synth import SubjectProfile, synth_segment, synth_population

__version__ = "0.1.0"

__all__ = [
    "VitalidError",
    "InputError",
    "ExtractionError",
    "DegenerateSupportError",
    "TrainingError",
    "RadarParams",
    "ComplexSeries",
    "SegmentMeta",
    "load_cw_record",
    "save_cw_record",
    "segment",
    "DisplacementSeries",
    "Spectrogram",
    "phase_demodulate",
    "stft",
    "MRCWParams",
    "mrcw_eval",
    "mrcw_fit",
    "resp_feature",
    "hb_feature",
    "SubjectProfile",
    "synth_segment",
    "synth_population",
    "__version__",
]
