"""Phoneme-level voice conversion toolkit.

A desk-scale, fully testable voice conversion system: a forced-alignment
feature pipeline with pluggable extractors, phoneme-level text and SSL
encoders, a conditional VAE with adversarial waveform training, duration
re-prediction at inference, and duration-deviation evaluation.
"""

from .config import Config, DspConfig, desk_preset, load_config_file, paper_preset, preset
from .features import (
    AlignmentError,
    UtteranceFeatures,
    repair_durations,
    resample_ssl,
    validate_alignment,
    wframe_from,
)
from .losses import LossReport, duration_loss, kl_divergence
from .providers import ExtractorProviderSet, build_provider_set, register_provider_factory
from .rdd import DurationProfile, RddReport, rdd, rdd_report
from .store import CorpusManifest, FeatureStore, ManifestEntry, parse_manifest

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "Config",
    "CorpusManifest",
    "DspConfig",
    "DurationProfile",
    "ExtractorProviderSet",
    "FeatureStore",
    "LossReport",
    "ManifestEntry",
    "RddReport",
    "UtteranceFeatures",
    "build_provider_set",
    "desk_preset",
    "duration_loss",
    "kl_divergence",
    "load_config_file",
    "paper_preset",
    "parse_manifest",
    "preset",
    "rdd",
    "rdd_report",
    "register_provider_factory",
    "repair_durations",
    "resample_ssl",
    "validate_alignment",
    "wframe_from",
]
