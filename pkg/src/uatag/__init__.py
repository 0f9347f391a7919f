"""Automatic Haystack marker tagging for building automation points.

A random forest and a calibrated per-tag SVM ensemble are fused by two
thresholds, constrained by mutually exclusive tag groups, and audited by
clustering raw point names.
"""

__version__ = "0.1.0"

from .errors import UatagError
from .vocab import TagVocabulary, load_vocabulary
from .ingest import Corpus, load_corpus
from .fusion import FusionConfig, TagReport, run_pipeline
from .modelstore import ModelBundle, TrainParams, load, save, train_scratch, train_supplemental
from .evalreport import evaluate

__all__ = [
    "__version__",
    "UatagError",
    "TagVocabulary",
    "load_vocabulary",
    "Corpus",
    "load_corpus",
    "FusionConfig",
    "TagReport",
    "run_pipeline",
    "ModelBundle",
    "TrainParams",
    "load",
    "save",
    "train_scratch",
    "train_supplemental",
    "evaluate",
]
