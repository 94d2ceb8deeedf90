"""Automated issue-report assignment: tf-idf text classification, stacked
ensembles, local explanations, and online accuracy-drift monitoring.
"""

from .classify import ClassifierKind, EnsembleMode, TrainConfig
from .corpus import IssueReport, load_corpus
from .errors import TriageError

__version__ = "0.1.0"

__all__ = [
    "ClassifierKind",
    "EnsembleMode",
    "TrainConfig",
    "IssueReport",
    "load_corpus",
    "TriageError",
    "__version__",
]
