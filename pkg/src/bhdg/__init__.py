"""Multi-label feature selection with binary-hashing pseudo-labels and a dynamic graph."""

__version__ = "0.1.0"

from .ingest import Dataset, load_arff, load_csv, make_split, minmax_scale
from .metrics import MetricReport, evaluate
from .solver import FeatureRanking, HyperParams, fit, select_top

__all__ = [
    "Dataset", "FeatureRanking", "HyperParams", "MetricReport",
    "evaluate", "fit", "load_arff", "load_csv", "make_split", "minmax_scale", "select_top",
]
