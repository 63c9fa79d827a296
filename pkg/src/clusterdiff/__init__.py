"""Selective inference for a difference in one feature's mean between two estimated clusters."""
from .clustering import (
    LINKAGES,
    ClusterLabels,
    KMeansTrace,
    MergeSequence,
    cut_dendrogram,
    hierarchical,
    kmeans_lloyd,
)
from .errors import ClusterDiffError, DataError, DegenerateSupportError, NumericalError, TruncationError
from .inference import (
    ClusteringMethod,
    Fit,
    TestReport,
    TruncatedGaussian,
    bh_adjust,
    estimate_covariance,
    fit_clustering,
    naive_p,
    run_test,
    selective_p,
    trunc_cdf,
)
from .intervals import IntervalUnion, QuadraticInequality, QuadraticSystem, contains, intersect_all
from .model import FeatureCovariance, make_contrast, perturb, perturbation_line, test_statistic

__version__ = "0.1.0"

__all__ = [
    "LINKAGES",
    "ClusterLabels",
    "KMeansTrace",
    "MergeSequence",
    "cut_dendrogram",
    "hierarchical",
    "kmeans_lloyd",
    "ClusterDiffError",
    "DataError",
    "DegenerateSupportError",
    "NumericalError",
    "TruncationError",
    "ClusteringMethod",
    "Fit",
    "TestReport",
    "TruncatedGaussian",
    "bh_adjust",
    "estimate_covariance",
    "fit_clustering",
    "naive_p",
    "run_test",
    "selective_p",
    "trunc_cdf",
    "IntervalUnion",
    "QuadraticInequality",
    "QuadraticSystem",
    "contains",
    "intersect_all",
    "FeatureCovariance",
    "make_contrast",
    "perturb",
    "perturbation_line",
    "test_statistic",
]
