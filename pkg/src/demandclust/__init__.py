"""Soft-DTW k-means clustering of smart water meter daily demand patterns."""

__version__ = "0.1.0"

from .barycenter import BarycenterResult, compute_barycenter
from .clustering import ClusterMethod, Clustering, kmeans
from .sdtw import hard_dtw, soft_dtw, soft_dtw_divergence, soft_dtw_gradient
from .synth import HouseholdProfile, LabeledDataset, generate_dataset
from .ts_core import (DemandPattern, FeatureVector, TimeSeries, min_max_normalize,
                      moving_average, periodic_mean, work_hour_features)
from .validation import cluster_analysis, flag_outliers, silhouette, success_rate

__all__ = [
    "BarycenterResult", "ClusterMethod", "Clustering", "DemandPattern", "FeatureVector",
    "HouseholdProfile", "LabeledDataset", "TimeSeries", "cluster_analysis",
    "compute_barycenter", "flag_outliers", "generate_dataset", "hard_dtw", "kmeans",
    "min_max_normalize", "moving_average", "periodic_mean", "silhouette", "soft_dtw",
    "soft_dtw_divergence", "soft_dtw_gradient", "success_rate", "work_hour_features",
]
