"""Clustering and distance primitives used by the feature clusterers."""

from .ami import ami, ami_from_labels, expected_mutual_info
from .distances import dtw, dtw_matrix, jaccard_distance, jaccard_matrix
from .graph import CommunityResult, adjacency, connected_components, greedy_modularity, modularity
from .optics import optics, optics_labels
from .partition import NOISE, DistanceMatrix, Partition, ip_sort_key, sort_items
from .spectral import SpectralResult, spectral_cluster

__all__ = [
    "NOISE",
    "CommunityResult",
    "DistanceMatrix",
    "Partition",
    "SpectralResult",
    "adjacency",
    "ami",
    "ami_from_labels",
    "connected_components",
    "dtw",
    "dtw_matrix",
    "expected_mutual_info",
    "greedy_modularity",
    "ip_sort_key",
    "jaccard_distance",
    "jaccard_matrix",
    "modularity",
    "optics",
    "optics_labels",
    "sort_items",
    "spectral_cluster",
]
