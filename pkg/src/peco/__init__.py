"""Preference- and concurrence-aware sampling of bipartite interaction graphs."""

from .graph import InteractionGraph, DatasetSplit, degrees, load_edge_list, read_canonical, split, write_canonical
from .similarity import ConcurrenceMatrix, SparseSimilarity, concurrence_matrix, pairwise_similarity, set_score
from .clustering import ClusterAssignment, ClusterScoreMatrix, PreferenceDistribution, cluster_scores, dbscan, preference
from .sampler import (PRESETS, GeneratorInputs, SampledGraph, SamplerConfig, generate_ensemble,
                      node_copy_sample, peco_sample_graph, peco_sample_user, prepare)

__version__ = "0.1.0"

__all__ = [
    "InteractionGraph", "DatasetSplit", "degrees", "load_edge_list", "read_canonical", "split",
    "write_canonical", "ConcurrenceMatrix", "SparseSimilarity", "concurrence_matrix",
    "pairwise_similarity", "set_score", "ClusterAssignment", "ClusterScoreMatrix",
    "PreferenceDistribution", "cluster_scores", "dbscan", "preference", "PRESETS", "GeneratorInputs",
    "SampledGraph", "SamplerConfig", "generate_ensemble", "node_copy_sample", "peco_sample_graph",
    "peco_sample_user", "prepare",
]
