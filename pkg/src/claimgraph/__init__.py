"""Evidence/claim knowledge graphs plus a cross-graph-attention support scorer."""

__version__ = "0.1.0"

from .ingest import (
    ConlluError,
    DatasetManifest,
    EmbeddingFormatError,
    EmbeddingTable,
    ManifestError,
    ParsedDocument,
    Token,
    fallback_embed,
    load_embedding_table,
    load_manifest,
    parse_conllu,
    save_embedding_table,
    serialize_conllu,
)
from .kg import EdgeType, KnowledgeGraph, NodeType, build_graph, canonical_id, graph_to_json
from .ranking import cosine_similarity, concatenate_evidence, rank_evidence
from .features import FeaturedGraph, featurize, node_struct_features, pagerank, reverse_pagerank
from .model import ModelConfig, ModelParams, count_parameters, init_params, score_pair
from .training import Metrics, Sample, TrainConfig, evaluate, run_ablation, split_dataset, train
from .synthetic import synthetic_dataset

__all__ = [
    "ConlluError",
    "DatasetManifest",
    "EdgeType",
    "EmbeddingFormatError",
    "EmbeddingTable",
    "FeaturedGraph",
    "KnowledgeGraph",
    "ManifestError",
    "Metrics",
    "ModelConfig",
    "ModelParams",
    "NodeType",
    "ParsedDocument",
    "Sample",
    "Token",
    "TrainConfig",
    "build_graph",
    "canonical_id",
    "concatenate_evidence",
    "cosine_similarity",
    "count_parameters",
    "evaluate",
    "fallback_embed",
    "featurize",
    "graph_to_json",
    "init_params",
    "load_embedding_table",
    "load_manifest",
    "node_struct_features",
    "pagerank",
    "parse_conllu",
    "rank_evidence",
    "reverse_pagerank",
    "run_ablation",
    "save_embedding_table",
    "score_pair",
    "serialize_conllu",
    "split_dataset",
    "synthetic_dataset",
    "train",
]
