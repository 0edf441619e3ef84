"""Graph-based retrieval-augmented channel gain prediction over channel knowledge maps."""

from __future__ import annotations

from .evaluation import EvalConfig, EvalReport, evaluate, fit_path_loss, sum_rate
from .generation import GainAnswer, mock_predict_gain
from .graph import KnowledgeGraph, export_graph, import_graph
from .ingest import LabeledPair, RawCkmRecord, label_stations, parse_ckm, render_document
from .leiden import hierarchical_leiden, leiden, modularity
from .pipeline import build_knowledge_graph, graph_from_pairs
from .retrieval import GainQuery, flat_retrieve, global_search, local_search

__version__ = "0.1.0"

__all__ = [
    "EvalConfig", "EvalReport", "GainAnswer", "GainQuery", "KnowledgeGraph", "LabeledPair",
    "RawCkmRecord", "build_knowledge_graph", "evaluate", "export_graph", "fit_path_loss",
    "flat_retrieve", "global_search", "graph_from_pairs", "hierarchical_leiden", "import_graph",
    "label_stations", "leiden", "local_search", "mock_predict_gain", "modularity", "parse_ckm",
    "render_document", "sum_rate",
]
