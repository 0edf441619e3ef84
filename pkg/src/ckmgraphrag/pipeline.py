"""End-to-end indexing: document -> chunks -> extraction -> graph -> communities."""

from __future__ import annotations

from functools import partial
from typing import Sequence

from .extraction import (
    DEFAULT_ENTITY_TYPES, ChatBackend, chunk_document, extract_all, extract_llm, extract_rule_based,
)
from .graph import DEFAULT_EMBEDDING_DIM, Embedder, KnowledgeGraph, build_graph, index_communities
from .ingest import LabeledPair, render_document


def build_knowledge_graph(
    doc: str,
    chunk_size: int = 1000,
    mode: str = "rule",
    reified: bool = False,
    entity_types: Sequence[str] = DEFAULT_ENTITY_TYPES,
    dim: int = DEFAULT_EMBEDDING_DIM,
    resolution: float = 1.0,
    max_community_size: int = 50,
    max_sweeps: int = 10,
    seed: int = 0,
    threads: int = 1,
    chat: ChatBackend | None = None,
    embedder: Embedder | None = None,
) -> KnowledgeGraph:
    chunks = chunk_document(doc, chunk_size)
    if mode == "rule":
        extractor = partial(extract_rule_based, types=tuple(entity_types), reified=reified)
    elif mode == "llm":
        if chat is None:
            raise ValueError("llm extraction needs a chat backend")
        extractor = partial(extract_llm, types=tuple(entity_types), client=chat)
    else:
        raise ValueError(f"unknown extraction mode {mode!r}")
    delta = extract_all(chunks, extractor, threads)
    graph = build_graph(delta, chunks, dim, embedder)
    return index_communities(graph, resolution, max_community_size, seed, max_sweeps, embedder)


def graph_from_pairs(pairs: Sequence[LabeledPair], **kwargs) -> KnowledgeGraph:
    return build_knowledge_graph(render_document(pairs), **kwargs)
