"""Local search, global search and the flat-chunk baseline retriever."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyResultError
from .extraction import Chunk, count_tokens
from .graph import CommunityReport, Embedder, Entity, KnowledgeGraph, hashing_embedder
from .ingest import format_xyz, parse_line

DEFAULT_K_ANCHOR = 4
DEFAULT_HOPS = 1
DEFAULT_M = 8
DEFAULT_TOP_K = 4
DEFAULT_R = 5
DEFAULT_BUDGET = 2500


@dataclass(frozen=True)
class GainQuery:
    tx_pos: tuple[float, float, float]
    rx_pos: tuple[float, float, float]

    def __post_init__(self):
        if len(self.tx_pos) != 3 or len(self.rx_pos) != 3:
            raise ValueError("query positions must be 3D")
        if not all(math.isfinite(v) for v in (*self.tx_pos, *self.rx_pos)):
            raise ValueError("query coordinates must be finite")


@dataclass(frozen=True)
class GainTriple:
    tx_label: int
    rx_label: int
    tx_pos: tuple[float, float, float]
    rx_pos: tuple[float, float, float]
    gain_db: float
    combined_distance: float

    @property
    def sort_key(self):
        return (self.combined_distance, self.tx_label, self.rx_label)

    def render(self) -> str:
        return (
            f"transmitter_{self.tx_label} at {format_xyz(self.tx_pos)} transmits the signal "
            f"to receiver_{self.rx_label} at {format_xyz(self.rx_pos)} "
            f"with channel gain {self.gain_db:.2f} dB."
        )


@dataclass
class RetrievalContext:
    mode: str  # local | global | flat
    triples: list[GainTriple] = field(default_factory=list)
    reports: list[tuple[CommunityReport, float]] = field(default_factory=list)
    chunks: list[tuple[Chunk, float]] = field(default_factory=list)
    budget_used: int = 0

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "budget_used": self.budget_used,
            "triples": [
                {"tx_label": t.tx_label, "rx_label": t.rx_label, "tx_pos": list(t.tx_pos),
                 "rx_pos": list(t.rx_pos), "gain_db": t.gain_db,
                 "combined_distance": t.combined_distance}
                for t in self.triples
            ],
            "reports": [
                {"community_id": r.community_id, "similarity": s, "text": r.rendered_text}
                for r, s in self.reports
            ],
            "chunks": [{"index": c.index, "similarity": s} for c, s in self.chunks],
        }


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def combined_distance(q: GainQuery, tx_pos, rx_pos) -> float:
    return math.dist(q.tx_pos, tx_pos) + math.dist(q.rx_pos, rx_pos)


def _take_within_budget(items: list, costs: list[int], budget: int) -> tuple[list, int]:
    used = 0
    kept = []
    for item, cost in zip(items, costs):
        if used + cost > budget:
            break
        kept.append(item)
        used += cost
    return kept, used


def _label(e: Entity) -> int:
    return e.label if e.label is not None else 0


def nearest_stations(graph: KnowledgeGraph, role: str, pos, k: int) -> list[str]:
    ranked = sorted(
        graph.stations(role), key=lambda e: (math.dist(e.position, pos), _label(e), e.name)
    )
    return [e.name for e in ranked[:k]]


def local_search(
    graph: KnowledgeGraph,
    q: GainQuery,
    k_anchor: int = DEFAULT_K_ANCHOR,
    hops: int = DEFAULT_HOPS,
    m: int = DEFAULT_M,
    budget: int = DEFAULT_BUDGET,
) -> RetrievalContext:
    """Anchor on the stations nearest the queried positions and walk the graph.

    The ``k_anchor`` transmitters nearest ``q.tx_pos`` and receivers nearest
    ``q.rx_pos`` seed a breadth-first expansion of ``hops`` steps.  Every
    gain-carrying transmitter->receiver relationship inside the expanded set is
    a candidate; the ``m`` with the smallest combined distance are returned.
    """
    if k_anchor < 1 or hops < 0 or m < 0:
        raise ValueError("need k_anchor >= 1, hops >= 0, m >= 0")
    if not graph.entities:
        raise EmptyResultError("cannot search an empty graph")
    frontier = set(nearest_stations(graph, "transmitter", q.tx_pos, k_anchor))
    frontier |= set(nearest_stations(graph, "receiver", q.rx_pos, k_anchor))
    seen = set(frontier)
    for _ in range(hops):
        frontier = {n for u in frontier for n in graph.neighbors(u)} - seen
        if not frontier:
            break
        seen |= frontier
    triples = []
    for r in graph.gain_relationships():
        if r.source in seen and r.target in seen:
            tx, rx = graph.entities[r.source], graph.entities[r.target]
            triples.append(GainTriple(
                _label(tx), _label(rx), tx.position, rx.position, r.gain_db,
                combined_distance(q, tx.position, rx.position),
            ))
    triples.sort(key=lambda t: t.sort_key)
    triples = triples[:m]
    triples, used = _take_within_budget(triples, [count_tokens(t.render()) for t in triples], budget)
    return RetrievalContext("local", triples=triples, budget_used=used)


def global_search(
    graph: KnowledgeGraph,
    query_text: str,
    r: int = DEFAULT_R,
    budget: int = DEFAULT_BUDGET,
    embedder: Embedder | None = None,
) -> RetrievalContext:
    if not graph.reports:
        raise EmptyResultError("graph has no communities to search")
    embedder = embedder or hashing_embedder(graph.embedding_dim)
    scored = rank_reports(list(graph.reports.values()), embedder(query_text))[: max(r, 0)]
    scored, used = _take_within_budget(
        scored, [count_tokens(rep.rendered_text) for rep, _ in scored], budget
    )
    return RetrievalContext("global", reports=scored, budget_used=used)


def render_query_line(q: GainQuery) -> str:
    return (
        f"transmitter at {format_xyz(q.tx_pos)} transmits the signal "
        f"to receiver at {format_xyz(q.rx_pos)}"
    )


def flat_retrieve(
    graph: KnowledgeGraph,
    q: GainQuery,
    top_k: int = DEFAULT_TOP_K,
    budget: int = DEFAULT_BUDGET,
    embedder: Embedder | None = None,
) -> RetrievalContext:
    """Vanilla RAG: rank chunks by cosine similarity to the rendered query line."""
    if not graph.chunks:
        raise EmptyResultError("chunk store is empty")
    if top_k <= 0:
        return RetrievalContext("flat")
    embedder = embedder or hashing_embedder(graph.embedding_dim)
    qv = embedder(render_query_line(q))
    scored = [(c, cosine_similarity(qv, e)) for c, e in zip(graph.chunks, graph.chunk_embeddings)]
    scored.sort(key=lambda cs: (-cs[1], cs[0].index))
    scored = scored[:top_k]
    scored, used = _take_within_budget(scored, [c.token_count for c, _ in scored], budget)
    triples = []
    for chunk, _ in scored:
        for line in chunk.text.split("\n"):
            pair = parse_line(line)
            if pair is None:
                continue
            triples.append(GainTriple(
                pair.tx_label, pair.rx_label, pair.tx_pos, pair.rx_pos, pair.gain_db,
                combined_distance(q, pair.tx_pos, pair.rx_pos),
            ))
    triples.sort(key=lambda t: t.sort_key)
    return RetrievalContext("flat", triples=triples, chunks=scored, budget_used=used)


def rank_reports(reports: Sequence[CommunityReport], query_vec) -> list[tuple[CommunityReport, float]]:
    scored = [(rep, cosine_similarity(query_vec, rep.embedding)) for rep in reports]
    scored.sort(key=lambda rs: (-rs[1], rs[0].community_id))
    return scored
