"""The knowledge graph: entities, relationships, chunks, communities and reports."""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DataError, EmptyResultError, GraphFormatError
from .extraction import TRANSMITS_TO, Chunk, GraphDelta
from .leiden import hierarchical_leiden

FORMAT_VERSION = 1
DEFAULT_EMBEDDING_DIM = 64
STATION_TYPES = ("transmitter", "receiver")

_COORD_RE = re.compile(r"^\(\s*(\S+?)\s*,\s*(\S+?)\s*,\s*(\S+?)\s*\)$")
_LABEL_RE = re.compile(r"_(\d+)$")

Embedder = Callable[[str], np.ndarray]


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------


def _token_hash(token: str) -> int:
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")


def embed_text(text: str, dim: int = DEFAULT_EMBEDDING_DIM) -> np.ndarray:
    """Signed hashed bag of words, L2 normalized (zero vector for empty text)."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    vec = np.zeros(dim)
    for token in text.split():
        h = _token_hash(token)
        vec[h % dim] += 1.0 if (h >> 63) & 1 else -1.0
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def hashing_embedder(dim: int = DEFAULT_EMBEDDING_DIM) -> Embedder:
    return lambda text: embed_text(text, dim)


# ---------------------------------------------------------------------------
# Data types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Entity:
    name: str
    entity_type: str
    attributes: dict[str, str]
    source_chunks: tuple[int, ...]
    position: tuple[float, float, float] | None = None

    @property
    def is_station(self) -> bool:
        return self.entity_type in STATION_TYPES

    @property
    def label(self) -> int | None:
        m = _LABEL_RE.search(self.name)
        return int(m.group(1)) if m else None


@dataclass(frozen=True)
class Relationship:
    source: str
    target: str
    rel_type: str
    gain_db: float | None
    source_chunks: tuple[int, ...]


@dataclass(frozen=True)
class Community:
    id: int
    level: int
    members: tuple[str, ...]
    parent: int | None = None


@dataclass(frozen=True)
class CommunityReport:
    community_id: int
    level: int
    station_count: int
    pair_count: int
    bounding_box: tuple[tuple[float, float], ...] | None  # ((xmin, xmax), (ymin, ymax), (zmin, zmax))
    gain_stats: dict[str, float] | None  # mean, min, max, std
    rendered_text: str
    embedding: tuple[float, ...]


@dataclass(frozen=True)
class GraphStats:
    entity_count: int
    relationship_count: int
    community_count: int
    communities_per_level: dict[int, int]
    chunk_count: int
    report_count: int


@dataclass(frozen=True)
class KnowledgeGraph:
    entities: dict[str, Entity]
    relationships: tuple[Relationship, ...]
    chunks: tuple[Chunk, ...]
    chunk_embeddings: np.ndarray
    embedding_dim: int = DEFAULT_EMBEDDING_DIM
    communities: tuple[Community, ...] = ()
    reports: dict[int, CommunityReport] = field(default_factory=dict)

    def __post_init__(self):
        adj: dict[str, set[str]] = {name: set() for name in self.entities}
        for r in self.relationships:
            adj[r.source].add(r.target)
            adj[r.target].add(r.source)
        object.__setattr__(self, "_adjacency", {k: tuple(sorted(v)) for k, v in adj.items()})
        object.__setattr__(self, "_gain_rels", tuple(
            r for r in self.relationships
            if r.rel_type == TRANSMITS_TO and r.gain_db is not None
            and self.entities[r.source].entity_type == "transmitter"
            and self.entities[r.target].entity_type == "receiver"
        ))

    def neighbors(self, name: str) -> tuple[str, ...]:
        """Neighbors in either direction; stored edge direction is kept on the relationship."""
        return self._adjacency[name]

    def stations(self, role: str) -> list[Entity]:
        return [e for e in self.entities.values() if e.entity_type == role]

    def gain_relationships(self) -> tuple[Relationship, ...]:
        """Transmitter->receiver relationships that carry a gain."""
        return self._gain_rels

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "embedding_dim": self.embedding_dim,
            "entities": [
                {"name": e.name, "type": e.entity_type, "attributes": dict(sorted(e.attributes.items())),
                 "source_chunks": list(e.source_chunks)}
                for e in sorted(self.entities.values(), key=lambda e: e.name)
            ],
            "relationships": [
                {"source": r.source, "target": r.target, "type": r.rel_type, "gain_db": r.gain_db,
                 "source_chunks": list(r.source_chunks)}
                for r in sorted(self.relationships, key=lambda r: (r.source, r.target, r.rel_type))
            ],
            "chunks": [
                {"index": c.index, "text": c.text, "token_count": c.token_count,
                 "embedding": [float(x) for x in emb]}
                for c, emb in zip(self.chunks, self.chunk_embeddings)
            ],
            "communities": [
                {"id": c.id, "level": c.level, "members": list(c.members), "parent": c.parent}
                for c in sorted(self.communities, key=lambda c: c.id)
            ],
            "reports": [_report_to_dict(self.reports[k]) for k in sorted(self.reports)],
        }


def parse_coordinate(text: str) -> tuple[float, float, float]:
    m = _COORD_RE.match(text.strip())
    if m is None:
        raise ValueError(f"not a coordinate: {text!r}")
    xyz = tuple(float(v) for v in m.groups())
    if not all(math.isfinite(v) for v in xyz):
        raise ValueError(f"non-finite coordinate: {text!r}")
    return xyz


# ---------------------------------------------------------------------------
# Build
# ---------------------------------------------------------------------------


def build_graph(
    delta: GraphDelta,
    chunks: Sequence[Chunk],
    dim: int = DEFAULT_EMBEDDING_DIM,
    embedder: Embedder | None = None,
) -> KnowledgeGraph:
    embedder = embedder or hashing_embedder(dim)
    entities = {}
    for e in delta.entities:
        position = None
        if e.entity_type in STATION_TYPES:
            try:
                position = parse_coordinate(e.attributes["coordinate"])
            except (KeyError, ValueError) as exc:
                raise DataError(f"station {e.name}: cannot parse coordinate ({exc})") from None
        entities[e.name] = Entity(
            e.name, e.entity_type, dict(e.attributes), tuple(sorted(e.source_chunks)), position
        )
    relationships = []
    for r in delta.relationships:
        for end in (r.source, r.target):
            if end not in entities:
                raise DataError(f"relationship {r.source}->{r.target} has dangling endpoint {end}")
        relationships.append(
            Relationship(r.source, r.target, r.rel_type, r.gain_db, tuple(sorted(r.source_chunks)))
        )
    relationships.sort(key=lambda r: (r.source, r.target, r.rel_type))
    if chunks:
        emb = np.vstack([embedder(c.text) for c in chunks])
    else:
        emb = np.zeros((0, dim))
    return KnowledgeGraph(
        entities=dict(sorted(entities.items())),
        relationships=tuple(relationships),
        chunks=tuple(chunks),
        chunk_embeddings=emb,
        embedding_dim=emb.shape[1] if len(chunks) else dim,
    )


# ---------------------------------------------------------------------------
# Communities and reports
# ---------------------------------------------------------------------------


def detect_communities(
    graph: KnowledgeGraph,
    resolution: float = 1.0,
    max_community_size: int = 50,
    seed: int = 0,
    max_sweeps: int = 10,
) -> list[Community]:
    edges = [(r.source, r.target) for r in graph.relationships]
    found = hierarchical_leiden(
        list(graph.entities), edges, resolution=resolution,
        max_community_size=max_community_size, seed=seed, max_sweeps=max_sweeps,
    )
    return [Community(c.id, c.level, tuple(sorted(c.members)), c.parent) for c in found]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def summarize_community(
    graph: KnowledgeGraph, community: Community, embedder: Embedder | None = None
) -> CommunityReport:
    embedder = embedder or hashing_embedder(graph.embedding_dim)
    members = set(community.members)
    stations = [graph.entities[m] for m in community.members if graph.entities[m].is_station]
    gains = [
        r.gain_db for r in graph.gain_relationships() if r.source in members and r.target in members
    ]
    bbox = None
    if stations:
        pos = np.array([s.position for s in stations])
        bbox = tuple((float(lo), float(hi)) for lo, hi in zip(pos.min(axis=0), pos.max(axis=0)))
    stats = None
    if gains:
        g = np.array(gains)
        stats = {"mean": float(g.mean()), "min": float(g.min()), "max": float(g.max()), "std": float(g.std())}

    if bbox:
        region = " ".join(f"{axis}:[{_fmt(lo)},{_fmt(hi)}]" for axis, (lo, hi) in zip("xyz", bbox))
    else:
        region = "x:[n/a,n/a] y:[n/a,n/a] z:[n/a,n/a]"
    if stats:
        gain_text = (f"mean {_fmt(stats['mean'])} min {_fmt(stats['min'])} "
                     f"max {_fmt(stats['max'])} std {_fmt(stats['std'])}")
    else:
        gain_text = "mean n/a min n/a max n/a std n/a"
    text = (
        f"Community {community.id} (level {community.level}): {len(stations)} stations, "
        f"{len(gains)} pairs, region {region}, gain dB {gain_text}."
    )
    return CommunityReport(
        community_id=community.id,
        level=community.level,
        station_count=len(stations),
        pair_count=len(gains),
        bounding_box=bbox,
        gain_stats=stats,
        rendered_text=text,
        embedding=tuple(float(x) for x in embedder(text)),
    )


def index_communities(
    graph: KnowledgeGraph,
    resolution: float = 1.0,
    max_community_size: int = 50,
    seed: int = 0,
    max_sweeps: int = 10,
    embedder: Embedder | None = None,
) -> KnowledgeGraph:
    """Return a copy of ``graph`` with communities and their reports attached."""
    communities = detect_communities(graph, resolution, max_community_size, seed, max_sweeps)
    reports = {c.id: summarize_community(graph, c, embedder) for c in communities}
    return replace(graph, communities=tuple(communities), reports=reports)


def graph_stats(graph: KnowledgeGraph) -> GraphStats:
    per_level: dict[int, int] = {}
    for c in graph.communities:
        per_level[c.level] = per_level.get(c.level, 0) + 1
    return GraphStats(
        entity_count=len(graph.entities),
        relationship_count=len(graph.relationships),
        community_count=len(graph.communities),
        communities_per_level=dict(sorted(per_level.items())),
        chunk_count=len(graph.chunks),
        report_count=len(graph.reports),
    )


def require_reports(graph: KnowledgeGraph) -> None:
    if not graph.reports:
        raise EmptyResultError("graph has no community reports")


# ---------------------------------------------------------------------------
# Export / import
# ---------------------------------------------------------------------------


def _report_to_dict(r: CommunityReport) -> dict:
    return {
        "community_id": r.community_id,
        "level": r.level,
        "station_count": r.station_count,
        "pair_count": r.pair_count,
        "bounding_box": [list(b) for b in r.bounding_box] if r.bounding_box else None,
        "gain_stats": r.gain_stats,
        "rendered_text": r.rendered_text,
        "embedding": list(r.embedding),
    }


def dumps_graph(graph: KnowledgeGraph) -> str:
    return json.dumps(graph.to_dict(), indent=1, sort_keys=True) + "\n"


def export_graph(graph: KnowledgeGraph, path: str | Path) -> None:
    try:
        Path(path).write_text(dumps_graph(graph), encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write graph to {path}: {exc}") from exc


def graph_from_dict(data: dict) -> KnowledgeGraph:
    if not isinstance(data, dict) or "format_version" not in data:
        raise GraphFormatError("missing format_version")
    if data["format_version"] != FORMAT_VERSION:
        raise GraphFormatError(
            f"unsupported graph format_version {data['format_version']} (expected {FORMAT_VERSION})"
        )
    try:
        dim = int(data["embedding_dim"])
        entities = {}
        for e in data["entities"]:
            position = parse_coordinate(e["attributes"]["coordinate"]) if e["type"] in STATION_TYPES else None
            entities[e["name"]] = Entity(
                e["name"], e["type"], dict(e["attributes"]), tuple(e["source_chunks"]), position
            )
        relationships = tuple(
            Relationship(r["source"], r["target"], r["type"], r["gain_db"], tuple(r["source_chunks"]))
            for r in data["relationships"]
        )
        chunks = tuple(Chunk(c["index"], c["text"], c["token_count"]) for c in data["chunks"])
        emb = np.array([c["embedding"] for c in data["chunks"]], dtype=float).reshape(len(chunks), dim)
        communities = tuple(
            Community(c["id"], c["level"], tuple(c["members"]), c["parent"]) for c in data["communities"]
        )
        reports = {}
        for r in data["reports"]:
            bbox = tuple(tuple(b) for b in r["bounding_box"]) if r["bounding_box"] else None
            reports[r["community_id"]] = CommunityReport(
                r["community_id"], r["level"], r["station_count"], r["pair_count"], bbox,
                r["gain_stats"], r["rendered_text"], tuple(r["embedding"]),
            )
        for rel in relationships:
            if rel.source not in entities or rel.target not in entities:
                raise GraphFormatError(f"dangling relationship {rel.source}->{rel.target}")
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphFormatError(f"corrupted graph file: {exc!r}") from None
    return KnowledgeGraph(entities, relationships, chunks, emb, dim, communities, reports)


def import_graph(path: str | Path) -> KnowledgeGraph:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read graph file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"corrupted graph file {path}: {exc}") from None
    return graph_from_dict(data)
