"""Chunking of the knowledge document and entity/relationship extraction.

Two extractors produce the same :class:`GraphDelta` shape: a grammar-based one
that reads the rendered CKM lines directly, and an LLM-backed one that asks a
chat backend for ``ENTITY|...`` / ``REL|...`` records.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

from .errors import ChunkingError, ExtractionError, MergeConflictError, NoRecordsError
from .ingest import format_xyz, parse_line

log = logging.getLogger(__name__)

DEFAULT_ENTITY_TYPES = ("transmitter", "receiver", "channel gain", "coordinate", "value")
TRANSMITS_TO = "transmits_to"
HAS_GAIN = "has_channel_gain"
GAIN_TOWARDS = "gain_towards"
GAIN_TOLERANCE_DB = 1e-9


def count_tokens(text: str) -> int:
    return len(text.split())


@dataclass(frozen=True)
class Chunk:
    index: int
    text: str
    token_count: int


@dataclass
class ExtractedEntity:
    name: str
    entity_type: str
    attributes: dict[str, str] = field(default_factory=dict)
    source_chunks: set[int] = field(default_factory=set)


@dataclass
class ExtractedRelationship:
    source: str
    target: str
    rel_type: str = TRANSMITS_TO
    gain_db: float | None = None
    source_chunks: set[int] = field(default_factory=set)

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.source, self.target, self.rel_type)


@dataclass
class GraphDelta:
    entities: list[ExtractedEntity] = field(default_factory=list)
    relationships: list[ExtractedRelationship] = field(default_factory=list)
    # records an LLM extractor could not parse; not part of graph identity
    dropped: int = field(default=0, compare=False)


class ChatBackend(Protocol):
    def complete(self, messages: list[dict[str, str]]) -> str: ...


# ---------------------------------------------------------------------------
# Chunking
# ---------------------------------------------------------------------------


def chunk_document(doc: str, chunk_size: int) -> list[Chunk]:
    """Greedy line-aligned packing; a line is never split across chunks."""
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    if doc == "":
        return []
    chunks: list[Chunk] = []
    current: list[str] = []
    used = 0
    for line_no, line in enumerate(doc.split("\n"), start=1):
        n = count_tokens(line)
        if n > chunk_size:
            raise ChunkingError(line_no, n, chunk_size)
        if current and used + n > chunk_size:
            chunks.append(Chunk(len(chunks), "\n".join(current), used))
            current, used = [], 0
        current.append(line)
        used += n
    chunks.append(Chunk(len(chunks), "\n".join(current), used))
    return chunks


# ---------------------------------------------------------------------------
# Rule-based extraction
# ---------------------------------------------------------------------------


def gain_entity_name(tx_label: int, rx_label: int) -> str:
    return f"channel_gain_{tx_label}_{rx_label}"


def extract_rule_based(
    chunk: Chunk, types: Sequence[str] = DEFAULT_ENTITY_TYPES, reified: bool = False
) -> GraphDelta:
    required = {"transmitter", "receiver"} | ({"channel gain"} if reified else set())
    missing = required - set(types)
    if missing:
        raise ValueError(f"entity types {sorted(missing)} required by the extractor are not configured")

    entities: dict[str, ExtractedEntity] = {}
    rels: dict[tuple[str, str, str], ExtractedRelationship] = {}
    src = {chunk.index}

    def add_entity(name, etype, attrs):
        entities.setdefault(name, ExtractedEntity(name, etype, dict(attrs), set(src)))

    def add_rel(s, t, rtype, gain=None):
        key = (s, t, rtype)
        if key in rels:
            prev = rels[key].gain_db
            if gain is not None and prev is not None and abs(prev - gain) > GAIN_TOLERANCE_DB:
                raise MergeConflictError(
                    f"{key} has gains {prev} and {gain} within chunk {chunk.index}"
                )
            return
        rels[key] = ExtractedRelationship(s, t, rtype, gain, set(src))

    for line_no, line in enumerate(chunk.text.split("\n"), start=1):
        if not line.strip():
            continue
        pair = parse_line(line)
        if pair is None:
            raise ExtractionError(chunk.index, line_no, f"does not match the document grammar: {line!r}")
        tx = f"transmitter_{pair.tx_label}"
        rx = f"receiver_{pair.rx_label}"
        add_entity(tx, "transmitter", {"coordinate": format_xyz(pair.tx_pos)})
        add_entity(rx, "receiver", {"coordinate": format_xyz(pair.rx_pos)})
        add_rel(tx, rx, TRANSMITS_TO, pair.gain_db)
        if reified:
            g = gain_entity_name(pair.tx_label, pair.rx_label)
            add_entity(g, "channel gain", {"value": f"{pair.gain_db:.2f} dB"})
            add_rel(tx, g, HAS_GAIN, pair.gain_db)
            add_rel(g, rx, GAIN_TOWARDS, pair.gain_db)
    return GraphDelta(list(entities.values()), list(rels.values()))


# ---------------------------------------------------------------------------
# LLM extraction
# ---------------------------------------------------------------------------

EXTRACTION_SYSTEM_PROMPT = (
    "You extract a knowledge graph from wireless channel records. "
    "Output one record per line and nothing else."
)


def build_extraction_prompt(chunk: Chunk, types: Sequence[str]) -> list[dict[str, str]]:
    user = (
        f"Entity types: {', '.join(types)}.\n"
        "For every entity write: ENTITY|<name>|<type>|<key=value;key=value>\n"
        "For every relationship write: REL|<source>|<target>|<type>|<gain_db or ->\n"
        "Text:\n" + chunk.text
    )
    return [
        {"role": "system", "content": EXTRACTION_SYSTEM_PROMPT},
        {"role": "user", "content": user},
    ]


def _parse_attributes(text: str) -> dict[str, str]:
    attrs = {}
    for item in filter(None, (s.strip() for s in text.split(";"))):
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"bad attribute {item!r}")
        attrs[key.strip()] = value.strip()
    return attrs


def parse_extraction_records(
    text: str, types: Sequence[str], chunk_index: int
) -> tuple[GraphDelta, int]:
    """Parse delimited records. Returns the delta and the number of dropped records."""
    entities: dict[str, ExtractedEntity] = {}
    rels: dict[tuple[str, str, str], ExtractedRelationship] = {}
    dropped = 0
    src = {chunk_index}
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("ENTITY|"):
            parts = line.split("|")
            try:
                if len(parts) not in (3, 4):
                    raise ValueError("field count")
                _, name, etype = (p.strip() for p in parts[:3])
                attrs = _parse_attributes(parts[3]) if len(parts) == 4 else {}
                if not name or etype not in types:
                    raise ValueError("name/type")
            except ValueError:
                dropped += 1
                continue
            entities.setdefault(name, ExtractedEntity(name, etype, attrs, set(src)))
        elif line.startswith("REL|"):
            parts = [p.strip() for p in line.split("|")]
            try:
                if len(parts) != 5:
                    raise ValueError("field count")
                _, s, t, rtype, g = parts
                if not s or not t or s == t or not rtype:
                    raise ValueError("endpoints")
                gain = None if g == "-" else float(g)
            except ValueError:
                dropped += 1
                continue
            rels.setdefault((s, t, rtype), ExtractedRelationship(s, t, rtype, gain, set(src)))
    # relationships must close over the entity set of their own response
    kept = {}
    for key, r in rels.items():
        if r.source in entities and r.target in entities:
            kept[key] = r
        else:
            dropped += 1
    return GraphDelta(list(entities.values()), list(kept.values())), dropped


def extract_llm(chunk: Chunk, types: Sequence[str], client: ChatBackend) -> GraphDelta:
    response = client.complete(build_extraction_prompt(chunk, types))
    delta, dropped = parse_extraction_records(response, types, chunk.index)
    if not delta.entities and not delta.relationships:
        raise NoRecordsError(f"chunk {chunk.index}: response contained no parseable records")
    if dropped:
        log.warning("chunk %d: dropped %d unparseable records", chunk.index, dropped)
    delta.dropped = dropped
    return delta


# ---------------------------------------------------------------------------
# Merge
# ---------------------------------------------------------------------------


def merge_extractions(deltas: Iterable[GraphDelta]) -> GraphDelta:
    """Merge per-chunk deltas by entity name and relationship key.

    Attribute conflicts keep the value from the earliest chunk; the result is
    sorted so that merging is independent of the order of ``deltas``.
    """
    deltas = list(deltas)
    entities: dict[str, ExtractedEntity] = {}
    rels: dict[tuple[str, str, str], ExtractedRelationship] = {}

    def first_chunk(item) -> int:
        return min(item.source_chunks, default=-1)

    # visiting items by earliest source chunk makes first-writer-wins order independent
    all_entities = sorted(
        (e for d in deltas for e in d.entities), key=lambda e: (first_chunk(e), e.name, e.entity_type)
    )
    for e in all_entities:
        cur = entities.get(e.name)
        if cur is None:
            entities[e.name] = ExtractedEntity(e.name, e.entity_type, dict(e.attributes), set(e.source_chunks))
            continue
        for k, v in e.attributes.items():
            cur.attributes.setdefault(k, v)
        cur.source_chunks |= e.source_chunks

    all_rels = sorted((r for d in deltas for r in d.relationships), key=lambda r: (first_chunk(r), r.key))
    for r in all_rels:
        cur = rels.get(r.key)
        if cur is None:
            rels[r.key] = ExtractedRelationship(r.source, r.target, r.rel_type, r.gain_db, set(r.source_chunks))
            continue
        if cur.gain_db is not None and r.gain_db is not None and abs(cur.gain_db - r.gain_db) > GAIN_TOLERANCE_DB:
            raise MergeConflictError(
                f"relationship {r.key}: gain {cur.gain_db} (chunks {sorted(cur.source_chunks)}) "
                f"vs {r.gain_db} (chunks {sorted(r.source_chunks)})"
            )
        if cur.gain_db is None:
            cur.gain_db = r.gain_db
        cur.source_chunks |= r.source_chunks

    return GraphDelta(
        entities=[entities[k] for k in sorted(entities)],
        relationships=[rels[k] for k in sorted(rels)],
        dropped=sum(d.dropped for d in deltas),
    )


def extract_all(
    chunks: Sequence[Chunk],
    extractor: Callable[[Chunk], GraphDelta],
    threads: int = 1,
) -> GraphDelta:
    """Run ``extractor`` over every chunk (optionally in threads) and merge in index order."""
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            deltas = list(pool.map(extractor, chunks))
    else:
        deltas = [extractor(c) for c in chunks]
    return merge_extractions(deltas)


def canonical_delta(delta: GraphDelta) -> tuple[tuple, tuple]:
    """Content of a delta without chunk provenance, in canonical order.

    Two extractions of the same document agree on this form whatever the
    chunking, while ``source_chunks`` necessarily depends on chunk boundaries.
    """
    entities = tuple(sorted(
        (e.name, e.entity_type, tuple(sorted(e.attributes.items()))) for e in delta.entities
    ))
    rels = tuple(sorted((r.source, r.target, r.rel_type, r.gain_db) for r in delta.relationships))
    return entities, rels
