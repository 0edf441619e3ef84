"""Answer generation: an offline inverse-distance predictor and a chat-completion backend."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .backends import BackendConfig, ChatClient
from .errors import BackendError, NoEvidenceError, UnparseableResponseError
from .extraction import ChatBackend
from .ingest import format_xyz
from .retrieval import GainQuery, RetrievalContext

# Must exceed the worst-case displacement of a query at full precision from
# the same pair rendered with 2 decimals: 2 * sqrt(3) * 0.005 m ~= 0.0173 m.
DEFAULT_EPS_M = 0.02

SYSTEM_PROMPT = "You are a wireless channel expert. Use ONLY the provided channel knowledge."
GAIN_MARKER_RE = re.compile(r"PREDICTED_GAIN_DB:\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)")


@dataclass
class GainAnswer:
    query: GainQuery
    predicted_gain_db: float
    candidates: list[float] = field(default_factory=list)
    evidence_count: int = 0
    raw_text: str | None = None

    def to_dict(self) -> dict:
        return {
            "tx_pos": list(self.query.tx_pos),
            "rx_pos": list(self.query.rx_pos),
            "predicted_gain_db": self.predicted_gain_db,
            "candidates": list(self.candidates),
            "evidence_count": self.evidence_count,
            "raw_text": self.raw_text,
        }


def mock_predict_gain(ctx: RetrievalContext, q: GainQuery, eps: float = DEFAULT_EPS_M) -> GainAnswer:
    """Exact match if a retrieved pair lies within ``eps``, else inverse-distance weighting.

    Weights are ``1 / (combined_distance + eps)``; the combined distance of a
    triple is already relative to ``q``.
    """
    triples = ctx.triples
    if not triples:
        raise NoEvidenceError("retrieval context holds no gain evidence")
    close = [t for t in triples if t.combined_distance < eps]
    if close:
        g = min(close, key=lambda t: t.sort_key).gain_db
    else:
        num = den = 0.0
        for t in triples:
            w = 1.0 / (t.combined_distance + eps)
            num += w * t.gain_db
            den += w
        g = num / den
    return GainAnswer(q, g, [g], len(triples))


def mock_predict_from_reports(ctx: RetrievalContext, q: GainQuery) -> GainAnswer:
    """Offline answer for a global-search context: mean gain of the top-ranked report."""
    for rep, _ in ctx.reports:
        if rep.gain_stats:
            g = rep.gain_stats["mean"]
            return GainAnswer(q, g, [g], len(ctx.reports))
    raise NoEvidenceError("no retrieved community report carries gain statistics")


def serialize_context(ctx: RetrievalContext) -> str:
    lines = [t.render() for t in ctx.triples]
    lines += [rep.rendered_text for rep, _ in ctx.reports]
    return "\n".join(lines)


def build_messages(ctx: RetrievalContext, q: GainQuery) -> list[dict[str, str]]:
    user = (
        serialize_context(ctx)
        + "\nPredict the channel gain in dB for transmitter at "
        + format_xyz(q.tx_pos)
        + " and receiver at "
        + format_xyz(q.rx_pos)
        + ". Reply with one line: PREDICTED_GAIN_DB: <value>"
    )
    return [{"role": "system", "content": SYSTEM_PROMPT}, {"role": "user", "content": user}]


def parse_gain_response(text: str) -> list[float]:
    return [float(m.group(1)) for m in GAIN_MARKER_RE.finditer(text)]


def answer_from_text(text: str, q: GainQuery, evidence_count: int) -> GainAnswer:
    candidates = parse_gain_response(text)
    if not candidates:
        raise UnparseableResponseError(f"no PREDICTED_GAIN_DB marker in response: {text[:120]!r}")
    return GainAnswer(q, max(candidates), candidates, max(evidence_count, 1), text)


def generate_remote(ctx: RetrievalContext, q: GainQuery, backend: ChatBackend | BackendConfig) -> GainAnswer:
    if isinstance(backend, BackendConfig):
        if backend.kind != "remote":
            raise BackendError("generate_remote needs a remote backend")
        backend = ChatClient(backend)
    text = backend.complete(build_messages(ctx, q))
    return answer_from_text(text, q, len(ctx.triples) + len(ctx.reports))
