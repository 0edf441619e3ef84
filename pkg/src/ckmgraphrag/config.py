"""Run configuration: a flat ``section.key = value`` file, CLI overrides, defaults.

The file is TOML restricted to dotted keys, e.g.::

    seed = 42
    retrieval.k_anchor = 4
    generation.backend = "mock"
    eval.power_levels_dbm = [0, 5, 10, 15, 20]
"""

from __future__ import annotations

import hashlib
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError


@dataclass(frozen=True)
class Option:
    key: str
    kind: str  # int | float | str | bool | floats | strs
    default: Any
    help: str
    check: Callable[[Any], bool] | None = None
    requirement: str = ""


def _pos(x) -> bool:
    return x > 0


def _nonneg(x) -> bool:
    return x >= 0


OPTIONS: tuple[Option, ...] = (
    Option("seed", "int", 42, "top-level seed; stage seeds derive from it", _nonneg, ">= 0"),
    Option("threads", "int", 1, "worker threads for extraction and evaluation", _pos, ">= 1"),
    Option("paths.workdir", "str", ".", "directory for all generated files"),
    Option("paths.ckm", "str", "", "CKM CSV path (default: <workdir>/ckm.csv)"),
    Option("ingest.tol", "float", 1e-6, "station dedup tolerance in meters", _nonneg, ">= 0"),
    Option("chunking.chunk_size", "int", 1000, "chunk size in whitespace tokens", _pos, ">= 1"),
    Option("extraction.mode", "str", "rule", "rule | llm", lambda v: v in ("rule", "llm"), "rule or llm"),
    Option("extraction.reified", "bool", False, "emit separate channel gain entities"),
    Option("extraction.entity_types", "strs",
           ["transmitter", "receiver", "channel gain", "coordinate", "value"],
           "entity types offered to the extractor", lambda v: len(v) > 0, "nonempty"),
    Option("embedding.dim", "int", 64, "hashed embedding dimension", _pos, ">= 1"),
    Option("leiden.resolution", "float", 1.0, "modularity resolution", _pos, "> 0"),
    Option("leiden.max_community_size", "int", 50, "re-partition communities above this size", _pos, ">= 1"),
    Option("leiden.max_sweeps", "int", 10, "maximum Leiden improvement sweeps", _pos, ">= 1"),
    Option("retrieval.k_anchor", "int", 4, "anchor stations per role (local search)", _pos, ">= 1"),
    Option("retrieval.hops", "int", 1, "graph hops from the anchors (local search)", _nonneg, ">= 0"),
    Option("retrieval.m", "int", 8, "gain triples returned by local search", _nonneg, ">= 0"),
    Option("retrieval.top_k", "int", 4, "chunks returned by flat retrieval", _nonneg, ">= 0"),
    Option("retrieval.r", "int", 5, "reports returned by global search", _nonneg, ">= 0"),
    Option("retrieval.budget", "int", 2500, "token budget per retrieval", _nonneg, ">= 0"),
    Option("generation.backend", "str", "mock", "mock | remote", lambda v: v in ("mock", "remote"), "mock or remote"),
    Option("generation.base_url", "str", "", "chat-completion base URL (remote backend)"),
    Option("generation.model", "str", "gpt-3.5-turbo", "model name sent to the remote backend"),
    Option("generation.timeout", "float", 60.0, "remote request timeout in seconds", _pos, "> 0"),
    Option("generation.max_retries", "int", 3, "remote retries on transport failure", _nonneg, ">= 0"),
    Option("generation.token_env", "str", "CKMGRAPHRAG_API_KEY", "environment variable holding the API token"),
    Option("generation.eps", "float", 0.02, "exact-match radius of the offline predictor (m)", _pos, "> 0"),
    Option("eval.power_levels_dbm", "floats", [0.0, 5.0, 10.0, 15.0, 20.0], "transmit powers (dBm)",
           lambda v: len(v) > 0, "nonempty"),
    Option("eval.noise_dbm", "float", -90.0, "noise power (dBm)"),
    Option("eval.train_fraction", "float", 0.8, "train share of the split", lambda v: 0 < v < 1, "in (0, 1)"),
    Option("synth.n_pairs", "int", 2000, "pairs in the synthetic CKM", _pos, ">= 1"),
    Option("synth.area", "floats", [0.0, 0.0, 1.0, 300.0, 300.0, 2.0],
           "xmin,ymin,zmin,xmax,ymax,zmax in meters",
           lambda v: len(v) == 6 and all(v[i + 3] > v[i] for i in range(3)), "6 values, positive volume"),
    Option("synth.pl_intercept_db", "float", -40.0, "path loss at 1 m (dB)"),
    Option("synth.pl_exponent", "float", 3.0, "path loss exponent"),
    Option("synth.shadowing_sigma_db", "float", 6.0, "shadowing standard deviation (dB)", _nonneg, ">= 0"),
    Option("synth.shadowing_correlation_m", "float", 30.0, "shadowing correlation length (m)", _pos, "> 0"),
    Option("synth.station_reuse_prob", "float", 0.8, "probability a pair reuses a station",
           lambda v: 0 <= v <= 1, "in [0, 1]"),
)
OPTION_MAP = {o.key: o for o in OPTIONS}


def _coerce(opt: Option, value: Any) -> Any:
    kind = opt.kind
    if kind == "bool":
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "1", "0", "yes", "no"):
            return value.lower() in ("true", "1", "yes")
        raise ValueError("expected a boolean")
    if kind == "int":
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ValueError("expected an integer")
        return int(value)
    if kind == "float":
        if isinstance(value, bool):
            raise ValueError("expected a number")
        v = float(value)
        if not math.isfinite(v):
            raise ValueError("expected a finite number")
        return v
    if kind == "str":
        if not isinstance(value, str):
            raise ValueError("expected a string")
        return value
    if isinstance(value, str):
        value = [s.strip() for s in value.split(",") if s.strip()]
    if not isinstance(value, (list, tuple)):
        raise ValueError("expected a list")
    if kind == "floats":
        out = [float(v) for v in value]
        if not all(math.isfinite(v) for v in out):
            raise ValueError("expected finite numbers")
        return out
    return [str(v) for v in value]


def _flatten(data: dict, prefix: str = "") -> dict[str, Any]:
    out = {}
    for k, v in data.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def read_config_file(path: str | Path) -> dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            return _flatten(tomllib.load(fh))
    except OSError as exc:
        raise ConfigError([f"cannot read config file {path}: {exc}"]) from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"config file {path}: {exc}"]) from exc


class RunConfig:
    """Validated option values; attribute access via ``cfg["section.key"]``."""

    def __init__(self, values: dict[str, Any]):
        self._values = values

    def __getitem__(self, key: str) -> Any:
        return self._values[key]

    def as_dict(self) -> dict[str, Any]:
        return dict(self._values)

    @property
    def workdir(self) -> Path:
        return Path(self["paths.workdir"])

    @property
    def ckm_path(self) -> Path:
        return Path(self["paths.ckm"]) if self["paths.ckm"] else self.workdir / "ckm.csv"

    def stage_seed(self, stage: str) -> int:
        return derive_seed(self["seed"], stage)


def derive_seed(seed: int, stage: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{stage}".encode(), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def load_config(file_values: dict[str, Any] | None = None,
                overrides: dict[str, Any] | None = None) -> RunConfig:
    """Merge defaults < file < overrides; every problem is reported in one error."""
    problems = []
    merged = {o.key: o.default for o in OPTIONS}
    for source, values in (("config file", file_values or {}), ("flag", overrides or {})):
        for key, raw in values.items():
            opt = OPTION_MAP.get(key)
            if opt is None:
                problems.append(f"{key}: unknown key ({source})")
                continue
            try:
                merged[key] = _coerce(opt, raw)
            except (TypeError, ValueError) as exc:
                problems.append(f"{key}: {exc} ({source})")
    for opt in OPTIONS:
        if opt.check is not None and opt.key not in {p.split(":")[0] for p in problems}:
            if not opt.check(merged[opt.key]):
                problems.append(f"{opt.key}: must be {opt.requirement}, got {merged[opt.key]!r}")
    if merged["generation.backend"] == "remote" and not merged["generation.base_url"]:
        problems.append("generation.base_url: required when generation.backend is remote")
    if merged["extraction.mode"] == "llm" and not merged["generation.base_url"]:
        problems.append("generation.base_url: required when extraction.mode is llm")
    if problems:
        raise ConfigError(problems)
    return RunConfig(merged)
