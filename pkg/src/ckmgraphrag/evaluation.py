"""Path-loss baseline, sum rate, and the GraphRAG / vanilla RAG / PL comparison."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import CkmRagError, DataError
from .generation import DEFAULT_EPS_M, GainAnswer, mock_predict_gain
from .graph import KnowledgeGraph
from .ingest import LabeledPair
from .retrieval import (
    DEFAULT_BUDGET, DEFAULT_HOPS, DEFAULT_K_ANCHOR, DEFAULT_M, DEFAULT_TOP_K,
    GainQuery, RetrievalContext, flat_retrieve, local_search,
)

PREDICTORS = ("graphrag-local", "vanilla-flat", "pl-model")
DEFAULT_POWERS_DBM = (0.0, 5.0, 10.0, 15.0, 20.0)
DEFAULT_NOISE_DBM = -90.0
PLOT_COLUMNS = ("predictor", "power_dbm", "sum_rate_bps_hz", "rmse_db")


@dataclass(frozen=True)
class PathLossModel:
    intercept_db: float
    exponent: float

    def predict(self, distance: float) -> float:
        if not distance > 0:
            raise ValueError("path loss needs a positive distance")
        return self.intercept_db - 10.0 * self.exponent * math.log10(distance)


@dataclass(frozen=True)
class EvalConfig:
    power_levels_dbm: tuple[float, ...] = DEFAULT_POWERS_DBM
    noise_dbm: float = DEFAULT_NOISE_DBM
    train_fraction: float = 0.8
    split_seed: int = 0
    predictors: tuple[str, ...] = PREDICTORS
    k_anchor: int = DEFAULT_K_ANCHOR
    hops: int = DEFAULT_HOPS
    m: int = DEFAULT_M
    top_k: int = DEFAULT_TOP_K
    budget: int = DEFAULT_BUDGET
    eps: float = DEFAULT_EPS_M

    def __post_init__(self):
        if not self.power_levels_dbm:
            raise ValueError("power_levels_dbm must be nonempty")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        unknown = set(self.predictors) - set(PREDICTORS)
        if unknown:
            raise ValueError(f"unknown predictors {sorted(unknown)}")


@dataclass
class PredictorResult:
    rmse_db: float | None
    mae_db: float | None
    n_predicted: int
    n_failed: int
    sum_rate: list[tuple[float, float]]  # (power_dbm, bits/s/Hz)


@dataclass
class EvalReport:
    pair_count: int
    train_count: int
    predictors: dict[str, PredictorResult]
    reference_sum_rate: list[tuple[float, float]]
    failures: list[dict] = field(default_factory=list)
    test_gain_reads_during_prediction: int = 0
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "pair_count": self.pair_count,
            "train_count": self.train_count,
            "predictors": {
                name: {
                    "rmse_db": r.rmse_db, "mae_db": r.mae_db,
                    "n_predicted": r.n_predicted, "n_failed": r.n_failed,
                    "sum_rate": [{"power_dbm": p, "bps_hz": v} for p, v in r.sum_rate],
                }
                for name, r in self.predictors.items()
            },
            "reference_sum_rate": [{"power_dbm": p, "bps_hz": v} for p, v in self.reference_sum_rate],
            "failures": self.failures,
            "test_gain_reads_during_prediction": self.test_gain_reads_during_prediction,
            "config": self.config,
        }


# ---------------------------------------------------------------------------
# Path loss and rate
# ---------------------------------------------------------------------------


def fit_path_loss(pairs: Sequence[LabeledPair]) -> PathLossModel:
    """Least squares of gain against -10 log10(d): gain = intercept - 10 n log10(d)."""
    d = np.array([p.distance for p in pairs], dtype=float)
    y = np.array([p.gain_db for p in pairs], dtype=float)
    if len(d) < 2:
        raise ValueError("path loss fit needs at least 2 pairs")
    if np.any(d <= 0):
        raise ValueError("path loss fit needs positive distances")
    x = -10.0 * np.log10(d)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx <= 1e-12 * max(1.0, float(x @ x)):
        raise ValueError("path loss fit is singular: all distances are equal")
    exponent = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - exponent * x.mean())
    return PathLossModel(intercept, exponent)


def predict_pl(model: PathLossModel, q: GainQuery) -> float:
    return model.predict(math.dist(q.tx_pos, q.rx_pos))


def sum_rate(gains_db: Sequence[float], p_dbm: float, noise_dbm: float) -> float:
    """Noise-limited Shannon sum rate in bits/s/Hz."""
    return math.fsum(math.log2(1.0 + 10.0 ** ((p_dbm + g - noise_dbm) / 10.0)) for g in gains_db)


# ---------------------------------------------------------------------------
# Split and evaluation
# ---------------------------------------------------------------------------


def split_pairs(pairs: Sequence[LabeledPair], train_fraction: float, seed: int
                ) -> tuple[list[LabeledPair], list[LabeledPair]]:
    """Seeded uniform split; each side keeps the original pair order."""
    n = len(pairs)
    n_train = int(round(train_fraction * n))
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return [pairs[i] for i in train_idx], [pairs[i] for i in test_idx]


class HeldOutGains:
    """Test-split ground truth. Reads while predictions are running are counted."""

    def __init__(self, gains: Sequence[float]):
        self._gains = list(gains)
        self.predicting = False
        self.reads_during_prediction = 0

    def __len__(self) -> int:
        return len(self._gains)

    def __getitem__(self, i: int) -> float:
        if self.predicting:
            self.reads_during_prediction += 1
        return self._gains[i]


GainGenerator = Callable[[RetrievalContext, GainQuery], GainAnswer]


def evaluate(
    graph: KnowledgeGraph,
    train_pairs: Sequence[LabeledPair],
    test_pairs: Sequence[LabeledPair],
    cfg: EvalConfig,
    generator: GainGenerator | None = None,
    threads: int = 1,
) -> EvalReport:
    """Predict every test pair with each predictor and score gains and sum rates.

    ``graph`` must be built from ``train_pairs`` only.  ``generator`` turns a
    retrieval context into an answer; the default is the offline predictor.
    """
    generator = generator or (lambda ctx, q: mock_predict_gain(ctx, q, cfg.eps))
    queries = [GainQuery(p.tx_pos, p.rx_pos) for p in test_pairs]
    truth = HeldOutGains([p.gain_db for p in test_pairs])
    pl = fit_path_loss(train_pairs) if "pl-model" in cfg.predictors else None

    def predict(name: str, q: GainQuery) -> float:
        if name == "pl-model":
            return predict_pl(pl, q)
        if name == "graphrag-local":
            ctx = local_search(graph, q, cfg.k_anchor, cfg.hops, cfg.m, cfg.budget)
        else:
            ctx = flat_retrieve(graph, q, cfg.top_k, cfg.budget)
        return generator(ctx, q).predicted_gain_db

    def predict_all(i: int) -> dict[str, float | str]:
        out: dict[str, float | str] = {}
        for name in cfg.predictors:
            try:
                out[name] = predict(name, queries[i])
            except (CkmRagError, ValueError) as exc:
                out[name] = f"{type(exc).__name__}: {exc}"
        return out

    truth.predicting = True
    try:
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                rows = list(pool.map(predict_all, range(len(queries))))
        else:
            rows = [predict_all(i) for i in range(len(queries))]
    finally:
        truth.predicting = False

    failures = []
    results = {}
    for name in cfg.predictors:
        errors, predicted = [], []
        for i, row in enumerate(rows):
            v = row[name]
            if isinstance(v, str):
                failures.append({"predictor": name, "pair_index": i, "error": v})
                continue
            predicted.append(v)
            errors.append(v - truth[i])
        err = np.array(errors)
        results[name] = PredictorResult(
            rmse_db=float(np.sqrt(np.mean(err ** 2))) if len(err) else None,
            mae_db=float(np.mean(np.abs(err))) if len(err) else None,
            n_predicted=len(predicted),
            n_failed=len(rows) - len(predicted),
            sum_rate=[(p, sum_rate(predicted, p, cfg.noise_dbm)) for p in cfg.power_levels_dbm],
        )
    true_gains = [truth[i] for i in range(len(truth))]
    return EvalReport(
        pair_count=len(test_pairs),
        train_count=len(train_pairs),
        predictors=results,
        reference_sum_rate=[(p, sum_rate(true_gains, p, cfg.noise_dbm)) for p in cfg.power_levels_dbm],
        failures=failures,
        test_gain_reads_during_prediction=truth.reads_during_prediction,
        config={k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg).items()},
    )


# ---------------------------------------------------------------------------
# Plot data
# ---------------------------------------------------------------------------


def plot_rows(report: EvalReport) -> list[tuple[str, str, str, str]]:
    rows = []
    for name, res in report.predictors.items():
        rmse = "" if res.rmse_db is None else f"{res.rmse_db:.6g}"
        for power, rate in res.sum_rate:
            rows.append((name, f"{power:.6g}", f"{rate:.6g}", rmse))
    return rows


def emit_plot_data(report: EvalReport, path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PLOT_COLUMNS)
    writer.writerows(plot_rows(report))
    try:
        Path(path).write_text(buf.getvalue(), encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write plot data to {path}: {exc}") from exc
