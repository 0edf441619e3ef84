"""CKM ingestion: CSV parsing, station labeling, document rendering, synthetic maps.

A channel knowledge map (CKM) is a table of transmitter/receiver positions
with the channel gain measured (or ray traced) between them.  Labeling turns
repeated positions into stable ``transmitter_i`` / ``receiver_j`` identities
so that the rendered text document mentions each device under one name.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, MalformedRowError

Vec3 = tuple[float, float, float]

CSV_HEADER = ("tx_x", "tx_y", "tx_z", "rx_x", "rx_y", "rx_z", "gain_db")
DEFAULT_DEDUP_TOL = 1e-6
N_SHADOWING_FEATURES = 64
MIN_PAIR_DISTANCE = 1e-6

_NUM = r"(-?\d+\.\d+)"
_XYZ = rf"\({_NUM}, {_NUM}, {_NUM}\)"
LINE_RE = re.compile(
    rf"^transmitter_(\d+) at {_XYZ} transmits the signal to receiver_(\d+) at {_XYZ}"
    rf" with channel gain {_NUM} dB\.$"
)


@dataclass(frozen=True)
class RawCkmRecord:
    tx_pos: Vec3
    rx_pos: Vec3
    gain_db: float

    def __post_init__(self):
        values = (*self.tx_pos, *self.rx_pos, self.gain_db)
        if len(self.tx_pos) != 3 or len(self.rx_pos) != 3:
            raise ValueError("positions must be 3D")
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite value in record {values}")


@dataclass(frozen=True)
class LabeledPair:
    tx_label: int
    rx_label: int
    tx_pos: Vec3
    rx_pos: Vec3
    gain_db: float

    @property
    def distance(self) -> float:
        return math.dist(self.tx_pos, self.rx_pos)


@dataclass(frozen=True)
class StationRegistry:
    role: str  # "transmitter" | "receiver"
    entries: tuple[tuple[int, Vec3], ...]

    def __len__(self) -> int:
        return len(self.entries)

    def position(self, label: int) -> Vec3:
        return self.entries[label - 1][1]


@dataclass(frozen=True)
class SyntheticCkmConfig:
    """Parameters of a seeded synthetic CKM.

    ``area`` is ``((xmin, ymin, zmin), (xmax, ymax, zmax))`` in meters.  Gains
    follow a log-distance path loss plus a spatially correlated shadowing
    field evaluated at the midpoint of each link.
    """

    n_pairs: int = 2000
    area: tuple[Vec3, Vec3] = ((0.0, 0.0, 1.0), (300.0, 300.0, 2.0))
    pl_intercept_db: float = -40.0
    pl_exponent: float = 3.0
    shadowing_sigma_db: float = 6.0
    shadowing_correlation_m: float = 30.0
    station_reuse_prob: float = 0.8
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.n_pairs < 1:
            problems.append("n_pairs must be >= 1")
        if self.shadowing_sigma_db < 0:
            problems.append("shadowing_sigma_db must be >= 0")
        if self.shadowing_correlation_m <= 0:
            problems.append("shadowing_correlation_m must be > 0")
        if not 0.0 <= self.station_reuse_prob <= 1.0:
            problems.append("station_reuse_prob must lie in [0, 1]")
        lo, hi = self.area
        if len(lo) != 3 or len(hi) != 3 or any(b <= a for a, b in zip(lo, hi)):
            problems.append("area must be a 3D box with positive volume")
        if self.seed < 0:
            problems.append("seed must be unsigned")
        if problems:
            raise ValueError("; ".join(problems))


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def parse_ckm(path: str | Path) -> list[RawCkmRecord]:
    """Read a CKM CSV. Row numbers in errors count data rows from 1."""
    path = Path(path)
    try:
        fh = path.open("r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read CKM file {path}: {exc}") from exc
    records = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: missing header")
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise DataError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise MalformedRowError(row_no, f"expected 7 fields, got {len(row)}")
            try:
                v = [float(x) for x in row]
            except ValueError:
                raise MalformedRowError(row_no, f"non-numeric field in {row!r}") from None
            if not all(math.isfinite(x) for x in v):
                raise MalformedRowError(row_no, "non-finite value")
            records.append(RawCkmRecord((v[0], v[1], v[2]), (v[3], v[4], v[5]), v[6]))
    return records


def write_ckm(records: Iterable[RawCkmRecord], path: str | Path) -> None:
    # repr() keeps floats bit-exact through a write/parse cycle
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([repr(float(x)) for x in (*r.tx_pos, *r.rx_pos, r.gain_db)])


def write_pairs(pairs: Iterable[LabeledPair], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("tx_label", "rx_label", *CSV_HEADER))
        for p in pairs:
            writer.writerow(
                [p.tx_label, p.rx_label]
                + [repr(float(x)) for x in (*p.tx_pos, *p.rx_pos, p.gain_db)]
            )


def read_pairs(path: str | Path) -> list[LabeledPair]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read pairs file {path}: {exc}") from exc
    pairs = []
    for row_no, row in enumerate(rows[1:], start=1):
        try:
            v = [float(x) for x in row[2:]]
            pairs.append(
                LabeledPair(int(row[0]), int(row[1]), tuple(v[0:3]), tuple(v[3:6]), v[6])
            )
        except (ValueError, IndexError):
            raise MalformedRowError(row_no, f"bad labeled pair {row!r}") from None
    return pairs


# ---------------------------------------------------------------------------
# Labeling
# ---------------------------------------------------------------------------


class _StationIndex:
    """First-appearance labeling with a spatial hash sized to the tolerance."""

    def __init__(self, tol: float):
        self.tol = tol
        self.positions: list[Vec3] = []
        self._cells: dict[tuple, list[int]] = {}

    def _cell(self, pos: Vec3) -> tuple:
        if self.tol == 0:
            return pos
        return tuple(math.floor(c / self.tol) for c in pos)

    def label_for(self, pos: Vec3) -> int:
        cell = self._cell(pos)
        if self.tol == 0:
            hits = self._cells.get(cell, [])
        else:
            hits = []
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    for dz in (-1, 0, 1):
                        hits.extend(self._cells.get((cell[0] + dx, cell[1] + dy, cell[2] + dz), ()))
        matches = [i for i in hits if math.dist(self.positions[i], pos) <= self.tol]
        if matches:
            return min(matches) + 1
        self.positions.append(pos)
        self._cells.setdefault(cell, []).append(len(self.positions) - 1)
        return len(self.positions)


def label_stations(
    records: Sequence[RawCkmRecord], tol: float = DEFAULT_DEDUP_TOL
) -> tuple[StationRegistry, StationRegistry, list[LabeledPair]]:
    """Assign transmitter/receiver labels in order of first appearance.

    A position within ``tol`` meters of an already labeled position of the
    same role reuses the earliest such label; otherwise it receives the next
    integer.  The canonical position of a label is the first one seen.
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    tx_index, rx_index = _StationIndex(tol), _StationIndex(tol)
    pairs = []
    for r in records:
        i = tx_index.label_for(tuple(r.tx_pos))
        j = rx_index.label_for(tuple(r.rx_pos))
        pairs.append(LabeledPair(i, j, tuple(r.tx_pos), tuple(r.rx_pos), r.gain_db))
    tx_reg = StationRegistry("transmitter", tuple(enumerate(tx_index.positions, start=1)))
    rx_reg = StationRegistry("receiver", tuple(enumerate(rx_index.positions, start=1)))
    return tx_reg, rx_reg, pairs


# ---------------------------------------------------------------------------
# Document
# ---------------------------------------------------------------------------


def format_xyz(pos: Sequence[float]) -> str:
    return "({:.2f}, {:.2f}, {:.2f})".format(*pos)


def render_line(pair: LabeledPair) -> str:
    return (
        f"transmitter_{pair.tx_label} at {format_xyz(pair.tx_pos)} transmits the signal "
        f"to receiver_{pair.rx_label} at {format_xyz(pair.rx_pos)} "
        f"with channel gain {pair.gain_db:.2f} dB."
    )


def render_document(pairs: Iterable[LabeledPair]) -> str:
    """One line per pair, newline separated, no trailing newline."""
    return "\n".join(render_line(p) for p in pairs)


def parse_line(line: str) -> LabeledPair | None:
    """Inverse of :func:`render_line`; ``None`` when the line does not match."""
    m = LINE_RE.match(line.strip())
    if m is None:
        return None
    g = m.groups()
    return LabeledPair(
        tx_label=int(g[0]),
        rx_label=int(g[4]),
        tx_pos=(float(g[1]), float(g[2]), float(g[3])),
        rx_pos=(float(g[5]), float(g[6]), float(g[7])),
        gain_db=float(g[8]),
    )


# ---------------------------------------------------------------------------
# Synthetic CKM
# ---------------------------------------------------------------------------


class ShadowingField:
    """Random cosine features approximating a squared-exponential Gaussian process.

    ``S(x) = sigma * sqrt(2/F) * sum_f cos(w_f . x + b_f)`` with
    ``w_f ~ N(0, I / L^2)`` and ``b_f ~ U(0, 2 pi)``, which has marginal
    variance ``sigma^2`` and covariance ``sigma^2 exp(-|dx|^2 / (2 L^2))``.
    """

    def __init__(self, sigma_db: float, correlation_m: float, rng: np.random.Generator,
                 n_features: int = N_SHADOWING_FEATURES):
        self.sigma_db = sigma_db
        self.freqs = rng.normal(0.0, 1.0 / correlation_m, size=(n_features, 3))
        self.phases = rng.uniform(0.0, 2.0 * math.pi, size=n_features)
        self._scale = sigma_db * math.sqrt(2.0 / n_features)

    def __call__(self, pos) -> float:
        if self.sigma_db == 0:
            return 0.0
        return float(self._scale * np.cos(self.freqs @ np.asarray(pos, float) + self.phases).sum())


def path_loss_db(distance: float, intercept_db: float, exponent: float) -> float:
    return intercept_db - 10.0 * exponent * math.log10(distance)


def generate_synthetic_ckm(cfg: SyntheticCkmConfig) -> list[RawCkmRecord]:
    rng = np.random.default_rng(cfg.seed)
    field = ShadowingField(cfg.shadowing_sigma_db, cfg.shadowing_correlation_m, rng)
    lo = np.asarray(cfg.area[0], float)
    hi = np.asarray(cfg.area[1], float)

    def draw(pool: list[Vec3]) -> tuple[Vec3, bool]:
        if pool and rng.random() < cfg.station_reuse_prob:
            return pool[int(rng.integers(len(pool)))], False
        return tuple(float(c) for c in rng.uniform(lo, hi)), True

    txs: list[Vec3] = []
    rxs: list[Vec3] = []
    records = []
    seen: set[tuple[Vec3, Vec3]] = set()
    while len(records) < cfg.n_pairs:
        tx, tx_new = draw(txs)
        rx, rx_new = draw(rxs)
        d = math.dist(tx, rx)
        if d < MIN_PAIR_DISTANCE:
            continue
        # a repeated (tx, rx) link would leak across a train/test split; with
        # reuse probability 1 no new link can ever be drawn, so repeats stay
        if (tx, rx) in seen and cfg.station_reuse_prob < 1.0:
            continue
        seen.add((tx, rx))
        if tx_new:
            txs.append(tx)
        if rx_new:
            rxs.append(rx)
        mid = [(a + b) / 2.0 for a, b in zip(tx, rx)]
        gain = path_loss_db(d, cfg.pl_intercept_db, cfg.pl_exponent) + field(mid)
        records.append(RawCkmRecord(tx, rx, gain))
    return records
