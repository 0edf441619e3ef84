from __future__ import annotations

import csv
import io
import math
import random

import mpmath
import numpy as np
import pytest

from ckmgraphrag.evaluation import (
    PLOT_COLUMNS, EvalConfig, PathLossModel, emit_plot_data, evaluate, fit_path_loss, predict_pl,
    split_pairs, sum_rate,
)
from ckmgraphrag.ingest import LabeledPair
from ckmgraphrag.pipeline import graph_from_pairs
from ckmgraphrag.retrieval import GainQuery

from conftest import synthetic_pairs


def _pl_pairs(ds, intercept, exponent):
    return [LabeledPair(i + 1, 1, (0.0, 0.0, 0.0), (d, 0.0, 0.0), intercept - 10 * exponent * math.log10(d))
            for i, d in enumerate(ds)]


def test_fit_noiseless_recovers_parameters():
    m = fit_path_loss(_pl_pairs(np.linspace(1, 500, 200), -40.0, 2.0))
    assert m.intercept_db == pytest.approx(-40.0, abs=1e-6)
    assert m.exponent == pytest.approx(2.0, abs=1e-6)


def test_fit_two_points_interpolates():
    pairs = [LabeledPair(1, 1, (0, 0, 0), (3.0, 0, 0), -50.0), LabeledPair(2, 1, (0, 0, 0), (30.0, 0, 0), -81.0)]
    m = fit_path_loss(pairs)
    # closed form: exponent = (g1 - g2) / (10 log10(d2/d1)) = 31 / 10
    assert m.exponent == pytest.approx(3.1, abs=1e-12)
    for p in pairs:
        assert m.predict(p.distance) == pytest.approx(p.gain_db, abs=1e-9)


def test_fit_errors():
    with pytest.raises(ValueError):
        fit_path_loss(_pl_pairs([5.0, 5.0, 5.0], -40, 2))
    with pytest.raises(ValueError):
        fit_path_loss(_pl_pairs([5.0], -40, 2))
    with pytest.raises(ValueError):
        fit_path_loss([LabeledPair(1, 1, (0, 0, 0), (0, 0, 0), -1.0), *_pl_pairs([2.0], -40, 2)])
    with pytest.raises(ValueError):
        PathLossModel(-40, 2).predict(0.0)


@pytest.mark.parametrize("seed", range(5))
def test_fit_shadowed_exponent(seed):
    rng = np.random.default_rng(seed)
    d = rng.uniform(1, 300, 10_000)
    g = -40 - 30 * np.log10(d) + rng.normal(0, 6, d.size)
    pairs = [LabeledPair(1, 1, (0.0, 0.0, 0.0), (float(x), 0.0, 0.0), float(y)) for x, y in zip(d, g)]
    assert abs(fit_path_loss(pairs).exponent - 3.0) <= 0.05


def test_fit_beats_constant_predictor():
    pairs = synthetic_pairs(400, seed=2)
    m = fit_path_loss(pairs)
    g = np.array([p.gain_db for p in pairs])
    res_pl = np.sqrt(np.mean([(m.predict(p.distance) - p.gain_db) ** 2 for p in pairs]))
    assert res_pl <= np.sqrt(np.mean((g - g.mean()) ** 2))


def test_predict_pl_examples():
    m = PathLossModel(-40.0, 2.0)
    assert predict_pl(m, GainQuery((0, 0, 0), (1, 0, 0))) == -40.0
    assert predict_pl(m, GainQuery((0, 0, 0), (10, 0, 0))) == pytest.approx(-60.0, abs=1e-12)
    mpmath.mp.dps = 40
    want = mpmath.mpf(-40) - 20 * mpmath.log10(mpmath.mpf("37.2"))
    assert m.predict(37.2) == pytest.approx(float(want), abs=1e-12)


def test_sum_rate_examples():
    assert sum_rate([-70.0], 20.0, -50.0) == 1.0
    assert sum_rate([], 20.0, -90.0) == 0.0
    mpmath.mp.dps = 40
    want = mpmath.log(1 + mpmath.mpf(10) ** 4, 2)
    assert sum_rate([-70.0], 20.0, -90.0) == pytest.approx(float(want), abs=1e-12)
    assert float(want) == pytest.approx(13.2879, abs=1e-4)


def test_sum_rate_monotone_permutation_and_additive():
    rng = random.Random(0)
    gains = [rng.uniform(-130, -50) for _ in range(50)]
    rates = [sum_rate(gains, p, -90.0) for p in (0, 5, 10, 15, 20)]
    assert all(a < b for a, b in zip(rates, rates[1:]))
    shuffled = gains[:]
    rng.shuffle(shuffled)
    assert sum_rate(shuffled, 10, -90) == pytest.approx(sum_rate(gains, 10, -90), rel=1e-15)
    assert sum_rate(gains, 10, -90) == pytest.approx(
        sum_rate(gains[:20], 10, -90) + sum_rate(gains[20:], 10, -90), rel=1e-14)


def test_split_is_seeded_disjoint_and_ordered():
    pairs = synthetic_pairs(100, seed=1)
    tr, te = split_pairs(pairs, 0.8, 5)
    assert (len(tr), len(te)) == (80, 20)
    assert split_pairs(pairs, 0.8, 5) == (tr, te)
    idx = {id(p): i for i, p in enumerate(pairs)}
    assert [idx[id(p)] for p in tr] == sorted(idx[id(p)] for p in tr)
    assert not {id(p) for p in tr} & {id(p) for p in te}


def test_eval_config_validation():
    with pytest.raises(ValueError):
        EvalConfig(power_levels_dbm=())
    with pytest.raises(ValueError):
        EvalConfig(train_fraction=1.0)
    with pytest.raises(ValueError):
        EvalConfig(predictors=("oracle",))


def test_zero_shadowing_pl_is_exact():
    pairs = synthetic_pairs(300, seed=4, shadowing_sigma_db=0.0)
    tr, te = split_pairs(pairs, 0.8, 0)
    rep = evaluate(graph_from_pairs(tr), tr, te, EvalConfig())
    assert rep.predictors["pl-model"].rmse_db < 1e-6
    assert rep.test_gain_reads_during_prediction == 0


def test_coincident_test_point_is_exact():
    pairs = synthetic_pairs(200, seed=6)
    tr = pairs[:198]
    # a test link that coincides with a training link carries the same gain
    twin = tr[50]
    te = [LabeledPair(twin.tx_label, twin.rx_label, twin.tx_pos, twin.rx_pos, twin.gain_db)]
    rep = evaluate(graph_from_pairs(tr), tr, te, EvalConfig(train_fraction=0.99))
    # the document stores the gain at 2 decimals
    assert rep.predictors["graphrag-local"].rmse_db <= 0.005 + 1e-12


def test_evaluate_report_shape_and_threads():
    pairs = synthetic_pairs(400, seed=3)
    tr, te = split_pairs(pairs, 0.8, 1)
    g = graph_from_pairs(tr)
    a = evaluate(g, tr, te, EvalConfig())
    b = evaluate(g, tr, te, EvalConfig(), threads=6)
    assert a.to_dict() == b.to_dict()
    assert a.pair_count == 80 and a.train_count == 320
    for res in a.predictors.values():
        assert [p for p, _ in res.sum_rate] == [0.0, 5.0, 10.0, 15.0, 20.0]
        assert res.rmse_db >= 0 and res.n_predicted + res.n_failed == 80
    assert a.test_gain_reads_during_prediction == 0


def test_failures_are_recorded_not_dropped():
    pairs = synthetic_pairs(200, seed=3)
    tr, te = split_pairs(pairs, 0.8, 1)

    def flaky(ctx, q):
        from ckmgraphrag.errors import UnparseableResponseError
        raise UnparseableResponseError("nope")

    rep = evaluate(graph_from_pairs(tr), tr, te, EvalConfig(), generator=flaky)
    assert rep.predictors["graphrag-local"].n_failed == len(te)
    assert rep.predictors["graphrag-local"].rmse_db is None
    assert rep.predictors["pl-model"].n_failed == 0
    assert len(rep.failures) == 2 * len(te)


def test_plot_data_cardinality_determinism_and_values(tmp_path):
    pairs = synthetic_pairs(300, seed=9)
    tr, te = split_pairs(pairs, 0.8, 2)
    rep = evaluate(graph_from_pairs(tr), tr, te, EvalConfig())
    emit_plot_data(rep, tmp_path / "a.csv")
    emit_plot_data(rep, tmp_path / "b.csv")
    raw = (tmp_path / "a.csv").read_bytes()
    assert raw == (tmp_path / "b.csv").read_bytes()
    rows = list(csv.reader(io.StringIO(raw.decode())))
    assert tuple(rows[0]) == PLOT_COLUMNS
    assert len(rows) == 3 * 5 + 1
    for name, power, rate, rmse in rows[1:]:
        res = rep.predictors[name]
        want = dict(res.sum_rate)[float(power)]
        assert float(rate) == pytest.approx(want, rel=5e-6)
        assert float(rmse) == pytest.approx(res.rmse_db, rel=5e-6)
