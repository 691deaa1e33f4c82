"""Feature binarization, representation scores and the trend smoother."""

from __future__ import annotations

import math

import numpy as np
import pytest

from oatlas.characterize import (
    BINARY_FEATURES,
    FeatureTable,
    binarize_by_median,
    build_feature_table,
    lowess_fit,
    orphan_fraction_by_wiki,
    representation_scores,
)
from oatlas.graph import LinkSnapshot
from oatlas.ingest import FeatureRecord


def _record(page_id, *, bot=False, woman=None, topics=None, quality=0.5, created=0):
    probs = {"culture": 0.0, "geography": 0.0, "history_society": 0.0, "stem": 0.0}
    probs.update(topics or {})
    return FeatureRecord(
        language="aa",
        page_id=page_id,
        bot_created=bot,
        is_woman_biography=woman,
        topic_probabilities=probs,
        quality_score=quality,
        creation_timestamp=created,
    )


def test_binarize_uses_lower_middle_and_strict_greater():
    # Even length: the median is the lower of the two middle values.
    assert binarize_by_median({1: 1.0, 2: 2.0, 3: 3.0, 4: 4.0}) == {
        1: False,
        2: False,
        3: True,
        4: True,
    }
    # Ties with the median are False under the strict comparison.
    assert binarize_by_median({1: 5.0, 2: 5.0, 3: 5.0}) == {1: False, 2: False, 3: False}
    assert binarize_by_median({1: 1.0, 2: 2.0, 3: 9.0}) == {1: False, 2: False, 3: True}


def test_binarize_thousand_and_one_values():
    values = {i: float(i) for i in range(1001)}
    out = binarize_by_median(values)
    assert sum(out.values()) == 500
    assert out[500] is False and out[501] is True


def test_build_feature_table_columns():
    records = [
        _record(1, bot=True, topics={"stem": 0.9}, quality=0.9, created=100),
        _record(2, woman=True, topics={"stem": 0.4}, quality=0.1, created=200),
        _record(3, woman=False, topics={"culture": 0.6}, quality=0.5, created=300),
        _record(4, quality=0.7, created=400),
    ]
    table = build_feature_table(records, "aa")
    assert set(table.columns) == set(BINARY_FEATURES)
    assert table.columns["bot_created"] == {1: True, 2: False, 3: False, 4: False}
    assert table.columns["topic_stem"] == {1: True, 2: False, 3: False, 4: False}
    assert table.columns["topic_culture"] == {1: False, 2: False, 3: True, 4: False}
    # Only pages with a stated biography flag appear in that column.
    assert table.columns["is_woman_biography"] == {2: True, 3: False}
    # Oldest articles (smallest creation timestamp) are the True half.
    assert table.columns["old_article"] == {1: True, 2: True, 3: False, 4: False}
    assert table.columns["high_quality"] == {1: True, 2: False, 3: False, 4: True}


def test_build_feature_table_respects_article_filter():
    records = [_record(1), _record(2), _record(3)]
    table = build_feature_table(records, "aa", articles={1, 3})
    assert table.page_ids == {1, 3}


def test_representation_scores_match_direct_counts():
    rng = np.random.default_rng(5)
    for _ in range(25):
        n = int(rng.integers(20, 200))
        page_ids = list(range(1, n + 1))
        columns = {
            feature: {pid: bool(rng.random() < 0.3) for pid in page_ids}
            for feature in BINARY_FEATURES
        }
        table = FeatureTable(language="aa", columns=columns)
        orphan_ids = {pid for pid in page_ids if rng.random() < 0.2}
        scores = representation_scores(orphan_ids, table)
        for score in scores:
            col = columns[score.feature]
            p_x = sum(col.values()) / len(col)
            in_orphans = [col[pid] for pid in orphan_ids if pid in col]
            assert score.p_x == pytest.approx(p_x)
            if not in_orphans or p_x == 0.0:
                assert score.undefined
                continue
            p_x_given_o = sum(in_orphans) / len(in_orphans)
            assert score.p_x_given_o == pytest.approx(p_x_given_o)
            if p_x_given_o == 0.0:
                assert score.log_ratio == -math.inf
            else:
                assert score.log_ratio == pytest.approx(
                    math.log(p_x_given_o / p_x)
                )


def test_representation_scores_page_order_invariant():
    records = [
        _record(i, bot=(i % 3 == 0), quality=i / 10.0, created=i) for i in range(1, 11)
    ]
    table_a = build_feature_table(records, "aa")
    table_b = build_feature_table(list(reversed(records)), "aa")
    orphan_ids = {2, 3, 5, 7}
    scores_a = representation_scores(orphan_ids, table_a)
    scores_b = representation_scores(orphan_ids, table_b)
    assert [(s.feature, s.log_ratio) for s in scores_a] == [
        (s.feature, s.log_ratio) for s in scores_b
    ]


def test_orphan_fraction_by_wiki_orders_by_size():
    big = LinkSnapshot.from_edges(
        "big", "2022-11", articles=[1, 2, 3, 4], edges=[(1, 2), (2, 3), (3, 4)]
    )
    small = LinkSnapshot.from_edges("sm", "2022-11", articles=[1, 2], edges=[])
    summaries = orphan_fraction_by_wiki([small, big])
    assert [s.language for s in summaries] == ["big", "sm"]
    assert summaries[0].orphan_fraction == pytest.approx(0.25)
    assert summaries[1].orphan_fraction == pytest.approx(1.0)
    assert summaries[0].deadend_fraction == pytest.approx(0.25)


def _lowess_oracle(x, y, f=0.67, iterations=2):
    """Literal reimplementation around np.polyfit for comparison."""
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    n = len(xs)
    q = math.ceil(f * n)
    robustness = np.ones(n)
    fitted = np.empty(n)
    for _ in range(iterations + 1):
        for i in range(n):
            dist = np.abs(xs - xs[i])
            neighbors = np.argsort(dist, kind="stable")[:q]
            d_max = dist[neighbors[-1]]
            if d_max > 0:
                w = np.clip((1 - (dist[neighbors] / d_max) ** 3) ** 3, 0.0, None)
            else:
                w = np.ones(q)
            w = w * robustness[neighbors]
            if w.sum() <= 0:
                fitted[i] = ys[neighbors].mean()
                continue
            xn = xs[neighbors]
            mx = np.average(xn, weights=w)
            if ((xn - mx) ** 2 * w).sum() <= 1e-12 * max(1.0, mx * mx):
                fitted[i] = np.average(ys[neighbors], weights=w)
                continue
            coeffs = np.polyfit(xn, ys[neighbors], 1, w=np.sqrt(w))
            fitted[i] = np.polyval(coeffs, xs[i])
        residuals = ys - fitted
        scale = np.median(np.abs(residuals))
        if scale > 0:
            u = np.clip(residuals / (6.0 * scale), -1.0, 1.0)
            robustness = (1.0 - u * u) ** 2
    return fitted


def test_lowess_matches_polyfit_oracle():
    rng = np.random.default_rng(11)
    for _ in range(10):
        n = int(rng.integers(10, 80))
        x = np.sort(rng.uniform(0, 10, size=n))
        y = np.sin(x) + rng.normal(0, 0.2, size=n)
        got = lowess_fit(x, y)
        want = _lowess_oracle(x, y)
        assert np.max(np.abs(got - want)) < 1e-8


def test_lowess_reproduces_straight_line():
    x = np.linspace(0, 1, 40)
    y = 3.0 * x - 2.0
    fitted = lowess_fit(x, y)
    assert np.max(np.abs(fitted - y)) < 1e-9


def test_lowess_equivariance():
    rng = np.random.default_rng(3)
    x = np.sort(rng.uniform(0, 5, size=30))
    y = np.cos(x) + rng.normal(0, 0.1, size=30)
    base = lowess_fit(x, y)
    shifted = lowess_fit(x + 100.0, y + 7.0)
    assert np.allclose(shifted, base + 7.0, atol=1e-9)
    scaled = lowess_fit(x, y * 3.0)
    assert np.allclose(scaled, base * 3.0, atol=1e-9)


def test_lowess_downweights_outlier():
    x = np.linspace(0, 1, 21)
    y = x.copy()
    y[10] += 50.0
    robust = lowess_fit(x, y, iterations=2)
    naive = lowess_fit(x, y, iterations=0)
    truth = x[10]
    assert abs(robust[10] - truth) < abs(naive[10] - truth)


def test_lowess_input_validation():
    with pytest.raises(ValueError):
        lowess_fit([1, 2], [1, 2])
    with pytest.raises(ValueError):
        lowess_fit([1, 2, 3], [1, 2])
    with pytest.raises(ValueError):
        lowess_fit([1, 2, 3], [1, 2, 3], f=0.0)
