"""Release gate: ten checks, one test (or pair) per criterion.

Each test name carries its criterion number; the terminal summary hook
in conftest.py prints one PASS/FAIL/SKIP line per criterion at the end
of the run.  Checks 7b and 10 compare against reference values from a
full November 2022 dump run and only execute when OATLAS_FULLDUMP_OUT
points at the output directory of such a run; everything else runs at
desk scale on generated or hand-built data.

Budgets asserted inside the tests: criterion 1 under 60 s, criterion 3
under 5 min, criterion 9 at or above 100K rows/s.
"""

import json
import math
import os
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

from oatlas import causal, characterize, cli, fixtures
from oatlas.candidates import (
    AnnotatedDocument,
    crosslingual_candidates,
    findlink_candidates,
)
from oatlas.graph import (
    LinkSnapshot,
    build_snapshot,
    deadends,
    deorphanizing_events,
    link_delta,
    orphanizing_events,
    orphans,
)
from oatlas.ingest import (
    TOPIC_LABELS,
    FeatureRecord,
    ParseStats,
    QidIndex,
    iter_raw_links,
    load_page_table,
    load_redirects,
    parse_sql_insert_rows,
)
from oatlas.months import month_add

from .oracles import (
    crosslingual_oracle,
    deadends_oracle,
    deorph_events_oracle,
    edges_oracle,
    orphanizing_oracle,
    orphans_oracle,
)

FULLDUMP_ENV = "OATLAS_FULLDUMP_OUT"

fulldump_only = pytest.mark.skipif(
    FULLDUMP_ENV not in os.environ,
    reason=f"set {FULLDUMP_ENV} to the output directory of a full-dump run",
)


# -- criterion 1: graph pipeline vs brute-force oracles -----------------------


def test_c01_graph_suite_matches_oracles_on_100_random_graphs():
    rng = np.random.default_rng(20250816)
    started = time.perf_counter()
    for _ in range(100):
        n_pages = int(rng.integers(50, 1001))
        wiki = fixtures.random_wiki(
            rng,
            n_pages=n_pages,
            n_links=int(rng.integers(n_pages, 3 * n_pages)),
            redirect_fraction=float(rng.uniform(0.1, 0.4)),
            junk_fraction=float(rng.uniform(0.0, 0.15)),
        )
        pages = load_page_table(wiki.page_rows)
        redirects = load_redirects(wiki.redirect_rows, pages)
        links = list(iter_raw_links(wiki.link_rows))
        before = build_snapshot(
            pages, redirects, links, language="xx", month="2022-11"
        )
        articles, edges = edges_oracle(pages, redirects, links)
        assert before.articles == articles
        assert before.edge_set() == edges
        assert orphans(before) == orphans_oracle(articles, edges)
        assert deadends(before) == deadends_oracle(articles, edges)

        keep = rng.random(len(wiki.link_rows)) < 0.6
        titles = [row[2] for row in wiki.page_rows]
        second_rows = [row for row, k in zip(wiki.link_rows, keep) if k]
        for _ in range(int(rng.integers(0, n_pages))):
            second_rows.append(
                (
                    int(rng.integers(1, n_pages + 1)),
                    0,
                    titles[int(rng.integers(len(titles)))],
                    0,
                )
            )
        after = build_snapshot(
            pages,
            redirects,
            list(iter_raw_links(second_rows)),
            language="xx",
            month="2022-12",
        )
        delta = link_delta(before, after)
        assert delta.added == after.edge_set() - before.edge_set()
        assert delta.removed == before.edge_set() - after.edge_set()
        gained = deorph_events_oracle(
            before.edge_set(), after.edge_set(), orphans(before)
        )
        events = deorphanizing_events(delta, orphans(before))
        assert {e.page_id: e.new_inlink_count for e in events} == gained
        assert [e.page_id for e in orphanizing_events(before, after)] == (
            orphanizing_oracle(before, after)
        )
    assert time.perf_counter() - started < 60.0


# -- criterion 2: the 2x2 interaction has a closed form ------------------------


def _cell_means_effect(panel):
    cells = {}
    for obs in panel:
        key = (obs.role == causal.TREATED, obs.period_index > 0)
        cells.setdefault(key, []).append(obs.log_views)
    mean = lambda role, post: sum(cells[(role, post)]) / len(cells[(role, post)])
    return (mean(True, True) - mean(True, False)) - (
        mean(False, True) - mean(False, False)
    )


def test_c02_pooled_interaction_equals_cell_mean_contrast_on_50_panels():
    rng = np.random.default_rng(52)
    for _ in range(50):
        n_pairs = int(rng.integers(4, 41))
        window = int(rng.integers(1, 5))
        offsets = [k for k in range(-window, window + 1) if k != 0]
        panel = []
        for i in range(n_pairs):
            for role in (causal.TREATED, causal.CONTROL):
                for offset in offsets:
                    panel.append(
                        causal.PanelObservation(
                            pair_id=f"p:{i:03d}",
                            role=role,
                            language="xx",
                            month=month_add("2023-05", offset),
                            period_index=offset,
                            log_views=float(rng.normal(4.0, 1.5)),
                            referrer_class="all",
                        )
                    )
        # Drop a random fifth of the rows, keeping all four cells alive,
        # so the identity is also exercised on unbalanced panels.
        kept = [o for o in panel if rng.random() > 0.2]
        cells = {(o.role, o.period_index > 0) for o in kept}
        if len(cells) == 4:
            panel = kept
        fit = causal.fit_did(panel, "pooled")
        assert abs(fit.effect.coef - _cell_means_effect(panel)) < 1e-10


# -- criterion 3: confidence intervals cover injected effects ------------------


def test_c03_ci_covers_injected_effects_in_both_directions():
    started = time.perf_counter()
    counts = {}
    for label, effect, base_seed in (
        ("forward", 0.065, 1000),
        ("reverse", -0.13, 2000),
    ):
        covered = 0
        for r in range(100):
            pairs, views, index = fixtures.synthetic_did_inputs(
                5000, effect, seed=base_seed + r
            )
            panel = causal.assemble_panel(pairs, views, index)
            est = causal.fit_did(panel, "pooled").effect
            if est.ci_low <= effect <= est.ci_high:
                covered += 1
        counts[label] = covered
    assert counts["forward"] >= 93, counts
    assert counts["reverse"] >= 93, counts
    assert time.perf_counter() - started < 300.0


# -- criterion 4: event-study sanity -------------------------------------------


def test_c04a_pre_trend_coefficients_stay_quiet_without_an_effect():
    quiet = 0
    for r in range(100):
        pairs, views, index = fixtures.synthetic_did_inputs(
            600, 0.0, seed=7000 + r, window=2
        )
        panel = causal.assemble_panel(pairs, views, index, window=2)
        fit = causal.fit_did(panel, "by_month")
        pre_terms = [
            term
            for name, term in fit.terms.items()
            if name.startswith("treated:period[-")
        ]
        assert pre_terms, "expected at least one pre-treatment interaction"
        if all(term.p_value >= 0.05 for term in pre_terms):
            quiet += 1
    assert quiet >= 90, quiet


def test_c04b_post_only_effect_is_detected():
    detected = 0
    for r in range(100):
        pairs, views, index = fixtures.synthetic_did_inputs(
            600,
            0.0,
            seed=8000 + r,
            window=2,
            effect_by_offset={1: 0.15, 2: 0.15},
        )
        panel = causal.assemble_panel(pairs, views, index, window=2)
        fit = causal.fit_did(panel, "pooled")
        if fit.effect.p_value < 0.05:
            detected += 1
    assert detected >= 95, detected


# -- criterion 5: cross-lingual candidates vs the triple loop -------------------


def _random_three_wikis(rng):
    languages = ("aa", "bb", "cc")
    snapshots = {}
    pages = {}
    for li, lang in enumerate(languages):
        base = 1000 * (li + 1)
        ids = list(range(base + 1, base + 121))
        edges = set()
        for _ in range(int(rng.integers(100, 260))):
            u, v = rng.choice(ids, size=2, replace=False)
            edges.add((int(u), int(v)))
        snapshots[lang] = LinkSnapshot.from_edges(lang, "2022-11", ids, edges)
        pages[lang] = ids
    index = QidIndex()
    for q in range(100):
        qid = f"Q{q:03d}"
        for li, lang in enumerate(languages):
            if rng.random() < 0.8:
                page = 1000 * (li + 1) + q + 1
                index.add(qid, lang, f"{lang}_{q}")
                index.attach_page(qid, lang, page)
    return snapshots, index


def test_c05_crosslingual_matches_oracle_on_100_fixtures():
    rng = np.random.default_rng(505)
    compared = 0
    with_evidence = 0
    for _ in range(100):
        snapshots, index = _random_three_wikis(rng)
        for lang, snapshot in snapshots.items():
            for orphan_id in sorted(orphans(snapshot)):
                got = crosslingual_candidates(orphan_id, lang, snapshots, index)
                expected = crosslingual_oracle(orphan_id, lang, snapshots, index)
                assert [(c.source_page_id, c.evidence) for c in got] == expected
                compared += 1
                with_evidence += bool(expected)
    assert compared >= 1000
    assert with_evidence >= 100  # the comparison is not vacuous


# -- criterion 6: findlink is exact on a planted corpus -------------------------


_FILLERS = (
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf",
    "hotel", "india", "juliet", "kilo", "lima", "café", "über", "oslo",
)

# Only the first character of the title is case-folded when matching,
# so "quartz lane" and "Quartz lane" are mentions of Quartz_lane while
# "QUARTZ LANE" is not.
_TITLE = "Quartz_lane"
_MENTION_VARIANTS = ("quartz lane", "Quartz lane")
_NON_MENTIONS = ("umquartz lane", "quartz laneish", "QUARTZ LANE", "quartz  lane")


def _planted_corpus(rng):
    """200 documents; returns (docs, expected {(page_id, byte_span)})."""
    docs = []
    expected = set()

    def build(parts, page_id, planted_at, spans=()):
        text = " ".join(parts)
        for k in planted_at:
            prefix = " ".join(parts[:k])
            start = len(prefix.encode("utf-8")) + (1 if prefix else 0)
            end = start + len(parts[k].encode("utf-8"))
            expected.add((page_id, (start, end)))
        doc = AnnotatedDocument(
            language="qq", page_id=page_id, text=text, existing_link_spans=spans
        )
        doc.validate()
        return doc

    def covered_span(parts, k, page_id, partial):
        prefix = " ".join(parts[:k])
        start = len(prefix.encode("utf-8")) + (1 if prefix else 0)
        end = start + len(parts[k].encode("utf-8"))
        return (start, start + 6, page_id) if partial else (start, end, page_id)

    for page_id in range(1, 201):
        parts = [str(w) for w in rng.choice(_FILLERS, size=int(rng.integers(6, 13)))]
        category = page_id % 4
        if category == 0:
            k = int(rng.integers(0, len(parts) + 1))
            parts.insert(k, str(rng.choice(_MENTION_VARIANTS)))
            docs.append(build(parts, page_id, [k]))
        elif category == 1:
            # A mention fully or partially inside an existing link span
            # must never come back; a second, free mention still does.
            k = int(rng.integers(0, len(parts) + 1))
            parts.insert(k, str(rng.choice(_MENTION_VARIANTS)))
            span = covered_span(parts, k, 500, partial=page_id % 8 == 1)
            if page_id % 3 == 0:
                parts.append(str(rng.choice(_MENTION_VARIANTS)))
                docs.append(build(parts, page_id, [len(parts) - 1], (span,)))
            else:
                docs.append(build(parts, page_id, [], (span,)))
        elif category == 2:
            k = int(rng.integers(0, len(parts) + 1))
            parts.insert(k, str(rng.choice(_NON_MENTIONS)))
            docs.append(build(parts, page_id, []))
        else:
            docs.append(build(parts, page_id, []))
    return docs, expected


def test_c06_findlink_perfect_precision_and_recall_on_planted_corpus():
    rng = np.random.default_rng(606)
    docs, expected = _planted_corpus(rng)
    assert len(docs) == 200
    assert len(expected) >= 60
    articles = list(range(1, 201)) + [500]
    edges = [(i, i + 1) for i in range(1, 200, 2)]
    snapshot = LinkSnapshot.from_edges("qq", "2022-11", articles, edges)
    found = findlink_candidates(500, _TITLE, docs, snapshot)
    returned = {
        (cand.source_page_id, span) for cand in found for span in cand.evidence
    }
    true_hits = len(returned & expected)
    precision = true_hits / len(returned)
    recall = true_hits / len(expected)
    assert precision == 1.0
    assert recall == 1.0
    spans_by_doc = {doc.page_id: doc.existing_link_spans for doc in docs}
    for page_id, (start, end) in returned:
        for span_start, span_end, _ in spans_by_doc[page_id]:
            assert not (start < span_end and span_start < end)


# -- criterion 7: representation scores vs direct counting ---------------------


def _random_feature_records(rng, n=1000):
    records = []
    for page_id in range(1, n + 1):
        woman = None if rng.random() < 0.5 else bool(rng.random() < 0.3)
        records.append(
            FeatureRecord(
                language="xx",
                page_id=page_id,
                bot_created=bool(rng.random() < 0.2),
                is_woman_biography=woman,
                topic_probabilities={
                    label: float(rng.random()) for label in TOPIC_LABELS
                },
                quality_score=float(rng.random()),
                creation_timestamp=int(rng.integers(0, 2_000_000_000)),
            )
        )
    return records


def _direct_count_scores(records, orphan_ids):
    """Recompute every representation score from the raw records."""
    flags = {}
    for rec in records:
        row = {"bot_created": rec.bot_created}
        if rec.is_woman_biography is not None:
            row["is_woman_biography"] = rec.is_woman_biography
        for label, prob in rec.topic_probabilities.items():
            row[f"topic_{label}"] = prob > 0.5
        flags[rec.page_id] = row
    quality_median = statistics.median_low([r.quality_score for r in records])
    created_median = statistics.median_high([r.creation_timestamp for r in records])
    for rec in records:
        flags[rec.page_id]["high_quality"] = rec.quality_score > quality_median
        flags[rec.page_id]["old_article"] = rec.creation_timestamp < created_median

    out = {}
    for feature in characterize.BINARY_FEATURES:
        defined = [pid for pid, row in flags.items() if feature in row]
        n_articles = len(defined)
        n_true = sum(1 for pid in defined if flags[pid][feature])
        orphan_defined = [pid for pid in defined if pid in orphan_ids]
        n_orphans = len(orphan_defined)
        n_true_orphans = sum(1 for pid in orphan_defined if flags[pid][feature])
        p_x = n_true / n_articles if n_articles else math.nan
        p_x_given_o = n_true_orphans / n_orphans if n_orphans else math.nan
        undefined = n_articles == 0 or n_orphans == 0 or p_x == 0.0
        if undefined:
            log_ratio = math.nan
        elif p_x_given_o == 0.0:
            log_ratio = -math.inf
        else:
            log_ratio = math.log(p_x_given_o / p_x)
        out[feature] = (p_x_given_o, p_x, log_ratio, n_orphans, n_articles, undefined)
    return out


def _same_float(a, b):
    if isinstance(a, float) and isinstance(b, float):
        if math.isnan(a) or math.isnan(b):
            return math.isnan(a) and math.isnan(b)
    return a == b


def test_c07a_representation_scores_match_direct_counts():
    rng = np.random.default_rng(7)
    for _ in range(5):
        records = _random_feature_records(rng)
        orphan_ids = {
            int(p) for p in rng.choice(range(1, 1001), size=150, replace=False)
        }
        table = characterize.build_feature_table(records, "xx")
        scores = characterize.representation_scores(orphan_ids, table)
        expected = _direct_count_scores(records, orphan_ids)
        assert {s.feature for s in scores} == set(expected)
        for score in scores:
            want = expected[score.feature]
            got = (
                score.p_x_given_o,
                score.p_x,
                score.log_ratio,
                score.n_orphans,
                score.n_articles,
                score.undefined,
            )
            assert all(_same_float(g, w) for g, w in zip(got, want)), score.feature


@fulldump_only
def test_c07b_full_dump_reference_scores():
    path = Path(os.environ[FULLDUMP_ENV]) / "representation_scores.tsv"
    rows = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if line and not line.startswith("#"):
            parts = line.split("\t")
            rows[(parts[0], parts[1])] = (float(parts[2]), float(parts[3]))
    it_bot = rows[("it", "bot_created")]
    assert abs(it_bot[0] - 0.19) <= 0.005
    assert abs(it_bot[1] - 0.06) <= 0.005
    en_woman = rows[("en", "is_woman_biography")]
    assert abs(en_woman[0] - 0.29) <= 0.005
    assert abs(en_woman[1] - 0.19) <= 0.005


# -- criterion 8: golden end-to-end run ----------------------------------------


def test_c08_golden_tree_end_to_end_and_byte_identical(golden_root, tmp_path):
    outs = []
    for name in ("first", "second"):
        out = tmp_path / name
        rc = cli.main(
            [
                "all",
                "--data",
                str(golden_root),
                "--out",
                str(out),
                "--months",
                "2022-11:2022-12",
            ]
        )
        assert rc == 0
        outs.append(out)

    summary = {}
    for line in (outs[0] / "wiki_summary.tsv").read_text().splitlines():
        if line and not line.startswith("#"):
            lang, n, orphan_share, deadend_share = line.split("\t")
            summary[lang] = (int(n), float(orphan_share), float(deadend_share))
    for lang, n_articles in (("aa", 6), ("bb", 4), ("cc", 3)):
        assert summary[lang] == (
            n_articles,
            fixtures.GOLDEN_ORPHAN_FRACTIONS[lang],
            fixtures.GOLDEN_DEADEND_FRACTIONS[lang],
        )

    pair_rows = [
        line.split("\t")
        for line in (outs[0] / "pairs.tsv").read_text().splitlines()
        if line and not line.startswith("#")
    ]
    assert [(r[5], r[1], r[2], r[3]) for r in pair_rows] == [
        ("forward", "Q100", "aa", "bb"),
        ("reverse", "Q200", "aa", "cc"),
    ]

    estimates = json.loads((outs[0] / "estimates.json").read_text())
    forward = estimates["forward"]["pooled"]["terms"]["treated_after"]["coef"]
    reverse = estimates["reverse"]["pooled"]["terms"]["treated_after"]["coef"]
    assert abs(forward - fixtures.GOLDEN_FORWARD_EFFECT) < 1e-12
    assert abs(reverse - fixtures.GOLDEN_REVERSE_EFFECT) < 1e-12

    candidate_rows = [
        line.split("\t")
        for line in (outs[0] / "candidates.tsv").read_text().splitlines()
        if line and not line.startswith("#")
    ]
    assert [(r[1], r[3], r[5], r[6]) for r in candidate_rows] == [
        ("1", "2", "findlink", "26-32"),
        ("3", "4", "findlink", "6-12"),
        ("7", "4", "crosslingual", "bb"),
    ]

    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    assert files == sorted(
        p.relative_to(outs[1]) for p in outs[1].rglob("*") if p.is_file()
    )
    for rel in files:
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes(), rel


# -- criterion 9: parser throughput and bounded memory --------------------------


def _write_patterned_dump(path, n_rows):
    fixtures.write_sql_dump(
        path, "pagelinks", fixtures.patterned_pagelinks_rows(n_rows)
    )
    return path


def _parse_all(path):
    stats = ParseStats()
    n = 0
    started = time.perf_counter()
    with path.open("rb") as handle:
        for _ in parse_sql_insert_rows(handle, stats=stats):
            n += 1
    elapsed = time.perf_counter() - started
    return n, elapsed, stats.peak_buffer_bytes


def test_c09_parser_throughput_and_size_independent_memory(tmp_path):
    small = _write_patterned_dump(tmp_path / "small.sql", 1_000_000)
    large = _write_patterned_dump(tmp_path / "large.sql", 10_000_000)
    assert large.stat().st_size > 9 * small.stat().st_size

    n_small, _, peak_small = _parse_all(small)
    n_large, elapsed, peak_large = _parse_all(large)
    assert n_small == 1_000_000
    assert n_large == 10_000_000
    rate = n_large / elapsed
    assert rate >= 100_000, f"{rate:.0f} rows/s"
    # The buffer high-water mark saturates at one read chunk plus a
    # partial tuple, so a 10x larger file moves it by at most the length
    # of one row tuple, never with the file size.
    assert peak_large < 2**19, peak_large
    assert abs(peak_large - peak_small) <= 256, (peak_small, peak_large)
    large.unlink()
    small.unlink()


# -- criterion 10: full-dump orphan and dead-end rates --------------------------


@fulldump_only
def test_c10_full_dump_orphan_and_deadend_rates():
    path = Path(os.environ[FULLDUMP_ENV]) / "wiki_summary.tsv"
    total = 0
    orphan_weighted = 0.0
    deadend_weighted = 0.0
    for line in path.read_text(encoding="utf-8").splitlines():
        if line and not line.startswith("#"):
            _, n, orphan_share, deadend_share = line.split("\t")
            total += int(n)
            orphan_weighted += int(n) * float(orphan_share)
            deadend_weighted += int(n) * float(deadend_share)
    assert total > 0
    orphan_rate = orphan_weighted / total
    deadend_rate = deadend_weighted / total
    assert abs(orphan_rate - 0.147) <= 0.005
    assert 0.003 <= deadend_rate <= 0.007
