"""Monthly link-graph snapshots and the events between them.

A :class:`LinkSnapshot` holds one language's article-to-article link
graph for one month: namespace-0 non-redirect pages as nodes, resolved
links as edges.  Construction (:func:`build_snapshot`) chases redirect
chains to their final target, drops redirect cycles, red links, links
from redirect pages and self references, and de-duplicates the rest.

On top of snapshots sit set-level views: :func:`orphans` (no incoming
links), :func:`deadends` (no outgoing links), :func:`link_delta`
(edge-set difference between consecutive months) and the
de-orphanization / orphanization event streams derived from it.

Snapshots round-trip through a small versioned binary container
(magic ``OATL``) and can be exported as plain TSV edge lists.
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping

import numpy as np

from .ingest import PageTable, RawLink, RedirectTable

_MAGIC = b"OATL"
_TRAILER = b"LTAO"
_FORMAT_VERSION = 1

DEORPHANIZED = "deorphanized"
ORPHANIZED = "orphanized"


class SnapshotFormatError(ValueError):
    """A snapshot container that cannot be read (bad magic, version, truncation)."""


class SnapshotIntegrityError(ValueError):
    """A snapshot whose internal structure violates its invariants."""


class SnapshotMismatchError(ValueError):
    """An operation across snapshots that do not belong together."""


class UndefinedRateError(ValueError):
    """A rate whose denominator is empty."""


@dataclass
class BuildStats:
    """Drop counters from one :func:`build_snapshot` run."""

    n_raw_links: int = 0
    n_edges: int = 0
    dropped_foreign_namespace: int = 0
    dropped_redirect_source: int = 0
    dropped_unknown_source: int = 0
    dropped_missing_target: int = 0
    dropped_unresolved_redirect: int = 0
    dropped_self_loop: int = 0
    n_duplicate_links: int = 0
    n_redirect_cycle_members: int = 0


class LinkSnapshot:
    """One language-month article link graph in compressed sparse form.

    Node identity is the wiki's page id; internally ids are remapped to
    dense indices over the sorted id array.  Adjacency lists are sorted
    and duplicate-free.  ``in_degree`` is maintained alongside and can
    always be recomputed from the adjacency.
    """

    def __init__(
        self,
        language: str,
        month: str,
        ids: np.ndarray,
        indptr: np.ndarray,
        targets: np.ndarray,
    ):
        self.language = language
        self.month = month
        self._ids = ids
        self._indptr = indptr
        self._targets = targets
        self._index: dict[int, int] = {int(p): i for i, p in enumerate(ids)}
        if len(ids):
            counts = np.bincount(targets, minlength=len(ids))
        else:
            counts = np.zeros(0, dtype=np.int64)
        self._in_degree = counts.astype(np.int64)
        self._rev: tuple[np.ndarray, np.ndarray] | None = None

    @classmethod
    def from_edges(
        cls,
        language: str,
        month: str,
        articles: Iterable[int],
        edges: Iterable[tuple[int, int]],
    ) -> "LinkSnapshot":
        """Build a snapshot directly from an article set and edge pairs.

        Edges must connect distinct known articles; duplicates collapse.
        """
        ids = np.array(sorted(set(int(a) for a in articles)), dtype=np.int64)
        index = {int(p): i for i, p in enumerate(ids)}
        adjacency: dict[int, set[int]] = {}
        for u, v in edges:
            if u == v:
                raise SnapshotIntegrityError(f"self loop {u}->{v}")
            if u not in index or v not in index:
                raise SnapshotIntegrityError(f"edge {u}->{v} leaves the article set")
            adjacency.setdefault(index[u], set()).add(index[v])
        return cls(language, month, ids, *_pack_adjacency(len(ids), adjacency))

    # -- size and membership ------------------------------------------------

    @property
    def n_articles(self) -> int:
        return len(self._ids)

    @property
    def n_edges(self) -> int:
        return len(self._targets)

    @property
    def article_ids(self) -> np.ndarray:
        """Sorted page ids (do not mutate)."""
        return self._ids

    @property
    def articles(self) -> set[int]:
        return set(self._ids.tolist())

    def has_article(self, page_id: int) -> bool:
        return page_id in self._index

    # -- adjacency ----------------------------------------------------------

    def out_neighbors(self, page_id: int) -> np.ndarray:
        """Page ids linked from ``page_id``, sorted ascending."""
        i = self._index[page_id]
        return self._ids[self._targets[self._indptr[i] : self._indptr[i + 1]]]

    def in_neighbors(self, page_id: int) -> np.ndarray:
        """Page ids linking to ``page_id``, sorted ascending."""
        rev_indptr, rev_sources = self._reverse()
        i = self._index[page_id]
        return self._ids[rev_sources[rev_indptr[i] : rev_indptr[i + 1]]]

    def out_degree_of(self, page_id: int) -> int:
        i = self._index[page_id]
        return int(self._indptr[i + 1] - self._indptr[i])

    def in_degree_of(self, page_id: int) -> int:
        return int(self._in_degree[self._index[page_id]])

    def in_degree_array(self) -> np.ndarray:
        """In-degrees aligned with :attr:`article_ids` (do not mutate)."""
        return self._in_degree

    def out_degree_array(self) -> np.ndarray:
        return np.diff(self._indptr)

    def edges(self) -> Iterator[tuple[int, int]]:
        """All edges as (from_page_id, to_page_id), grouped by source."""
        ids = self._ids
        froms = np.repeat(ids, np.diff(self._indptr))
        tos = ids[self._targets]
        return zip(froms.tolist(), tos.tolist())

    def edge_set(self) -> set[tuple[int, int]]:
        return set(self.edges())

    def _reverse(self) -> tuple[np.ndarray, np.ndarray]:
        if self._rev is None:
            n = len(self._ids)
            counts = np.bincount(self._targets, minlength=n)
            rev_indptr = np.zeros(n + 1, dtype=np.int64)
            np.cumsum(counts, out=rev_indptr[1:])
            order = np.argsort(self._targets, kind="stable")
            sources = np.repeat(np.arange(n, dtype=np.int64), np.diff(self._indptr))
            self._rev = (rev_indptr, sources[order])
        return self._rev

    # -- integrity ----------------------------------------------------------

    def validate(self) -> None:
        """Check structural invariants, raising on any violation."""
        ids, indptr, targets = self._ids, self._indptr, self._targets
        n = len(ids)
        if len(ids) != len(set(ids.tolist())) or (n > 1 and (np.diff(ids) <= 0).any()):
            raise SnapshotIntegrityError("article ids not sorted unique")
        if len(indptr) != n + 1 or indptr[0] != 0 or indptr[-1] != len(targets):
            raise SnapshotIntegrityError("bad index pointer array")
        if (np.diff(indptr) < 0).any():
            raise SnapshotIntegrityError("negative out degree")
        if len(targets) and (targets.min() < 0 or targets.max() >= n):
            raise SnapshotIntegrityError("target outside article set")
        for i in range(n):
            row = targets[indptr[i] : indptr[i + 1]]
            if len(row) > 1 and (np.diff(row) <= 0).any():
                raise SnapshotIntegrityError("adjacency list not sorted unique")
            if bool((row == i).any()):
                raise SnapshotIntegrityError("self loop")
        recount = (
            np.bincount(targets, minlength=n)
            if n
            else np.zeros(0, dtype=np.int64)
        )
        if not np.array_equal(recount, self._in_degree):
            raise SnapshotIntegrityError("in_degree out of sync with adjacency")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LinkSnapshot):
            return NotImplemented
        return (
            self.language == other.language
            and self.month == other.month
            and np.array_equal(self._ids, other._ids)
            and np.array_equal(self._indptr, other._indptr)
            and np.array_equal(self._targets, other._targets)
        )

    def __repr__(self) -> str:
        return (
            f"LinkSnapshot({self.language!r}, {self.month!r}, "
            f"{self.n_articles} articles, {self.n_edges} edges)"
        )

    # -- persistence ----------------------------------------------------------

    def save(self, target: Path | IO[bytes]) -> None:
        """Write the snapshot as a versioned binary container."""
        if isinstance(target, Path):
            with target.open("wb") as handle:
                self.save(handle)
            return
        out = target
        lang = self.language.encode("utf-8")
        month = self.month.encode("utf-8")
        out.write(_MAGIC)
        out.write(struct.pack("<B", _FORMAT_VERSION))
        out.write(struct.pack("<H", len(lang)) + lang)
        out.write(struct.pack("<H", len(month)) + month)
        out.write(struct.pack("<QQ", self.n_articles, self.n_edges))
        buf = bytearray()
        prev = 0
        for pid in self._ids.tolist():
            _push_varint(buf, pid - prev)
            prev = pid
        indptr = self._indptr.tolist()
        targets = self._targets.tolist()
        for i in range(self.n_articles):
            lo, hi = indptr[i], indptr[i + 1]
            _push_varint(buf, hi - lo)
            prev = 0
            for j in range(lo, hi):
                t = targets[j]
                _push_varint(buf, t - prev)
                prev = t
        out.write(bytes(buf))
        out.write(_TRAILER)

    @classmethod
    def load(cls, source: Path | IO[bytes]) -> "LinkSnapshot":
        """Read a container written by :meth:`save`."""
        if isinstance(source, Path):
            with source.open("rb") as handle:
                return cls.load(handle)
        data = source.read()
        if data[:4] != _MAGIC:
            raise SnapshotFormatError("not a snapshot container (bad magic)")
        if len(data) < 5 or data[4] != _FORMAT_VERSION:
            raise SnapshotFormatError("unsupported container version")
        pos = 5
        try:
            (lang_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            language = data[pos : pos + lang_len].decode("utf-8")
            pos += lang_len
            (month_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            month = data[pos : pos + month_len].decode("utf-8")
            pos += month_len
            n_nodes, n_edges = struct.unpack_from("<QQ", data, pos)
            pos += 16
            ids = np.zeros(n_nodes, dtype=np.int64)
            value = 0
            for i in range(n_nodes):
                delta, pos = _read_varint(data, pos)
                value += delta
                ids[i] = value
            indptr = np.zeros(n_nodes + 1, dtype=np.int64)
            targets = np.zeros(n_edges, dtype=np.int64)
            k = 0
            for i in range(n_nodes):
                degree, pos = _read_varint(data, pos)
                indptr[i + 1] = indptr[i] + degree
                value = 0
                for _ in range(degree):
                    delta, pos = _read_varint(data, pos)
                    value += delta
                    targets[k] = value
                    k += 1
            if k != n_edges:
                raise SnapshotFormatError("edge count mismatch")
            if data[pos : pos + 4] != _TRAILER:
                raise SnapshotFormatError("truncated container (missing trailer)")
        except (struct.error, IndexError) as exc:
            raise SnapshotFormatError(f"truncated container: {exc}") from exc
        snapshot = cls(language, month, ids, indptr, targets)
        snapshot.validate()
        return snapshot


def _push_varint(buf: bytearray, value: int) -> None:
    if value < 0:
        raise SnapshotIntegrityError("negative delta in container")
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            buf.append(byte | 0x80)
        else:
            buf.append(byte)
            return


def _read_varint(data: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        byte = data[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7


def _pack_adjacency(
    n: int, adjacency: Mapping[int, set[int]]
) -> tuple[np.ndarray, np.ndarray]:
    indptr = np.zeros(n + 1, dtype=np.int64)
    for i, targets in adjacency.items():
        indptr[i + 1] = len(targets)
    np.cumsum(indptr, out=indptr)
    packed = np.zeros(indptr[-1], dtype=np.int64)
    for i, targets in adjacency.items():
        packed[indptr[i] : indptr[i + 1]] = sorted(targets)
    return indptr, packed


def export_edges_tsv(snapshot: LinkSnapshot, target: Path | IO[str]) -> int:
    """Write the edge list as ``from_page_id<TAB>to_page_id`` lines.

    Isolated articles do not appear; use the container format when the
    full article set matters.  Returns the number of edges written.
    """
    if isinstance(target, Path):
        with target.open("w", encoding="utf-8", newline="\n") as handle:
            return export_edges_tsv(snapshot, handle)
    count = 0
    for u, v in snapshot.edges():
        target.write(f"{u}\t{v}\n")
        count += 1
    return count


def build_snapshot(
    pages: PageTable,
    redirects: RedirectTable,
    links: Iterable[RawLink],
    *,
    language: str,
    month: str,
    stats: BuildStats | None = None,
) -> LinkSnapshot:
    """Assemble the article graph for one language-month.

    Articles are the non-redirect namespace-0 pages.  Each raw link is
    kept only if its source is an article and its target title resolves
    (through any chain of redirects) to a distinct article; everything
    else is dropped and counted in ``stats``.
    """
    if stats is None:
        stats = BuildStats()
    by_id = pages.by_id
    id_by_title = pages.id_by_title
    redirect_targets = redirects.targets
    articles = pages.article_ids()
    resolved: dict[int, int | None] = {}

    def resolve(start: int) -> int | None:
        chain: list[int] = []
        seen: set[int] = set()
        cur = start
        while True:
            if cur in resolved:
                final = resolved[cur]
                break
            if cur in articles:
                final = cur
                break
            if cur in seen:
                final = None  # redirect cycle
                stats.n_redirect_cycle_members += len(seen)
                break
            seen.add(cur)
            chain.append(cur)
            nxt = redirect_targets.get(cur)
            if nxt is None:
                final = None  # dangling redirect
                break
            cur = nxt
        for node in chain:
            resolved[node] = final
        return final

    adjacency: dict[int, set[int]] = {}
    for link in links:
        stats.n_raw_links += 1
        if link.target_namespace != 0:
            stats.dropped_foreign_namespace += 1
            continue
        source = link.from_page_id
        if source not in articles:
            rec = by_id.get(source)
            if rec is not None and rec.is_redirect:
                stats.dropped_redirect_source += 1
            else:
                stats.dropped_unknown_source += 1
            continue
        target = id_by_title.get(link.target_title)
        if target is None:
            stats.dropped_missing_target += 1
            continue
        if target not in articles:
            target = resolve(target)
            if target is None:
                stats.dropped_unresolved_redirect += 1
                continue
        if target == source:
            stats.dropped_self_loop += 1
            continue
        bucket = adjacency.setdefault(source, set())
        if target in bucket:
            stats.n_duplicate_links += 1
        else:
            bucket.add(target)

    ids = np.array(sorted(articles), dtype=np.int64)
    index = {int(p): i for i, p in enumerate(ids)}
    dense = {index[u]: {index[v] for v in vs} for u, vs in adjacency.items()}
    snapshot = LinkSnapshot(language, month, ids, *_pack_adjacency(len(ids), dense))
    stats.n_edges = snapshot.n_edges
    return snapshot


def orphans(snapshot: LinkSnapshot) -> set[int]:
    """Articles with no incoming links."""
    return set(snapshot.article_ids[snapshot.in_degree_array() == 0].tolist())


def deadends(snapshot: LinkSnapshot) -> set[int]:
    """Articles with no outgoing links."""
    return set(snapshot.article_ids[snapshot.out_degree_array() == 0].tolist())


@dataclass(frozen=True)
class LinkDelta:
    """Edge-set difference between two monthly snapshots."""

    language: str
    from_month: str
    to_month: str
    added: frozenset[tuple[int, int]]
    removed: frozenset[tuple[int, int]]


def link_delta(earlier: LinkSnapshot, later: LinkSnapshot) -> LinkDelta:
    """Edges added and removed between two snapshots of one language."""
    if earlier.language != later.language:
        raise SnapshotMismatchError(
            f"cannot diff {earlier.language!r} against {later.language!r}"
        )
    before = earlier.edge_set()
    after = later.edge_set()
    return LinkDelta(
        language=earlier.language,
        from_month=earlier.month,
        to_month=later.month,
        added=frozenset(after - before),
        removed=frozenset(before - after),
    )


@dataclass(frozen=True)
class OrphanEvent:
    """One article crossing the orphan boundary between two months.

    ``month`` is the snapshot month the transition started from; the
    change happened between that snapshot and the next one.  For
    de-orphanization, ``new_inlink_count`` is the number of distinct
    incoming links gained.
    """

    language: str
    month: str
    page_id: int
    direction: str
    new_inlink_count: int | None = None
    qid: str | None = None


def deorphanizing_events(
    delta: LinkDelta, orphans_before: set[int]
) -> list[OrphanEvent]:
    """Orphans (as of the delta's from-month) that gained incoming links.

    ``orphans_before`` must be the orphan set of the snapshot the delta
    was computed from.
    """
    gained: Counter[int] = Counter()
    for _, v in delta.added:
        if v in orphans_before:
            gained[v] += 1
    return [
        OrphanEvent(
            language=delta.language,
            month=delta.from_month,
            page_id=page_id,
            direction=DEORPHANIZED,
            new_inlink_count=count,
        )
        for page_id, count in sorted(gained.items())
    ]


def orphanizing_events(
    earlier: LinkSnapshot, later: LinkSnapshot
) -> list[OrphanEvent]:
    """Articles present in both months that lost all incoming links."""
    if earlier.language != later.language:
        raise SnapshotMismatchError(
            f"cannot compare {earlier.language!r} against {later.language!r}"
        )
    events = []
    shared = np.intersect1d(earlier.article_ids, later.article_ids)
    for page_id in shared.tolist():
        if earlier.in_degree_of(page_id) > 0 and later.in_degree_of(page_id) == 0:
            events.append(
                OrphanEvent(
                    language=earlier.language,
                    month=earlier.month,
                    page_id=page_id,
                    direction=ORPHANIZED,
                )
            )
    return events


def deorph_rate(orphans_before: set[int], events: Iterable[OrphanEvent]) -> float:
    """Fraction of the orphan population de-orphanized in one month."""
    events = list(events)
    for event in events:
        if event.direction != DEORPHANIZED:
            raise ValueError(f"unexpected event direction {event.direction!r}")
    if not orphans_before:
        raise UndefinedRateError("rate undefined: no orphans in the base month")
    return len(events) / len(orphans_before)


def added_indegree_cdf(events: Iterable[OrphanEvent]) -> list[tuple[int, float]]:
    """Cumulative distribution of links gained per de-orphanized article.

    Returns ``(k, fraction_with_count_at_most_k)`` pairs sorted by k;
    empty input gives an empty list.
    """
    counts = Counter(
        event.new_inlink_count for event in events if event.new_inlink_count
    )
    total = sum(counts.values())
    if not total:
        return []
    out = []
    running = 0
    for k in sorted(counts):
        running += counts[k]
        out.append((k, running / total))
    return out
