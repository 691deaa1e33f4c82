"""Readers for the raw inputs of a link-graph build.

Three kinds of sources are understood:

* MediaWiki SQL dump files (``page.sql``, ``redirect.sql``,
  ``pagelinks.sql``) consisting of ``INSERT INTO `tbl` VALUES
  (...),(...);`` statements.  :func:`parse_sql_insert_rows` streams
  typed value tuples out of such a file without ever holding more than
  a bounded window of it in memory.
* Tab-separated side tables: sitelinks (``qid, language, title``),
  pageviews (``language, page_id, month, referrer_class, views``) and
  per-article features.
* The loaders (:func:`load_page_table`, :func:`load_redirects`,
  :func:`load_sitelinks`, :func:`load_pageviews`) turn streams of rows
  into indexed, validated tables used by the graph and analysis layers.

All loaders support a ``strict`` flag: strict mode aborts on the first
bad row, lenient mode skips and counts.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator

from .months import MonthFormatError, parse_month

logger = logging.getLogger(__name__)

REFERRER_CLASSES = ("all", "internal", "external", "unknown")
TOPIC_LABELS = ("culture", "geography", "history_society", "stem")

_CHUNK_SIZE = 1 << 18
_MAX_HEADER_BYTES = 1 << 16
_MAX_TUPLE_BYTES = 1 << 20
_MAX_RECORDED_ERRORS = 100


class SqlDumpError(ValueError):
    """A malformed statement or tuple, with the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class TsvFormatError(ValueError):
    """A malformed line in one of the tab-separated side tables."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"{message} (line {line_number})")
        self.line_number = line_number


class DuplicateKeyError(ValueError):
    """A duplicate key encountered while loading in strict mode."""


class InvalidRecordError(ValueError):
    """A structurally valid row whose values fail validation."""


@dataclass(frozen=True)
class PageRecord:
    page_id: int
    namespace: int
    title: str
    is_redirect: bool


@dataclass(frozen=True)
class RedirectRecord:
    from_page_id: int
    target_namespace: int
    target_title: str


@dataclass(frozen=True)
class RawLink:
    from_page_id: int
    target_namespace: int
    target_title: str


@dataclass(frozen=True)
class SitelinkRecord:
    qid: str
    language: str
    title: str


@dataclass(frozen=True)
class PageviewRecord:
    language: str
    page_id: int
    month: str
    referrer_class: str
    views: int


@dataclass(frozen=True)
class FeatureRecord:
    language: str
    page_id: int
    bot_created: bool
    is_woman_biography: bool | None
    topic_probabilities: dict[str, float]
    quality_score: float
    creation_timestamp: int


@dataclass(frozen=True)
class ParseIssue:
    offset: int
    message: str


@dataclass
class ParseStats:
    """Counters filled in by :func:`parse_sql_insert_rows`.

    ``peak_buffer_bytes`` is the high-water mark of the parser's own
    buffer; on well-formed input it depends on the chunk size and the
    longest tuple, not on the file size.
    """

    rows: int = 0
    statements: int = 0
    skipped: int = 0
    errors: list[ParseIssue] = field(default_factory=list)
    peak_buffer_bytes: int = 0

    def record_error(self, offset: int, message: str) -> None:
        self.skipped += 1
        if len(self.errors) < _MAX_RECORDED_ERRORS:
            self.errors.append(ParseIssue(offset, message))


_INSERT_HEAD_RE = re.compile(
    rb"INSERT\s+INTO\s+`?([^`\s(]+)`?\s+VALUES\s*", re.IGNORECASE
)
# One complete parenthesized tuple.  Quoted strings are consumed
# atomically, so parens and commas inside them cannot end the match.
_TUPLE_RE = re.compile(rb"\((?:[^'()\\]|'(?:[^'\\]|\\.)*'|\\.)*\)")
_FIELD_RE = re.compile(rb"'(?:[^'\\]|\\.)*'|[^,]+")

_UNESCAPE = {
    ord("n"): b"\n",
    ord("t"): b"\t",
    ord("r"): b"\r",
    ord("0"): b"\0",
    ord("b"): b"\x08",
    ord("Z"): b"\x1a",
}


def _unescape_bytes(raw: bytes) -> bytes:
    out = bytearray()
    i = 0
    while True:
        j = raw.find(b"\\", i)
        if j < 0:
            out += raw[i:]
            return bytes(out)
        out += raw[i:j]
        c = raw[j + 1]
        out += _UNESCAPE.get(c, raw[j + 1 : j + 2])
        i = j + 2


def escape_sql_string(value: str) -> str:
    """Escape a string the way dump files quote it (inverse of parsing)."""
    return (
        value.replace("\\", "\\\\")
        .replace("'", "\\'")
        .replace('"', '\\"')
        .replace("\n", "\\n")
        .replace("\r", "\\r")
        .replace("\t", "\\t")
        .replace("\0", "\\0")
        .replace("\x1a", "\\Z")
    )


def parse_sql_insert_rows(
    stream: BinaryIO,
    *,
    strict: bool = False,
    table: str | None = None,
    stats: ParseStats | None = None,
) -> Iterator[tuple]:
    """Yield typed value tuples from a SQL dump, one per inserted row.

    ``stream`` must be a binary file object.  Integers, floats, strings
    (backslash escapes undone, decoded as UTF-8) and NULL (``None``) are
    supported value types.  Lines that are not INSERT statements are
    skipped.  With ``table`` given, statements for other tables are
    skipped too.

    In strict mode a malformed tuple raises :class:`SqlDumpError` with
    its byte offset; otherwise the rest of that statement line is
    dropped, counted in ``stats.skipped``.
    """
    if stats is None:
        stats = ParseStats()
    buf = b""
    base = 0  # absolute offset of buf[0]
    pos = 0
    eof = False
    rows = 0
    statements = 0
    head_match = _INSERT_HEAD_RE.match
    tuple_match = _TUPLE_RE.match
    field_iter = _FIELD_RE.finditer
    want_table = table.encode("utf-8") if table is not None else None

    def fill() -> bool:
        """Compact the buffer and read one more chunk.  False at EOF."""
        nonlocal buf, base, pos, eof
        stats.rows = rows
        if pos:
            base += pos
            buf = buf[pos:]
            pos = 0
        chunk = stream.read(_CHUNK_SIZE)
        if not chunk:
            eof = True
            return False
        buf += chunk
        if len(buf) > stats.peak_buffer_bytes:
            stats.peak_buffer_bytes = len(buf)
        return True

    def skip_line() -> None:
        """Advance past the next newline without buffering the line."""
        nonlocal buf, base, pos
        while True:
            idx = buf.find(b"\n", pos)
            if idx >= 0:
                pos = idx + 1
                return
            base += len(buf)
            buf = b""
            pos = 0
            if not fill():
                return

    def fail(offset: int, message: str) -> None:
        if strict:
            stats.rows = rows
            raise SqlDumpError(message, offset)
        stats.record_error(offset, message)

    while True:
        # At a line boundary.  Skip whitespace and decide what this line is.
        while pos < len(buf) and buf[pos] in (9, 10, 13, 32):
            pos += 1
        if len(buf) - pos < len(b"INSERT") and not eof:
            if not fill():
                continue
            continue
        if pos >= len(buf) and eof:
            stats.rows = rows
            stats.statements = statements
            return
        if buf[pos : pos + 6].upper() != b"INSERT":
            skip_line()
            continue

        m = head_match(buf, pos)
        while m is None:
            if not eof and len(buf) - pos < _MAX_HEADER_BYTES:
                nl = buf.find(b"\n", pos)
                if nl < 0 and fill():
                    m = head_match(buf, pos)
                    continue
            fail(base + pos, "INSERT statement without a VALUES list")
            skip_line()
            break
        if m is None:
            continue
        if want_table is not None and m.group(1) != want_table:
            skip_line()
            continue
        statements += 1
        pos = m.end()

        # Tuple loop for one statement.
        while True:
            while pos < len(buf) and buf[pos] in (9, 10, 13, 32, 44):
                pos += 1
            if pos >= len(buf):
                if fill():
                    continue
                fail(base + pos, "statement truncated at end of file")
                break
            c = buf[pos]
            if c == 59:  # ;
                pos += 1
                skip_line()
                break
            if c != 40:  # (
                fail(base + pos, f"unexpected byte {bytes((c,))!r} in VALUES list")
                skip_line()
                break
            t = tuple_match(buf, pos)
            if t is None:
                if not eof and len(buf) - pos < _MAX_TUPLE_BYTES:
                    if fill():
                        continue
                fail(base + pos, "malformed or oversized tuple")
                skip_line()
                break
            try:
                values = []
                append = values.append
                for f in field_iter(buf, t.start() + 1, t.end() - 1):
                    b = f.group()
                    if b[0] == 39:  # '
                        s = b[1:-1]
                        if b"\\" in s:
                            s = _unescape_bytes(s)
                        append(s.decode("utf-8"))
                    elif b == b"NULL":
                        append(None)
                    else:
                        try:
                            append(int(b))
                        except ValueError:
                            append(float(b))
            except (ValueError, UnicodeDecodeError) as exc:
                fail(base + pos, f"bad value in tuple: {exc}")
                skip_line()
                break
            rows += 1
            pos = t.end()
            yield tuple(values)


@dataclass
class PageTable:
    """Namespace-0 slice of a wiki's ``page`` table, indexed both ways."""

    by_id: dict[int, PageRecord]
    id_by_title: dict[str, int]
    n_foreign_namespace: int = 0
    n_duplicates: int = 0
    n_skipped: int = 0

    def __len__(self) -> int:
        return len(self.by_id)

    def article_ids(self) -> set[int]:
        return {pid for pid, rec in self.by_id.items() if not rec.is_redirect}


def load_page_table(rows: Iterable[tuple], *, strict: bool = False) -> PageTable:
    """Index ``page`` rows ``(page_id, namespace, title, is_redirect, ...)``.

    Only namespace-0 rows are kept.  Extra columns are ignored.  A
    duplicate page id or title aborts in strict mode; in lenient mode
    the later row wins and the stale entry is removed.
    """
    table = PageTable(by_id={}, id_by_title={})
    by_id = table.by_id
    id_by_title = table.id_by_title
    for row in rows:
        if (
            len(row) < 4
            or not isinstance(row[0], int)
            or not isinstance(row[1], int)
            or not isinstance(row[2], str)
            or row[0] <= 0
            or not row[2]
            or row[3] not in (0, 1, True, False)
        ):
            if strict:
                raise InvalidRecordError(f"bad page row {row!r}")
            table.n_skipped += 1
            continue
        if row[1] != 0:
            table.n_foreign_namespace += 1
            continue
        rec = PageRecord(row[0], 0, row[2], bool(row[3]))
        old = by_id.get(rec.page_id)
        clash = id_by_title.get(rec.title)
        if old is not None or (clash is not None and clash != rec.page_id):
            if strict:
                raise DuplicateKeyError(f"duplicate page row {row!r}")
            table.n_duplicates += 1
            if old is not None:
                id_by_title.pop(old.title, None)
            if clash is not None and clash != rec.page_id:
                by_id.pop(clash, None)
        by_id[rec.page_id] = rec
        id_by_title[rec.title] = rec.page_id
    return table


@dataclass
class RedirectTable:
    """Single-hop redirect targets, already joined against the page table."""

    targets: dict[int, int]
    dropped_missing_target: int = 0
    dropped_bad_source: int = 0
    n_skipped: int = 0

    @property
    def n_dropped(self) -> int:
        return self.dropped_missing_target + self.dropped_bad_source

    def __len__(self) -> int:
        return len(self.targets)


def load_redirects(
    rows: Iterable[tuple], pages: PageTable, *, strict: bool = False
) -> RedirectTable:
    """Join ``redirect`` rows ``(rd_from, rd_namespace, rd_title, ...)``.

    The result maps redirect page id to target page id, one hop only.
    Rows whose target is outside namespace 0 or names a missing title
    are dropped and counted, as are rows whose source is not a
    namespace-0 redirect page.
    """
    table = RedirectTable(targets={})
    for row in rows:
        if (
            len(row) < 3
            or not isinstance(row[0], int)
            or not isinstance(row[1], int)
            or not isinstance(row[2], str)
            or not row[2]
        ):
            if strict:
                raise InvalidRecordError(f"bad redirect row {row!r}")
            table.n_skipped += 1
            continue
        from_id, target_ns, target_title = row[0], row[1], row[2]
        source = pages.by_id.get(from_id)
        if source is None or not source.is_redirect:
            table.dropped_bad_source += 1
            continue
        if target_ns != 0:
            table.dropped_missing_target += 1
            continue
        target_id = pages.id_by_title.get(target_title)
        if target_id is None:
            table.dropped_missing_target += 1
            continue
        table.targets[from_id] = target_id
    return table


def iter_raw_links(
    rows: Iterable[tuple], *, strict: bool = False, stats: ParseStats | None = None
) -> Iterator[RawLink]:
    """Adapt ``pagelinks`` rows ``(pl_from, pl_namespace, pl_title,
    pl_from_namespace)`` into :class:`RawLink` values.

    Rows originating outside namespace 0 are dropped here; target
    namespace filtering is left to the graph builder, which counts it.
    """
    for row in rows:
        if (
            len(row) < 4
            or not isinstance(row[0], int)
            or not isinstance(row[1], int)
            or not isinstance(row[2], str)
            or not isinstance(row[3], int)
        ):
            if strict:
                raise InvalidRecordError(f"bad pagelinks row {row!r}")
            if stats is not None:
                stats.skipped += 1
            continue
        if row[3] != 0:
            continue
        yield RawLink(row[0], row[1], row[2])


class QidIndex:
    """Bidirectional mapping between language-agnostic item ids and
    per-language article titles, with optional page-id attachment.

    The title side comes from the sitelinks table.  Page ids become
    available per language once :meth:`attach_page_ids` has been called
    with that language's title index.
    """

    def __init__(self) -> None:
        self._langs_by_qid: dict[str, dict[str, str]] = {}
        self._qid_by_title: dict[tuple[str, str], str] = {}
        self._page_by_qid: dict[str, dict[str, int]] = {}
        self._qid_by_page: dict[tuple[str, int], str] = {}
        self.n_conflicts = 0

    def __len__(self) -> int:
        return len(self._langs_by_qid)

    def add(self, qid: str, language: str, title: str, *, strict: bool = False) -> None:
        existing_qid = self._qid_by_title.get((language, title))
        per_lang = self._langs_by_qid.setdefault(qid, {})
        existing_title = per_lang.get(language)
        if (existing_qid is not None and existing_qid != qid) or (
            existing_title is not None and existing_title != title
        ):
            if strict:
                raise DuplicateKeyError(
                    f"conflicting sitelink ({qid}, {language}, {title})"
                )
            self.n_conflicts += 1  # first wins
            if not per_lang:
                del self._langs_by_qid[qid]
            return
        per_lang[language] = title
        self._qid_by_title[(language, title)] = qid

    def qid_for(self, language: str, title: str) -> str | None:
        return self._qid_by_title.get((language, title))

    def qids(self) -> list[str]:
        """All known item ids, sorted."""
        return sorted(self._langs_by_qid)

    def sitelinks(self, qid: str) -> dict[str, str]:
        return dict(self._langs_by_qid.get(qid, {}))

    def languages_of(self, qid: str) -> set[str]:
        return set(self._langs_by_qid.get(qid, {}))

    def attach_page_ids(self, language: str, id_by_title: dict[str, int]) -> int:
        """Resolve this language's sitelink titles to page ids.

        Returns the number of attached pages; titles absent from the
        index are skipped.
        """
        attached = 0
        for (lang, title), qid in self._qid_by_title.items():
            if lang != language:
                continue
            page_id = id_by_title.get(title)
            if page_id is None:
                continue
            self._page_by_qid.setdefault(qid, {})[language] = page_id
            self._qid_by_page[(language, page_id)] = qid
            attached += 1
        return attached

    def attach_page(self, qid: str, language: str, page_id: int) -> None:
        """Directly register a qid/page pairing (fixture convenience)."""
        self._page_by_qid.setdefault(qid, {})[language] = page_id
        self._qid_by_page[(language, page_id)] = qid

    def qid_for_page(self, language: str, page_id: int) -> str | None:
        return self._qid_by_page.get((language, page_id))

    def page_for_qid(self, language: str, qid: str) -> int | None:
        return self._page_by_qid.get(qid, {}).get(language)


def read_sitelinks_tsv(lines: Iterable[str]) -> Iterator[SitelinkRecord]:
    """Parse headerless sitelink TSV lines ``qid<TAB>language<TAB>title``."""
    for number, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3 or not all(parts):
            raise TsvFormatError(f"bad sitelink line {line!r}", number)
        yield SitelinkRecord(parts[0], parts[1], parts[2])


def load_sitelinks(
    records: Iterable[SitelinkRecord], *, strict: bool = False
) -> QidIndex:
    """Build a :class:`QidIndex`, first row winning on lenient conflicts."""
    index = QidIndex()
    for rec in records:
        index.add(rec.qid, rec.language, rec.title, strict=strict)
    if index.n_conflicts:
        logger.warning("sitelinks: %d conflicting rows ignored", index.n_conflicts)
    return index


class PageviewTable:
    """Monthly view counts keyed by (language, page_id, month, referrer)."""

    def __init__(self) -> None:
        self._views: dict[tuple[str, int, str, str], int] = {}
        self.n_rows = 0
        self.n_skipped = 0
        self.n_duplicates = 0

    def __len__(self) -> int:
        return len(self._views)

    def views(
        self, language: str, page_id: int, month: str, referrer_class: str = "all"
    ) -> int:
        """The recorded count, or 0 when no row exists."""
        return self._views.get((language, page_id, month, referrer_class), 0)

    def has_row(
        self, language: str, page_id: int, month: str, referrer_class: str = "all"
    ) -> bool:
        return (language, page_id, month, referrer_class) in self._views

    def referrer_classes(self) -> set[str]:
        return {key[3] for key in self._views}

    def add(self, record: PageviewRecord, *, strict: bool = False) -> None:
        key = (record.language, record.page_id, record.month, record.referrer_class)
        if key in self._views:
            if strict:
                raise DuplicateKeyError(f"duplicate pageview row for {key}")
            self.n_duplicates += 1
            return
        self._views[key] = record.views
        self.n_rows += 1


def read_pageviews_tsv(lines: Iterable[str]) -> Iterator[PageviewRecord]:
    """Parse headerless pageview TSV lines."""
    for number, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise TsvFormatError(f"expected 5 columns, got {len(parts)}", number)
        try:
            yield PageviewRecord(
                parts[0], int(parts[1]), parts[2], parts[3], int(parts[4])
            )
        except ValueError as exc:
            raise TsvFormatError(f"bad pageview line {line!r}: {exc}", number)


def load_pageviews(
    records: Iterable[PageviewRecord], *, strict: bool = False
) -> PageviewTable:
    """Validate pageview records into a :class:`PageviewTable`.

    Bad rows (negative views, unknown referrer class, malformed month)
    raise in strict mode and are skipped-and-counted otherwise.
    Duplicate keys are rejected the same way.
    """
    table = PageviewTable()
    for rec in records:
        try:
            if rec.views < 0:
                raise InvalidRecordError(f"negative view count in {rec}")
            if rec.referrer_class not in REFERRER_CLASSES:
                raise InvalidRecordError(
                    f"unknown referrer class {rec.referrer_class!r}"
                )
            if not rec.language or rec.page_id <= 0:
                raise InvalidRecordError(f"bad key in {rec}")
            parse_month(rec.month)
        except (InvalidRecordError, MonthFormatError):
            if strict:
                raise
            table.n_skipped += 1
            continue
        table.add(rec, strict=strict)
    return table


def read_features_tsv(lines: Iterable[str]) -> Iterator[FeatureRecord]:
    """Parse headerless per-article feature TSV lines.

    Columns: language, page_id, bot_created, is_woman_biography (``NA``
    for non-biographies), p_culture, p_geography, p_history_society,
    p_stem, quality_score, creation_timestamp.
    """
    for number, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 10:
            raise TsvFormatError(f"expected 10 columns, got {len(parts)}", number)
        try:
            woman: bool | None
            if parts[3] == "NA":
                woman = None
            else:
                woman = bool(int(parts[3]))
            probs = {
                label: float(parts[4 + i]) for i, label in enumerate(TOPIC_LABELS)
            }
            quality = float(parts[8])
            for value in (*probs.values(), quality):
                if not 0.0 <= value <= 1.0:
                    raise ValueError(f"probability {value} outside [0, 1]")
            yield FeatureRecord(
                language=parts[0],
                page_id=int(parts[1]),
                bot_created=bool(int(parts[2])),
                is_woman_biography=woman,
                topic_probabilities=probs,
                quality_score=quality,
                creation_timestamp=int(parts[9]),
            )
        except ValueError as exc:
            raise TsvFormatError(f"bad feature line {line!r}: {exc}", number)
