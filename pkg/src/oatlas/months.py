"""Calendar month arithmetic on ``YYYY-MM`` strings.

Snapshots, pageview rows, and panel observations are all keyed by month
strings of this form, so the helpers here are deliberately string-in,
string-out.
"""

from __future__ import annotations

import re

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


class MonthFormatError(ValueError):
    """Raised when a month string is not of the form YYYY-MM."""


def parse_month(month: str) -> tuple[int, int]:
    """Split a ``YYYY-MM`` string into (year, month), validating both."""
    m = _MONTH_RE.match(month)
    if m is None:
        raise MonthFormatError(f"bad month {month!r}: expected YYYY-MM")
    year, mon = int(m.group(1)), int(m.group(2))
    if not 1 <= mon <= 12:
        raise MonthFormatError(f"bad month {month!r}: month out of range")
    return year, mon


def format_month(year: int, mon: int) -> str:
    return f"{year:04d}-{mon:02d}"


def month_add(month: str, delta: int) -> str:
    """Return the month ``delta`` calendar months after (or before) ``month``."""
    year, mon = parse_month(month)
    idx = year * 12 + (mon - 1) + delta
    return format_month(idx // 12, idx % 12 + 1)


def month_diff(a: str, b: str) -> int:
    """Number of calendar months from ``b`` to ``a`` (positive when a > b)."""
    ya, ma = parse_month(a)
    yb, mb = parse_month(b)
    return (ya * 12 + ma) - (yb * 12 + mb)


def month_range(first: str, last: str) -> list[str]:
    """Inclusive list of months from ``first`` to ``last``."""
    n = month_diff(last, first)
    if n < 0:
        raise MonthFormatError(f"month range {first}..{last} runs backwards")
    return [month_add(first, k) for k in range(n + 1)]
