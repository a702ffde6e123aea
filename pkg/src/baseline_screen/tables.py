"""Contingency tables with fixed marginals.

A 2x2 table follows the usual layout for one dichotomous baseline variable::

              group 1   group 2
    yes         k1        k2       s
    no        n1 - k1   n2 - k2   N - s
                n1        n2       N

R x C tables have categories as rows and treatment groups as columns.
"""

from dataclasses import dataclass
from typing import Iterator, Tuple, Union

import numpy as np

__all__ = [
    "DEFAULT_ENUMERATION_CAP",
    "EnumerationCapExceeded",
    "Marginals",
    "Table2x2",
    "TableRxC",
    "count_tables_upper_bound",
    "enumerate_rxc",
    "iter_cells",
    "marginals",
    "support_2x2",
]

DEFAULT_ENUMERATION_CAP = 10**7


class EnumerationCapExceeded(RuntimeError):
    """Raised when a full enumeration would exceed the configured table cap."""

    def __init__(self, estimated, cap, exact=True):
        self.estimated = estimated
        self.cap = cap
        qualifier = "" if exact else "more than "
        super().__init__(
            f"enumeration would visit {qualifier}{estimated:,} tables, above the cap of {cap:,}"
        )


@dataclass(frozen=True)
class Table2x2:
    k1: int
    k2: int
    n1: int
    n2: int

    def __post_init__(self):
        for name in ("k1", "k2", "n1", "n2"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ValueError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError(f"group sizes must be at least 1, got n1={self.n1}, n2={self.n2}")
        if not 0 <= self.k1 <= self.n1:
            raise ValueError(f"k1={self.k1} outside [0, n1={self.n1}]")
        if not 0 <= self.k2 <= self.n2:
            raise ValueError(f"k2={self.k2} outside [0, n2={self.n2}]")

    @property
    def s(self) -> int:
        return self.k1 + self.k2

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    def as_rxc(self) -> "TableRxC":
        return TableRxC(((self.k1, self.k2), (self.n1 - self.k1, self.n2 - self.k2)))


@dataclass(frozen=True)
class TableRxC:
    counts: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(int(c) for c in row) for row in self.counts)
        if len(rows) < 2:
            raise ValueError("an R x C table needs at least 2 rows")
        width = len(rows[0])
        if width < 2 or any(len(row) != width for row in rows):
            raise ValueError("an R x C table needs at least 2 columns and equal row lengths")
        if any(c < 0 for row in rows for c in row):
            raise ValueError("table counts must be non-negative")
        if any(sum(col) < 1 for col in zip(*rows)):
            raise ValueError("every column total must be at least 1")
        object.__setattr__(self, "counts", rows)

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.counts), len(self.counts[0])

    def to_array(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.int64)


@dataclass(frozen=True)
class Marginals:
    row_totals: Tuple[int, ...]
    col_totals: Tuple[int, ...]

    def __post_init__(self):
        rows = tuple(int(r) for r in self.row_totals)
        cols = tuple(int(c) for c in self.col_totals)
        if any(v < 0 for v in rows + cols):
            raise ValueError("marginal totals must be non-negative")
        if sum(rows) != sum(cols):
            raise ValueError(f"row totals sum to {sum(rows)} but column totals sum to {sum(cols)}")
        object.__setattr__(self, "row_totals", rows)
        object.__setattr__(self, "col_totals", cols)

    @property
    def total(self) -> int:
        return sum(self.row_totals)

    @property
    def is_2x2(self) -> bool:
        return len(self.row_totals) == 2 and len(self.col_totals) == 2


AnyTable = Union[Table2x2, TableRxC]


def marginals(table: AnyTable) -> Marginals:
    if isinstance(table, Table2x2):
        return Marginals((table.s, table.n - table.s), (table.n1, table.n2))
    counts = table.counts
    return Marginals(tuple(sum(row) for row in counts), tuple(sum(col) for col in zip(*counts)))


def support_2x2(m: Marginals) -> range:
    """Feasible values of k1 (top-left cell) given 2x2 marginals."""
    if not m.is_2x2:
        raise ValueError("support_2x2 needs 2x2 marginals")
    s = m.row_totals[0]
    n1, n2 = m.col_totals
    return range(max(0, s - n2), min(s, n1) + 1)


def count_tables_upper_bound(m: Marginals) -> int:
    """Product of the free cells' ranges; an upper bound on the table count."""
    bound = 1
    for r in m.row_totals[:-1]:
        for c in m.col_totals[:-1]:
            bound *= min(r, c) + 1
    return bound


def _count_two_column(m: Marginals) -> int:
    # Number of ways to pick x_i in [0, r_i] with sum c_1.
    target = m.col_totals[0]
    ways = np.zeros(target + 1, dtype=object)
    ways[0] = 1
    for r in m.row_totals:
        nxt = np.zeros(target + 1, dtype=object)
        for x in range(min(r, target) + 1):
            nxt[x:] += ways[: target + 1 - x]
        ways = nxt
    return int(ways[target])


def iter_cells(m: Marginals, cap: int = DEFAULT_ENUMERATION_CAP) -> Iterator[Tuple[int, ...]]:
    """Yield flat row-major cell tuples of every table with marginals ``m``.

    Tables come out in lexicographic order of their row-major cells. The cap
    is checked up front when the count is cheap to bound, otherwise while
    streaming.
    """
    rows = m.row_totals
    cols = m.col_totals
    n_rows, n_cols = len(rows), len(cols)
    if n_rows < 1 or n_cols < 1:
        raise ValueError("marginals need at least one row and one column")

    lazy_cap = False
    bound = count_tables_upper_bound(m)
    if bound > cap:
        if n_cols == 2:
            exact = _count_two_column(m)
            if exact > cap:
                raise EnumerationCapExceeded(exact, cap)
        elif n_rows == 2:
            exact = _count_two_column(Marginals(cols, rows))
            if exact > cap:
                raise EnumerationCapExceeded(exact, cap)
        else:
            lazy_cap = True

    n_cells = n_rows * n_cols
    cells = [0] * n_cells
    row_resid = list(rows)
    col_resid = list(cols)
    produced = 0

    def fill(idx):
        nonlocal produced
        if idx == n_cells:
            produced += 1
            if lazy_cap and produced > cap:
                raise EnumerationCapExceeded(cap, cap, exact=False)
            yield tuple(cells)
            return
        i, j = divmod(idx, n_cols)
        r = row_resid[i]
        right = sum(col_resid[j + 1:])
        lo = max(0, r - right)
        hi = min(r, col_resid[j])
        for x in range(lo, hi + 1):
            cells[idx] = x
            row_resid[i] -= x
            col_resid[j] -= x
            yield from fill(idx + 1)
            row_resid[i] += x
            col_resid[j] += x

    yield from fill(0)


def enumerate_rxc(m: Marginals, cap: int = DEFAULT_ENUMERATION_CAP) -> Iterator[TableRxC]:
    """Stream every R x C table with marginals ``m``, exactly once each."""
    n_cols = len(m.col_totals)
    for flat in iter_cells(m, cap):
        yield TableRxC(tuple(flat[i:i + n_cols] for i in range(0, len(flat), n_cols)))
