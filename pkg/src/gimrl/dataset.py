"""Transaction databases in the SPMF text formats.

Two on-disk formats are understood:

* plain: one transaction per line, whitespace-separated non-negative item ids
* utility: ``i1 i2 ... : TU : u1 u2 ...`` where ``u_j`` is the utility of the
  j-th item occurrence (price times quantity) and ``TU`` their sum

Items are remapped to dense zero-based internal ids in order of first
occurrence.  ``item_names[m]`` gives the external id of internal item ``m``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class Task(str, Enum):
    HUI = "hui"
    FI = "fi"
    AR = "ar"


class DatasetError(ValueError):
    """Malformed or unusable transaction data."""


class NoCandidatesError(DatasetError):
    """Raised when pruning removes every item."""


_COMMENT_PREFIXES = ("#", "%", "@")


@dataclass(frozen=True, eq=False)
class TransactionDatabase:
    transactions: tuple[tuple[int, ...], ...]
    item_names: tuple[int, ...]
    utilities: tuple[tuple[int | float, ...], ...] | None = None

    def __post_init__(self):
        if not self.transactions:
            raise DatasetError("database has no transactions")
        n_items = len(self.item_names)
        if len(set(self.item_names)) != n_items:
            raise DatasetError("duplicate external item ids")
        seen = np.zeros(n_items, dtype=bool)
        for n, t in enumerate(self.transactions):
            if not t:
                raise DatasetError(f"transaction {n} is empty")
            if len(set(t)) != len(t):
                raise DatasetError(f"transaction {n} repeats an item")
            for i in t:
                if not 0 <= i < n_items:
                    raise DatasetError(f"transaction {n} has item id {i} outside [0, {n_items})")
                seen[i] = True
        if not seen.all():
            missing = [self.item_names[m] for m in np.flatnonzero(~seen)]
            raise DatasetError(f"items never occur in any transaction: {missing[:10]}")
        if self.utilities is not None:
            if len(self.utilities) != len(self.transactions):
                raise DatasetError("utility rows do not match transactions")
            for n, (t, u) in enumerate(zip(self.transactions, self.utilities)):
                if len(t) != len(u):
                    raise DatasetError(f"transaction {n}: {len(t)} items but {len(u)} utilities")

    @classmethod
    def from_transactions(
        cls,
        transactions: Iterable[Sequence[int]],
        utilities: Iterable[Sequence[int | float]] | None = None,
    ) -> "TransactionDatabase":
        """Build from external item ids, remapping them densely by first occurrence."""
        ext_to_int: dict[int, int] = {}
        rows = []
        util_rows = None if utilities is None else []
        util_iter = iter(utilities) if utilities is not None else None
        for t in transactions:
            u = next(util_iter) if util_iter is not None else None
            row, urow, in_row = [], [], set()
            for j, ext in enumerate(t):
                ext = int(ext)
                if ext in in_row:
                    if u is not None:
                        raise DatasetError(f"utility transaction repeats item {ext}")
                    continue
                in_row.add(ext)
                row.append(ext_to_int.setdefault(ext, len(ext_to_int)))
                if u is not None:
                    urow.append(u[j])
            rows.append(tuple(row))
            if util_rows is not None:
                util_rows.append(tuple(urow))
        names = tuple(sorted(ext_to_int, key=ext_to_int.__getitem__))
        return cls(tuple(rows), names, None if util_rows is None else tuple(util_rows))

    @property
    def n_transactions(self) -> int:
        return len(self.transactions)

    @property
    def n_items(self) -> int:
        return len(self.item_names)

    @property
    def is_utility(self) -> bool:
        return self.utilities is not None

    @cached_property
    def external_to_internal(self) -> dict[int, int]:
        return {ext: m for m, ext in enumerate(self.item_names)}

    @cached_property
    def transaction_utilities(self) -> np.ndarray:
        if self.utilities is None:
            raise DatasetError("database carries no utilities")
        return np.array([sum(u) for u in self.utilities], dtype=self._util_dtype)

    @cached_property
    def _util_dtype(self):
        if self.utilities is None:
            return np.int64
        integral = all(isinstance(v, (int, np.integer)) for u in self.utilities for v in u)
        return np.int64 if integral else np.float64

    # Vertical index, built once.  Support and utility queries become
    # intersections over these structures instead of rescans.

    @cached_property
    def tidsets(self) -> tuple[int, ...]:
        """Per-item transaction-id bitsets as Python ints (bit n set if item in T_n)."""
        bits = [0] * self.n_items
        for n, t in enumerate(self.transactions):
            flag = 1 << n
            for i in t:
                bits[i] |= flag
        return tuple(bits)

    @cached_property
    def tid_matrix(self) -> np.ndarray:
        mat = np.zeros((self.n_items, self.n_transactions), dtype=bool)
        for n, t in enumerate(self.transactions):
            mat[list(t), n] = True
        mat.setflags(write=False)
        return mat

    @cached_property
    def util_matrix(self) -> np.ndarray:
        if self.utilities is None:
            raise DatasetError("database carries no utilities")
        mat = np.zeros((self.n_items, self.n_transactions), dtype=self._util_dtype)
        for n, (t, u) in enumerate(zip(self.transactions, self.utilities)):
            mat[list(t), n] = u
        mat.setflags(write=False)
        return mat

    @cached_property
    def item_support(self) -> np.ndarray:
        sup = self.tid_matrix.sum(axis=1)
        sup.setflags(write=False)
        return sup

    @cached_property
    def item_twu(self) -> np.ndarray:
        twu = (self.tid_matrix * self.transaction_utilities[None, :]).sum(axis=1)
        twu.setflags(write=False)
        return twu

    @property
    def total_utility(self):
        return self.transaction_utilities.sum().item()

    def to_external(self, itemset: Iterable[int]) -> tuple[int, ...]:
        return tuple(sorted(self.item_names[i] for i in itemset))


@dataclass(frozen=True)
class DatasetStats:
    n_transactions: int
    n_items: int
    avg_transaction_len: float
    item_frequencies: dict[int, int] = field(repr=False)
    total_utility: int | float | None = None


def stats(db: TransactionDatabase) -> DatasetStats:
    freqs = {db.item_names[m]: int(s) for m, s in enumerate(db.item_support)}
    total = sum(len(t) for t in db.transactions)
    return DatasetStats(
        n_transactions=db.n_transactions,
        n_items=db.n_items,
        avg_transaction_len=total / db.n_transactions,
        item_frequencies=freqs,
        total_utility=db.total_utility if db.is_utility else None,
    )


def _data_lines(path: str | Path):
    with open(path, encoding="utf-8", newline=None) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith(_COMMENT_PREFIXES):
                continue
            yield lineno, line


def _parse_ids(tokens: list[str], lineno: int) -> list[int]:
    try:
        ids = [int(tok) for tok in tokens]
    except ValueError:
        raise DatasetError(f"line {lineno}: item ids must be integers") from None
    if any(i < 0 for i in ids):
        raise DatasetError(f"line {lineno}: negative item id")
    return ids


def _parse_number(tok: str, lineno: int) -> int | float:
    try:
        return int(tok)
    except ValueError:
        pass
    try:
        return float(tok)
    except ValueError:
        raise DatasetError(f"line {lineno}: bad utility value {tok!r}") from None


def load_plain(path: str | Path) -> TransactionDatabase:
    rows = []
    for lineno, line in _data_lines(path):
        rows.append(_parse_ids(line.split(), lineno))
    if not rows:
        raise DatasetError(f"{path}: no transactions")
    return TransactionDatabase.from_transactions(rows)


def load_utility(path: str | Path) -> TransactionDatabase:
    rows, utils = [], []
    for lineno, line in _data_lines(path):
        parts = line.split(":")
        if len(parts) != 3:
            raise DatasetError(f"line {lineno}: expected 3 ':'-separated sections, got {len(parts)}")
        items = _parse_ids(parts[0].split(), lineno)
        tu = _parse_number(parts[1].strip(), lineno)
        occ = [_parse_number(tok, lineno) for tok in parts[2].split()]
        if not items:
            raise DatasetError(f"line {lineno}: empty transaction")
        if len(items) != len(occ):
            raise DatasetError(f"line {lineno}: {len(items)} items but {len(occ)} utilities")
        if len(set(items)) != len(items):
            raise DatasetError(f"line {lineno}: repeated item in utility transaction")
        if sum(Fraction(str(u)) for u in occ) != Fraction(str(tu)):
            raise DatasetError(f"line {lineno}: transaction utility {tu} != sum of item utilities")
        rows.append(items)
        utils.append(occ)
    if not rows:
        raise DatasetError(f"{path}: no transactions")
    return TransactionDatabase.from_transactions(rows, utils)


def load(path: str | Path, utility_format: bool | None = None) -> TransactionDatabase:
    """Load either format; sniff for ':' when ``utility_format`` is None."""
    if utility_format is None:
        utility_format = False
        for _, line in _data_lines(path):
            utility_format = ":" in line
            break
    return load_utility(path) if utility_format else load_plain(path)


def _fmt(v) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def dumps(db: TransactionDatabase) -> str:
    lines = []
    for n, t in enumerate(db.transactions):
        ids = " ".join(str(db.item_names[i]) for i in t)
        if db.is_utility:
            u = db.utilities[n]
            lines.append(f"{ids}:{_fmt(sum(u))}:{' '.join(_fmt(x) for x in u)}")
        else:
            lines.append(ids)
    return "\n".join(lines) + "\n"


def save(db: TransactionDatabase, path: str | Path) -> None:
    Path(path).write_text(dumps(db), encoding="utf-8")


def absolute_threshold(db: TransactionDatabase, task: Task | str, percent: float | str) -> int | float:
    """Convert a percentage threshold to absolute units, rounding up.

    Support thresholds are relative to N; utility thresholds to the total
    utility of the database.  Rounding up keeps ``>= threshold`` from
    admitting values strictly below the requested fraction.
    """
    frac = Fraction(str(percent)) / 100
    if Task(task) is Task.HUI:
        base = Fraction(str(db.total_utility))
    else:
        base = Fraction(db.n_transactions)
    return math.ceil(frac * base)


def prune_items(
    db: TransactionDatabase, task: Task | str, threshold: int | float
) -> tuple[TransactionDatabase, dict[int, int]]:
    """Drop items that cannot occur in any qualifying itemset.

    Returns the pruned database and a map from old internal ids to new ones.
    Support is the criterion for FI/AR, transaction-weighted utilisation for
    HUI.  Dropping items lowers transaction utilities, so the HUI filter is
    repeated until nothing changes; each round's TWU is still an upper bound.
    """
    task = Task(task)
    remap = {m: m for m in range(db.n_items)}
    while True:
        score = db.item_twu if task is Task.HUI else db.item_support
        keep = [m for m in range(db.n_items) if score[m] >= threshold]
        if not keep:
            raise NoCandidatesError(
                f"no item reaches the {task.value} threshold {threshold}; lower the threshold"
            )
        if len(keep) == db.n_items:
            return db, remap
        db, step = _keep_items(db, keep)
        remap = {old: step[mid] for old, mid in remap.items() if mid in step}


def _keep_items(db: TransactionDatabase, keep: list[int]) -> tuple[TransactionDatabase, dict[int, int]]:
    keep_set = set(keep)
    rows, util_rows = [], ([] if db.is_utility else None)
    for n, t in enumerate(db.transactions):
        cols = [j for j, i in enumerate(t) if i in keep_set]
        if not cols:
            continue
        rows.append([db.item_names[t[j]] for j in cols])
        if util_rows is not None:
            util_rows.append([db.utilities[n][j] for j in cols])
    pruned = TransactionDatabase.from_transactions(rows, util_rows)
    return pruned, {m: pruned.external_to_internal[db.item_names[m]] for m in keep}


def _subset(db: TransactionDatabase, rows: range) -> TransactionDatabase:
    ext = [[db.item_names[i] for i in db.transactions[n]] for n in rows]
    utils = [list(db.utilities[n]) for n in rows] if db.is_utility else None
    return TransactionDatabase.from_transactions(ext, utils)


def split_source_target(
    db: TransactionDatabase, fraction: Fraction = Fraction(3, 5)
) -> tuple[TransactionDatabase, TransactionDatabase]:
    """First ``floor(fraction * N)`` transactions form the source, the rest the target.

    Each partition gets its own dense item vocabulary; external ids link them.
    """
    if db.n_transactions < 2:
        raise DatasetError("need at least 2 transactions to split")
    cut = math.floor(Fraction(fraction) * db.n_transactions)
    cut = min(max(cut, 1), db.n_transactions - 1)
    return _subset(db, range(cut)), _subset(db, range(cut, db.n_transactions))
