"""Interestingness measures and normalisation factors.

All database scans in the package go through this module.  Queries run
against the vertical index built by :class:`TransactionDatabase`, so the
support of an itemset is a bitset intersection and a popcount.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, NamedTuple

import numpy as np

from .dataset import DatasetError, Task, TransactionDatabase


class MeasureError(ValueError):
    pass


@dataclass(frozen=True)
class MeasureConfig:
    """Target type plus absolute thresholds and the state normaliser Z.

    ``threshold`` is the minimum utility (HUI) or minimum support count
    (FI, and the support half of AR).  ``min_conf`` is only set for AR.
    """

    task: Task
    threshold: int | float
    Z: float
    min_conf: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "task", Task(self.task))
        if not self.Z > 0:
            raise MeasureError(f"normalisation factor must be positive, got {self.Z}")
        if self.threshold <= 0:
            raise MeasureError("threshold must be positive")
        if self.task is Task.AR:
            if self.min_conf is None:
                raise MeasureError("AR needs both a support and a confidence threshold")
            if not 0.0 <= self.min_conf <= 1.0:
                raise MeasureError("min_conf must lie in [0, 1]")
        elif self.min_conf is not None:
            raise MeasureError(f"{self.task.value} takes a single threshold")

    @classmethod
    def for_db(cls, db: TransactionDatabase, task: Task | str, threshold, min_conf=None) -> "MeasureConfig":
        task = Task(task)
        return cls(task, threshold, float(normalization_factor(db, task)), min_conf)

    @property
    def conf_fraction(self) -> Fraction:
        return Fraction(self.min_conf).limit_denominator(10**9)

    def conf_ok(self, union_support: int, antecedent_support: int) -> bool:
        """Exact rational test of ``union / antecedent >= min_conf``."""
        if antecedent_support <= 0:
            return False
        c = self.conf_fraction
        return union_support * c.denominator >= c.numerator * antecedent_support


def _check_itemset(db: TransactionDatabase, itemset) -> tuple[int, ...]:
    items = tuple(itemset)
    if not items:
        raise MeasureError("empty itemset")
    for i in items:
        if not 0 <= i < db.n_items:
            raise MeasureError(f"item id {i} outside [0, {db.n_items})")
    return items


def tidset(db: TransactionDatabase, itemset: Iterable[int]) -> int:
    items = _check_itemset(db, itemset)
    sets = db.tidsets
    acc = sets[items[0]]
    for i in items[1:]:
        acc &= sets[i]
        if not acc:
            break
    return acc


def support(db: TransactionDatabase, itemset: Iterable[int]) -> int:
    return tidset(db, itemset).bit_count()


def exists_in(db: TransactionDatabase, itemset: Iterable[int]) -> bool:
    return tidset(db, itemset) != 0


def containing_mask(db: TransactionDatabase, itemset: Iterable[int]) -> np.ndarray:
    items = list(_check_itemset(db, itemset))
    return db.tid_matrix[items].all(axis=0)


def utility(db: TransactionDatabase, itemset: Iterable[int]):
    if not db.is_utility:
        raise MeasureError("utility needs a database with per-item utilities")
    items = list(_check_itemset(db, itemset))
    mask = db.tid_matrix[items].all(axis=0)
    return db.util_matrix[items][:, mask].sum().item()


class Confidence(NamedTuple):
    value: float
    support: int
    antecedent_support: int

    @property
    def zero_support(self) -> bool:
        return self.antecedent_support == 0


def confidence(db: TransactionDatabase, antecedent: Iterable[int], consequent: Iterable[int] | int) -> Confidence:
    """Confidence of a single-consequent rule; 0 (flagged) when the antecedent never occurs."""
    ante = set(_check_itemset(db, antecedent))
    cons = {consequent} if isinstance(consequent, (int, np.integer)) else set(consequent)
    if len(cons) != 1:
        raise MeasureError("consequent must be exactly one item")
    if ante & cons:
        raise MeasureError("antecedent and consequent overlap")
    a_tids = tidset(db, ante)
    a_sup = a_tids.bit_count()
    u_sup = (a_tids & tidset(db, cons)).bit_count()
    if a_sup == 0:
        return Confidence(0.0, 0, 0)
    return Confidence(u_sup / a_sup, u_sup, a_sup)


def normalization_factor(db: TransactionDatabase, task: Task | str, component: str = "support"):
    """Z such that measure / Z lies in [0, 1].

    ``component='confidence'`` gives the AR confidence half, already in [0, 1].
    """
    task = Task(task)
    if component == "confidence":
        if task is not Task.AR:
            raise MeasureError("confidence component only exists for AR")
        return 1
    if component != "support":
        raise MeasureError(f"unknown component {component!r}")
    if task is Task.HUI:
        if not db.is_utility:
            raise DatasetError("HUI needs a utility database")
        return db.total_utility
    return db.n_transactions


class FlipMeasures(NamedTuple):
    """Measures of every itemset one flip away from a bit-vector.

    ``phi[m]`` is the primary measure of the edit that flips item ``m``
    (utility for HUI, support for FI, rule support for AR).  For AR,
    ``conf[m]`` is the confidence of the rule that edit induces.
    """

    phi: np.ndarray
    conf: np.ndarray | None


def flip_measures(db: TransactionDatabase, bits: np.ndarray, task: Task) -> FlipMeasures:
    """Vectorised one-step-ahead measures for all M flips of ``bits``.

    Empty or non-occurring flipped itemsets score 0.  For AR, an edit whose
    antecedent would be empty also scores 0 on both components.
    """
    bits = np.asarray(bits, dtype=bool)
    tid = db.tid_matrix
    size = int(bits.sum())
    # sign +1 adds item m, -1 removes it
    sign = np.where(bits, -1, 1)
    flipped_size = size + sign
    count_in_x = tid[bits].sum(axis=0, dtype=np.int64)
    contains = (count_in_x[None, :] + sign[:, None] * tid) == flipped_size[:, None]
    contains &= (flipped_size > 0)[:, None]

    if task is Task.HUI:
        util = db.util_matrix
        u_x = util[bits].sum(axis=0)
        per_tx = u_x[None, :] + sign[:, None] * util
        phi = np.where(contains, per_tx, 0).sum(axis=1)
        return FlipMeasures(phi, None)

    flip_sup = contains.sum(axis=1)
    if task is Task.FI:
        return FlipMeasures(flip_sup, None)

    sup_x = int((count_in_x == size).sum()) if size > 0 else 0
    adding = ~bits
    union_sup = np.where(adding, flip_sup, sup_x)
    ante_sup = np.where(adding, sup_x, flip_sup)
    valid = np.where(adding, size > 0, flipped_size > 0) & (ante_sup > 0)
    union_sup = np.where(valid, union_sup, 0)
    conf = np.zeros(db.n_items, dtype=np.float64)
    np.divide(union_sup, ante_sup, out=conf, where=valid)
    return FlipMeasures(union_sup, conf)
