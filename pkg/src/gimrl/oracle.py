"""Exhaustive miners used as ground truth.

* frequent itemsets: level-wise Apriori over tid bitsets
* single-consequent rules: derived from the frequent itemsets
* high-utility itemsets: utility-list depth-first search (HUI-Miner style)
  with TWU item pruning and the remaining-utility subtree bound
"""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from .dataset import DatasetError, TransactionDatabase

DEFAULT_CAP = 5_000_000


class EnumerationCapError(RuntimeError):
    def __init__(self, cap: int):
        super().__init__(f"enumeration exceeded {cap} candidates; raise the threshold")


def mine_fi_exhaustive(db: TransactionDatabase, min_sup: int, cap: int = DEFAULT_CAP) -> dict[tuple[int, ...], int]:
    """All itemsets with support >= min_sup, keyed by sorted internal ids."""
    sets = db.tidsets
    level = {(m,): sets[m] for m in range(db.n_items) if sets[m].bit_count() >= min_sup}
    result = {k: t.bit_count() for k, t in level.items()}
    examined = len(level)
    while level:
        keys = sorted(level)
        nxt = {}
        for a in range(len(keys)):
            ka = keys[a]
            prefix = ka[:-1]
            for b in range(a + 1, len(keys)):
                kb = keys[b]
                if kb[:-1] != prefix:
                    break
                cand = ka + (kb[-1],)
                # downward closure: every (k-1)-subset must be frequent
                if any(cand[:j] + cand[j + 1:] not in level for j in range(len(cand) - 2)):
                    continue
                examined += 1
                if examined > cap:
                    raise EnumerationCapError(cap)
                tids = level[ka] & sets[kb[-1]]
                sup = tids.bit_count()
                if sup >= min_sup:
                    nxt[cand] = tids
        result.update((k, t.bit_count()) for k, t in nxt.items())
        level = nxt
    return result


def mine_ar_exhaustive(
    db: TransactionDatabase, min_sup: int, min_conf: float, cap: int = DEFAULT_CAP,
    frequent: dict[tuple[int, ...], int] | None = None,
) -> dict[tuple[tuple[int, ...], int], tuple[int, float]]:
    """Rules X\\{c} -> c with sup(X) >= min_sup and sup(X)/sup(X\\{c}) >= min_conf.

    Keys are ``(antecedent, consequent)``; values ``(support, confidence)``.
    """
    if frequent is None:
        frequent = mine_fi_exhaustive(db, min_sup, cap)
    conf = Fraction(min_conf).limit_denominator(10**9)
    rules = {}
    for itemset, sup in frequent.items():
        if len(itemset) < 2:
            continue
        for j, c in enumerate(itemset):
            ante = itemset[:j] + itemset[j + 1:]
            a_sup = frequent[ante]
            if sup * conf.denominator >= conf.numerator * a_sup:
                rules[(ante, c)] = (sup, sup / a_sup)
    return rules


def mine_hui_exhaustive(db: TransactionDatabase, min_util, cap: int = DEFAULT_CAP) -> dict[tuple[int, ...], int | float]:
    """All itemsets with utility >= min_util, keyed by sorted internal ids."""
    if not db.is_utility:
        raise DatasetError("HUI mining needs a utility database")
    twu = db.item_twu
    promising = [m for m in range(db.n_items) if twu[m] >= min_util]
    order = sorted(promising, key=lambda m: (twu[m], m))
    rank = {m: r for r, m in enumerate(order)}

    # utility lists: per item, parallel arrays (tid, item utility, remaining utility)
    dtype = db.util_matrix.dtype
    tids_of = {m: [] for m in order}
    iu_of = {m: [] for m in order}
    ru_of = {m: [] for m in order}
    for n, (t, u) in enumerate(zip(db.transactions, db.utilities)):
        row = sorted((rank[i], i, v) for i, v in zip(t, u) if i in rank)
        remaining = sum(v for _, _, v in row)
        for _, i, v in row:
            remaining -= v
            tids_of[i].append(n)
            iu_of[i].append(v)
            ru_of[i].append(remaining)
    lists = [
        (m, np.array(tids_of[m], dtype=np.int64), np.array(iu_of[m], dtype=dtype), np.array(ru_of[m], dtype=dtype))
        for m in order
    ]

    result: dict[tuple[int, ...], int | float] = {}
    counter = [0]

    def construct(p, x, y):
        _, ptid, piu, _ = p if p is not None else (None, None, None, None)
        _, xtid, xiu, _ = x
        yi, ytid, yiu, yru = y
        common, ix, iy = np.intersect1d(xtid, ytid, assume_unique=True, return_indices=True)
        iu = xiu[ix] + yiu[iy]
        if ptid is not None:
            iu = iu - piu[np.searchsorted(ptid, common)]
        return (yi, common, iu, yru[iy])

    def search(prefix, p, exts):
        for k, x in enumerate(exts):
            counter[0] += 1
            if counter[0] > cap:
                raise EnumerationCapError(cap)
            _, _, xiu, xru = x
            iu_sum = xiu.sum()
            itemset = prefix + (x[0],)
            if iu_sum >= min_util:
                result[tuple(sorted(itemset))] = iu_sum.item()
            if iu_sum + xru.sum() >= min_util:
                children = []
                for y in exts[k + 1:]:
                    c = construct(p, x, y)
                    if len(c[1]):
                        children.append(c)
                if children:
                    search(itemset, x, children)

    search((), None, lists)
    return result


def brute_force(db: TransactionDatabase, measure) -> dict[tuple[int, ...], object]:
    """Score every nonempty itemset straight from the raw transactions (testing aid)."""
    from itertools import combinations

    rows = [set(t) for t in db.transactions]
    out = {}
    for size in range(1, db.n_items + 1):
        for itemset in combinations(range(db.n_items), size):
            out[itemset] = measure(itemset, rows)
    return out
