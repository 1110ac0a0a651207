"""Small databases used for tests, demos and desk-scale experiments."""
from __future__ import annotations

from itertools import combinations

import numpy as np

from .dataset import TransactionDatabase

# Seven transactions over items 1..5 satisfying the worked-example counts:
#   sup{2}=6, sup{1,2}=5, sup{1,2,3}=2, sup{2,3,5}=1, {2,3,4} absent.
# First solution (in enumeration order, distinct transactions) returned by
# search_example_fixture(); frozen here and re-checked by the test suite.
EXAMPLE_TRANSACTIONS: tuple[tuple[int, ...], ...] = (
    (1,),
    (2,),
    (1, 2),
    (1, 2, 3),
    (1, 2, 4),
    (1, 2, 5),
    (1, 2, 3, 5),
)

EXAMPLE_CONSTRAINTS: dict[tuple[int, ...], int] = {
    (2,): 6,
    (1, 2): 5,
    (1, 2, 3): 2,
    (2, 3, 5): 1,
    (2, 3, 4): 0,
}


def _mask(items) -> int:
    return sum(1 << (i - 1) for i in items)


def search_example_fixture(
    n_transactions: int = 7,
    n_items: int = 5,
    constraints: dict[tuple[int, ...], int] = EXAMPLE_CONSTRAINTS,
    distinct: bool = True,
) -> list[tuple[tuple[int, ...], ...]]:
    """Enumerate every multiset of transactions meeting the support constraints.

    Depth-first over transactions in non-decreasing bitmask order.  A branch
    is cut as soon as a count overshoots its target or can no longer reach
    it with the slots left.  Every item must occur at least once.
    """
    candidates = list(range(1, 1 << n_items))
    targets = [(_mask(k), v) for k, v in constraints.items()]
    all_items = (1 << n_items) - 1
    found = []

    def rec(start, chosen, counts, covered):
        left = n_transactions - len(chosen)
        if any(c > t or t - c > left for c, (_, t) in zip(counts, targets)):
            return
        if left == 0:
            if covered == all_items:
                found.append(tuple(chosen))
            return
        for idx in range(start, len(candidates)):
            t = candidates[idx]
            new = [c + ((t & m) == m) for c, (m, _) in zip(counts, targets)]
            chosen.append(t)
            rec(idx + 1 if distinct else idx, chosen, new, covered | t)
            chosen.pop()

    rec(0, [], [0] * len(targets), 0)
    return [
        tuple(tuple(i + 1 for i in range(n_items) if t >> i & 1) for t in sol)
        for sol in found
    ]


def example_database() -> TransactionDatabase:
    """The 7-transaction, 5-item worked example (external ids 1..5)."""
    return TransactionDatabase.from_transactions(EXAMPLE_TRANSACTIONS)


def synthetic_database(
    n_transactions: int = 200,
    n_items: int = 12,
    seed: int = 7,
    n_patterns: int = 4,
) -> TransactionDatabase:
    """Random utility database with planted co-occurring item groups.

    Each transaction draws a few planted patterns plus independent noise
    items; quantities are 1..5 and unit prices are fixed per item, so the
    per-occurrence utility is price times quantity.
    """
    rng = np.random.default_rng(seed)
    items = np.arange(1, n_items + 1)
    patterns = [
        tuple(sorted(rng.choice(items, size=rng.integers(2, 5), replace=False).tolist()))
        for _ in range(n_patterns)
    ]
    pattern_p = rng.uniform(0.25, 0.6, size=n_patterns)
    noise_p = rng.uniform(0.05, 0.35, size=n_items)
    price = rng.integers(1, 11, size=n_items)

    rows, utils = [], []
    while len(rows) < n_transactions:
        chosen = set()
        for p, pat in zip(pattern_p, patterns):
            if rng.random() < p:
                chosen.update(pat)
        chosen.update(items[rng.random(n_items) < noise_p].tolist())
        if not chosen:
            continue
        row = sorted(chosen)
        qty = rng.integers(1, 6, size=len(row))
        rows.append(row)
        utils.append([int(price[i - 1] * q) for i, q in zip(row, qty)])
    return TransactionDatabase.from_transactions(rows, utils)


def all_itemsets(n_items: int):
    for size in range(1, n_items + 1):
        yield from combinations(range(n_items), size)
