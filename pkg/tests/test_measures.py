import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gimrl.dataset import DatasetError, Task, TransactionDatabase
from gimrl.measures import (
    MeasureConfig,
    MeasureError,
    confidence,
    exists_in,
    flip_measures,
    normalization_factor,
    support,
    utility,
)

from conftest import databases


def ids(db, *external):
    return tuple(db.external_to_internal[x] for x in external)


def test_fixture_supports(fig2):
    assert support(fig2, ids(fig2, 2)) == 6
    assert support(fig2, ids(fig2, 1, 2, 3)) == 2
    assert support(fig2, ids(fig2, 1, 2)) == 5


def test_fixture_existence(fig2):
    assert not exists_in(fig2, ids(fig2, 2, 3, 4))
    assert exists_in(fig2, ids(fig2, 2, 3, 5))
    assert all(exists_in(fig2, (m,)) for m in range(fig2.n_items))


def test_single_transaction_full_itemset():
    db = TransactionDatabase.from_transactions([[4, 5, 6]])
    assert support(db, range(3)) == 1


def test_empty_itemset_rejected(fig2):
    with pytest.raises(MeasureError):
        support(fig2, ())


def test_utility_toy():
    # T1 = {a:6, b:5}, T2 = {a:3}
    db = TransactionDatabase.from_transactions([[1, 2], [1]], [[6, 5], [3]])
    a, b = 0, 1
    assert utility(db, (a, b)) == 11
    assert utility(db, (a,)) == 9
    absent = TransactionDatabase.from_transactions([[1], [2]], [[1], [1]])
    assert utility(absent, (0, 1)) == 0


def test_utility_needs_utility_db(fig2):
    with pytest.raises(MeasureError):
        utility(fig2, (0,))


def test_fixture_confidence(fig2):
    c = confidence(fig2, ids(fig2, 1), ids(fig2, 2))
    assert c.support == 5
    assert c.value == 5 / support(fig2, ids(fig2, 1))


def test_confidence_one_and_zero():
    db = TransactionDatabase.from_transactions([[1, 2], [1, 2, 3], [3]])
    assert confidence(db, (0,), 1).value == 1.0
    c = confidence(db, (0, 2), 1)
    assert c.value == 1.0
    db2 = TransactionDatabase.from_transactions([[1], [2], [3]])
    c = confidence(db2, (0, 1), 2)
    assert c.value == 0.0 and c.zero_support


def test_confidence_errors(fig2):
    with pytest.raises(MeasureError):
        confidence(fig2, (0, 1), 1)
    with pytest.raises(MeasureError):
        confidence(fig2, (0,), (1, 2))


def test_normalization_factors(fig2):
    assert normalization_factor(fig2, Task.FI) == 7
    assert normalization_factor(fig2, Task.AR) == 7
    assert normalization_factor(fig2, Task.AR, "confidence") == 1
    db = TransactionDatabase.from_transactions([[1, 2], [2]], [[4, 6], [4]])
    assert normalization_factor(db, Task.HUI) == 14
    with pytest.raises(DatasetError):
        normalization_factor(fig2, Task.HUI)


def test_measure_config_validation(fig2):
    with pytest.raises(MeasureError):
        MeasureConfig(Task.AR, 3, 7.0)
    with pytest.raises(MeasureError):
        MeasureConfig(Task.FI, 3, 7.0, 0.5)
    with pytest.raises(MeasureError):
        MeasureConfig(Task.FI, 3, 0.0)
    cfg = MeasureConfig.for_db(fig2, Task.AR, 2, 0.8)
    assert cfg.Z == 7
    assert cfg.conf_ok(4, 5) and not cfg.conf_ok(3, 4) and not cfg.conf_ok(1, 0)


def _brute_support(rows, items):
    return sum(1 for r in rows if set(items) <= r)


@st.composite
def db_and_pair(draw):
    db = draw(databases(utility=True))
    x = draw(st.sets(st.integers(0, db.n_items - 1), min_size=1))
    extra = draw(st.sets(st.integers(0, db.n_items - 1)))
    return db, tuple(sorted(x)), tuple(sorted(x | extra))


@given(db_and_pair())
def test_anti_monotone_and_bounded(case):
    db, x, y = case
    assert support(db, x) >= support(db, y)
    assert support(db, y) <= db.n_transactions
    assert utility(db, y) <= normalization_factor(db, Task.HUI)
    rows = [set(t) for t in db.transactions]
    assert support(db, y) == _brute_support(rows, y)


@given(databases(utility=True))
def test_singleton_utility_is_column_sum(db):
    for m in range(db.n_items):
        expected = sum(u[t.index(m)] for t, u in zip(db.transactions, db.utilities) if m in t)
        assert utility(db, (m,)) == expected


@given(db_and_pair())
def test_confidence_in_unit_interval(case):
    db, x, _ = case
    for c in range(db.n_items):
        if c in x:
            continue
        conf = confidence(db, x, c)
        if not conf.zero_support:
            assert 0.0 <= conf.value <= 1.0


@st.composite
def db_and_bits(draw):
    db = draw(databases(max_items=8, utility=True))
    bits = np.array(draw(st.lists(st.booleans(), min_size=db.n_items, max_size=db.n_items)))
    return db, bits


@given(db_and_bits())
def test_flip_measures_match_direct_queries(case):
    db, bits = case
    x = set(np.flatnonzero(bits).tolist())
    hui = flip_measures(db, bits, Task.HUI).phi
    fi = flip_measures(db, bits, Task.FI).phi
    ar = flip_measures(db, bits, Task.AR)
    for m in range(db.n_items):
        flipped = tuple(sorted(x ^ {m}))
        if flipped:
            assert fi[m] == support(db, flipped)
            assert hui[m] == utility(db, flipped)
        else:
            assert fi[m] == 0 and hui[m] == 0
        ante = tuple(sorted(x - {m}))
        if not ante:
            assert ar.phi[m] == 0 and ar.conf[m] == 0.0
            continue
        c = confidence(db, ante, m)
        assert ar.phi[m] == c.support
        assert math.isclose(ar.conf[m], c.value, rel_tol=0, abs_tol=0)
