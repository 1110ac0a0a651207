from fractions import Fraction

import pytest
from hypothesis import given

from gimrl.dataset import (
    DatasetError,
    NoCandidatesError,
    Task,
    TransactionDatabase,
    absolute_threshold,
    dumps,
    load,
    load_plain,
    load_utility,
    prune_items,
    save,
    split_source_target,
    stats,
)

from conftest import databases


def write(tmp_path, text, name="db.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_duplicate_items_in_a_line_are_merged(tmp_path):
    db = load_plain(write(tmp_path, "1 2 2 3\n"))
    assert db.n_transactions == 1
    assert db.n_items == 3
    assert db.to_external(db.transactions[0]) == (1, 2, 3)


def test_item_frequencies_by_hand(tmp_path):
    db = load_plain(write(tmp_path, "5\n5 7\n"))
    s = stats(db)
    assert (s.n_transactions, s.n_items) == (2, 2)
    assert s.item_frequencies == {5: 2, 7: 1}
    assert s.avg_transaction_len == 1.5


def test_first_occurrence_remap(tmp_path):
    db = load_plain(write(tmp_path, "9 4\n4 1\n"))
    assert db.item_names == (9, 4, 1)
    assert db.external_to_internal == {9: 0, 4: 1, 1: 2}


def test_comments_blank_lines_and_crlf(tmp_path):
    p = tmp_path / "db.txt"
    p.write_bytes(b"# header\r\n\r\n1 2\r\n@meta\r\n3\r\n")
    db = load_plain(p)
    assert db.n_transactions == 2


@pytest.mark.parametrize("text, where", [("1 x\n", "line 1"), ("1\n-2\n", "line 2"), ("", "no transactions")])
def test_plain_errors_name_the_line(tmp_path, text, where):
    with pytest.raises(DatasetError, match=where):
        load_plain(write(tmp_path, text))


def test_utility_line_format(tmp_path):
    db = load_utility(write(tmp_path, "1 2:10:4 6\n"))
    assert db.is_utility
    assert db.transaction_utilities.tolist() == [10]
    assert dict(zip(db.to_external(db.transactions[0]), db.utilities[0])) == {1: 4, 2: 6}


def test_utility_total_by_hand(tmp_path):
    text = "1 2:10:4 6\n2 3:7:2 5\n1 3 4:12:1 1 10\n"
    db = load_utility(write(tmp_path, text))
    assert db.total_utility == 10 + 7 + 12
    assert stats(db).total_utility == 29


@pytest.mark.parametrize(
    "text, msg",
    [
        ("1 2:10\n", "3 ':'-separated"),
        ("1 2:10:4\n", "2 items but 1 utilities"),
        ("1 2:11:4 6\n", "transaction utility"),
        ("1 1:8:4 4\n", "repeated item"),
    ],
)
def test_utility_errors(tmp_path, text, msg):
    with pytest.raises(DatasetError, match=msg):
        load_utility(write(tmp_path, text))


def test_utility_sum_is_checked_exactly_for_decimals(tmp_path):
    db = load_utility(write(tmp_path, "1 2:0.3:0.1 0.2\n"))
    assert db.n_items == 2


def test_load_sniffs_format(tmp_path):
    assert load(write(tmp_path, "# c\n1 2:3:1 2\n")).is_utility
    assert not load(write(tmp_path, "1 2\n", "p.txt")).is_utility


@given(databases(utility=True))
def test_round_trip(db):
    from tempfile import TemporaryDirectory
    from pathlib import Path

    with TemporaryDirectory() as d:
        p = Path(d) / "db.txt"
        save(db, p)
        again = load(p)
    assert dumps(again) == dumps(db)
    assert again.item_names == db.item_names


def test_invariants_rejected():
    with pytest.raises(DatasetError):
        TransactionDatabase(((0,), ()), (1,))
    with pytest.raises(DatasetError, match="never occur"):
        TransactionDatabase(((0,),), (1, 2))
    with pytest.raises(DatasetError):
        TransactionDatabase((), ())


def test_prune_fi_by_support():
    db = TransactionDatabase.from_transactions([[1, 2]] * 2 + [[1]] * 3)
    # supports: item 1 -> 5, item 2 -> 2
    pruned, remap = prune_items(db, Task.FI, 3)
    assert pruned.item_names == (1,)
    assert remap == {0: 0}


def test_prune_hui_by_twu():
    # TWU(1) = 30 + 10 = 40, TWU(2) = 9
    db = TransactionDatabase.from_transactions([[1], [1], [2]], [[30], [10], [9]])
    pruned, _ = prune_items(db, Task.HUI, 10)
    assert pruned.item_names == (1,)


def test_prune_no_op_and_all_pruned(fig2):
    same, remap = prune_items(fig2, Task.FI, 1)
    assert same is fig2 and remap == {m: m for m in range(5)}
    with pytest.raises(NoCandidatesError):
        prune_items(fig2, Task.FI, 100)


def test_hui_prune_repeats_until_stable():
    # TWU(1)=3, TWU(2)=2; at 3 item 2 goes, then TWU(1) falls to 2 and item 1 goes too
    db = TransactionDatabase.from_transactions([[1, 2], [1]], [[1, 1], [1]])
    with pytest.raises(NoCandidatesError):
        prune_items(db, Task.HUI, 3)
    db = TransactionDatabase.from_transactions([[1, 2], [1, 3], [3]], [[5, 1], [5, 2], [1]])
    # TWU: 1 -> 13, 2 -> 6, 3 -> 8; at 7 item 2 goes, TWU(1) -> 12, stable
    pruned, remap = prune_items(db, Task.HUI, 7)
    assert pruned.item_names == (1, 3)
    assert remap == {0: 0, 2: 1}


def test_prune_drops_emptied_transactions(fig2):
    pruned, _ = prune_items(fig2, Task.FI, 5)
    assert pruned.item_names == (1, 2)
    assert pruned.n_transactions == 7


@given(databases(utility=True))
def test_prune_is_idempotent(db):
    for task in (Task.FI, Task.HUI):
        score = db.item_twu if task is Task.HUI else db.item_support
        threshold = int(sorted(score)[len(score) // 2])
        try:
            once, _ = prune_items(db, task, threshold)
        except NoCandidatesError:
            continue
        twice, remap = prune_items(once, task, threshold)
        assert twice is once
        assert remap == {m: m for m in range(once.n_items)}


def test_split_ten_transactions():
    db = TransactionDatabase.from_transactions([[i % 3 + 1] for i in range(10)])
    src, tgt = split_source_target(db)
    assert (src.n_transactions, tgt.n_transactions) == (6, 4)


@given(databases(max_transactions=40))
def test_split_preserves_sequence(db):
    if db.n_transactions < 2:
        with pytest.raises(DatasetError):
            split_source_target(db)
        return
    src, tgt = split_source_target(db)
    assert src.n_transactions == int(Fraction(3, 5) * db.n_transactions) or src.n_transactions == 1
    rows = [src.to_external(t) for t in src.transactions] + [tgt.to_external(t) for t in tgt.transactions]
    assert rows == [db.to_external(t) for t in db.transactions]


def test_absolute_threshold_rounds_up(fig2):
    assert absolute_threshold(fig2, Task.FI, 71.4) == 5  # 0.714 * 7 = 4.998
    assert absolute_threshold(fig2, Task.FI, "50") == 4  # 3.5 -> 4
    db = TransactionDatabase.from_transactions([[1], [2]], [[7], [3]])
    assert absolute_threshold(db, Task.HUI, 25) == 3  # 2.5 -> 3
    assert absolute_threshold(db, Task.HUI, 30) == 3  # exactly 3, no float spill to 4
