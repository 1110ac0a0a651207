"""Reading and writing mined-pattern files, and coverage against a reference.

One pattern per line, items as external ids::

    1 2 #SUP: 5
    3 7 #UTIL: 412
    1 2 ==> 3 #SUP: 2 #CONF: 0.4

Lines are sorted by (length, internal ids) so equal sets give identical files.
"""
from __future__ import annotations

from pathlib import Path
from typing import Iterable, Mapping

from .dataset import DatasetError, Task, TransactionDatabase
from .measures import confidence, support, utility

RULE_ARROW = "==>"


def _ext(db: TransactionDatabase, items: Iterable[int]) -> str:
    return " ".join(str(x) for x in db.to_external(items))


def _fmt_num(v) -> str:
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return repr(v) if isinstance(v, float) else str(v)


def _sort_key(pattern):
    if isinstance(pattern[0], tuple):
        ante, cons = pattern
        return (len(ante) + 1, ante, cons)
    return (len(pattern), pattern)


def format_patterns(db: TransactionDatabase, task: Task | str, patterns: Iterable) -> str:
    """Render patterns (internal ids) with measures recomputed from ``db``."""
    task = Task(task)
    lines = []
    for p in sorted(set(patterns), key=_sort_key):
        if task is Task.AR:
            ante, cons = p
            c = confidence(db, ante, (cons,))
            lines.append(f"{_ext(db, ante)} {RULE_ARROW} {_ext(db, (cons,))} "
                         f"#SUP: {c.support} #CONF: {c.value:.6f}")
        elif task is Task.HUI:
            lines.append(f"{_ext(db, p)} #UTIL: {_fmt_num(utility(db, p))}")
        else:
            lines.append(f"{_ext(db, p)} #SUP: {support(db, p)}")
    return "".join(line + "\n" for line in lines)


def write_patterns(path: str | Path, db: TransactionDatabase, task: Task | str, patterns: Iterable) -> None:
    Path(path).write_text(format_patterns(db, task, patterns), encoding="utf-8")


def parse_patterns(text: str) -> set:
    """Patterns as external ids: frozensets for itemsets, (frozenset, item) for rules."""
    out = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if RULE_ARROW in line:
                left, right = line.split(RULE_ARROW)
                cons = [int(x) for x in right.split()]
                if len(cons) != 1:
                    raise ValueError("rule consequent must be a single item")
                out.add((frozenset(int(x) for x in left.split()), cons[0]))
            else:
                out.add(frozenset(int(x) for x in line.split()))
        except ValueError as exc:
            raise DatasetError(f"line {lineno}: {exc}") from None
    return out


def read_patterns(path: str | Path) -> set:
    return parse_patterns(Path(path).read_text(encoding="utf-8"))


def to_external_patterns(db: TransactionDatabase, patterns: Iterable) -> set:
    out = set()
    for p in patterns:
        if p and isinstance(p[0], tuple):
            out.add((frozenset(db.to_external(p[0])), db.to_external((p[1],))[0]))
        else:
            out.add(frozenset(db.to_external(p)))
    return out


def coverage(found: set, reference: set) -> float:
    """Percentage of ``reference`` present in ``found``; an empty reference counts as full coverage."""
    if not reference:
        return 100.0
    return 100.0 * len(found & reference) / len(reference)


def format_coverage(found: set, reference: set) -> str:
    """``k (xx.x%)`` with the percentage truncated, never rounded up, to one decimal."""
    k = len(found & reference)
    permille = 1000 if not reference else 1000 * k // len(reference)
    return f"{k} ({permille // 10}.{permille % 10}%)"


def scored(patterns: Mapping) -> list:
    return sorted(patterns, key=_sort_key)
