import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from gimrl.alloc import tune_allocator
from gimrl.dataset import TransactionDatabase
from gimrl.fixtures import example_database

tune_allocator()

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def fig2():
    return example_database()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@st.composite
def databases(draw, max_items=12, max_transactions=30, utility=False):
    """Random databases over external ids 1..M in which every item occurs."""
    n_items = draw(st.integers(1, max_items))
    n_tx = draw(st.integers(1, max_transactions))
    rows = [
        draw(st.sets(st.integers(1, n_items), min_size=1, max_size=n_items).map(sorted))
        for _ in range(n_tx)
    ]
    missing = set(range(1, n_items + 1)) - {i for r in rows for i in r}
    if missing:
        rows.append(sorted(missing))
    utils = None
    if utility:
        utils = [[draw(st.integers(1, 20)) for _ in r] for r in rows]
    return TransactionDatabase.from_transactions(rows, utils)


# criterion number -> (passed, label, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, label, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n} {'PASS' if passed else 'FAIL'}: {label} ({detail})")
