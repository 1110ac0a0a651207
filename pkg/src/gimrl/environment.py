"""Itemset-editing environment.

The environment holds a bit-vector over the M items of a (pruned) database.
Actions ``0..M-1`` flip one item's inclusion; action ``M`` redraws the whole
bit-vector.  Rewards follow a fixed ladder:

    -1   resulting itemset is empty or occurs in no transaction
     0   measure below a quarter of the threshold
  1..3   measure in [xi/4, xi/2), [xi/2, 3xi/4), [3xi/4, xi)
     4   threshold met, but the pattern was already found this episode
         (or, for rules, the confidence test failed)
   100   threshold met by a pattern new to this episode
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable

import numpy as np

from .dataset import Task, TransactionDatabase
from .measures import MeasureConfig, exists_in, flip_measures, support, tidset, utility

REWARDS = frozenset({-1, 0, 1, 2, 3, 4, 100})
EXTRACTION_REWARD = 100
REPEAT_REWARD = 4
MAX_INIT_TRIES = 10_000

# Pattern keys: sorted tuple of internal ids for itemsets,
# (antecedent tuple, consequent id) for rules.
Pattern = Hashable


class InitializationError(RuntimeError):
    pass


def itemset_of(bits: np.ndarray) -> tuple[int, ...]:
    return tuple(np.flatnonzero(bits).tolist())


def n_actions(db: TransactionDatabase) -> int:
    return db.n_items + 1


def random_initialize(db: TransactionDatabase, rng: np.random.Generator, max_tries: int = MAX_INIT_TRIES) -> np.ndarray:
    """Draw bits with P(b_m = 1) = freq_m / N until they encode an occurring itemset."""
    p = db.item_support / db.n_transactions
    for _ in range(max_tries):
        bits = rng.random(db.n_items) < p
        if bits.any() and exists_in(db, itemset_of(bits)):
            return bits
    raise InitializationError(
        f"no occurring itemset drawn in {max_tries} tries; review the pruning threshold"
    )


def apply_action(bits: np.ndarray, action: int, db: TransactionDatabase, rng: np.random.Generator) -> np.ndarray:
    if action == db.n_items:
        return random_initialize(db, rng)
    if not 0 <= action < db.n_items:
        raise ValueError(f"action {action} outside [0, {db.n_items}]")
    out = bits.copy()
    out[action] = not out[action]
    return out


def reward_bracket(value, threshold) -> int:
    """Rewards 0..4 for the quarter-threshold ladder; intervals are half-open."""
    if 4 * value < threshold:
        return 0
    if 2 * value < threshold:
        return 1
    if 4 * value < 3 * threshold:
        return 2
    if value < threshold:
        return 3
    return 4


@dataclass
class StepOutcome:
    next_bits: np.ndarray
    reward: int
    measure_value: float = 0.0
    pattern: Pattern | None = None
    qualifies: bool = False
    extracted: Pattern | None = None
    confidence: float | None = None


def compute_reward(
    prev_bits: np.ndarray,
    next_bits: np.ndarray,
    action: int,
    db: TransactionDatabase,
    cfg: MeasureConfig,
    episode_extracted: set,
) -> StepOutcome:
    """Score the edit ``prev_bits -> next_bits``.

    A newly qualifying pattern is added to ``episode_extracted``.  The caller
    owns the run-wide result set and should consult ``outcome.qualifies``.
    """
    x_next = itemset_of(next_bits)
    if not x_next or not exists_in(db, x_next):
        return StepOutcome(next_bits, -1, pattern=x_next or None)

    if cfg.task is not Task.AR or action == db.n_items:
        if cfg.task is Task.HUI:
            value = utility(db, x_next)
        else:
            value = support(db, x_next)
        reward = reward_bracket(value, cfg.threshold)
        # A redraw carries no edit direction, hence no rule.
        qualifies = reward == 4 and cfg.task is not Task.AR
        out = StepOutcome(next_bits, reward, value, x_next, qualifies)
        if qualifies and x_next not in episode_extracted:
            episode_extracted.add(x_next)
            out.reward = EXTRACTION_REWARD
            out.extracted = x_next
        return out

    added = bool(next_bits[action])
    antecedent = itemset_of(prev_bits) if added else x_next
    if not antecedent:
        return StepOutcome(next_bits, -1)
    rule = (antecedent, int(action))
    a_tids = tidset(db, antecedent)
    u_sup = (a_tids & db.tidsets[action]).bit_count()
    a_sup = a_tids.bit_count()
    reward = reward_bracket(u_sup, cfg.threshold)
    conf = u_sup / a_sup if a_sup else 0.0
    qualifies = reward == 4 and cfg.conf_ok(u_sup, a_sup)
    out = StepOutcome(next_bits, reward, u_sup, rule, qualifies, confidence=conf)
    if qualifies and rule not in episode_extracted:
        episode_extracted.add(rule)
        out.reward = EXTRACTION_REWARD
        out.extracted = rule
    return out


def compute_state(bits: np.ndarray, db: TransactionDatabase, cfg: MeasureConfig) -> np.ndarray:
    """log(phi / Z + 1) of every one-flip neighbour; 2M values for rules."""
    fm = flip_measures(db, bits, cfg.task)
    if cfg.task is Task.AR:
        sup_part = np.log1p(fm.phi / db.n_transactions)
        conf_part = np.log1p(fm.conf)
        return np.concatenate([sup_part, conf_part])
    return np.log1p(fm.phi / cfg.Z)


def extend_state(state: np.ndarray, n_items: int | None = None) -> np.ndarray:
    """Append 0.02 * mean of the (support-part) state for the redraw action."""
    state = np.asarray(state, dtype=np.float64)
    head = state if n_items is None else state[:n_items]
    return np.append(head, 0.02 * head.mean())


@dataclass
class ItemsetEnv:
    """Stateful wrapper: current bits, current state, per-episode extractions."""

    db: TransactionDatabase
    cfg: MeasureConfig
    rng: np.random.Generator
    bits: np.ndarray | None = None
    state: np.ndarray | None = None
    episode_extracted: set = field(default_factory=set)

    @property
    def n_actions(self) -> int:
        return self.db.n_items + 1

    @property
    def state_dim(self) -> int:
        return 2 * self.db.n_items if self.cfg.task is Task.AR else self.db.n_items

    def reset(self) -> np.ndarray:
        self.episode_extracted = set()
        self.bits = random_initialize(self.db, self.rng)
        self.state = compute_state(self.bits, self.db, self.cfg)
        return self.state

    def step(self, action: int) -> tuple[StepOutcome, np.ndarray]:
        nxt = apply_action(self.bits, action, self.db, self.rng)
        outcome = compute_reward(self.bits, nxt, action, self.db, self.cfg, self.episode_extracted)
        self.bits = nxt
        self.state = compute_state(nxt, self.db, self.cfg)
        return outcome, self.state
