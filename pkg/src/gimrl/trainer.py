"""Episode/step training loop, episode logs, result verification and sweeps."""
from __future__ import annotations

import csv
import io
import itertools
import json
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .agent import (
    AgentKind,
    DecaySchedule,
    FusionSchedule,
    ReplayMemory,
    select_action_basic,
    select_action_fusion,
    select_action_random,
    select_action_state_eps,
    select_action_state_prob,
    spec_for_task,
    train_step,
)
from .dataset import Task, TransactionDatabase, absolute_threshold, prune_items
from .environment import ItemsetEnv
from .measures import MeasureConfig, confidence, support, utility
from .neuralnet import QNetwork, RAdam

EPISODE_LOG_HEADER = ("episode", "extracted_this_episode", "cumulative_unique", "mean_reward", "loss_mean", "wall_ms")
WORKERS_ENV = "GIMRL_WORKERS"


class RunError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one run.

    ``threshold`` is a percentage (of N, or of total utility for HUI) unless
    ``threshold_abs`` is given.  ``min_conf`` is a fraction in [0, 1].
    """

    task: str = "hui"
    threshold: float | None = None
    threshold_abs: float | None = None
    min_conf: float | None = None
    agent: str = "fusion"
    episodes: int = 500
    steps: int = 500
    capacity: int = 10_000
    gamma: float = 0.95
    batch_size: int = 512
    target_sync: int = 5
    lr: float = 1e-3
    eps_start: float = 0.9
    eps_end: float = 0.05
    eps_delta: float = 200.0
    state_eps: float = 0.1
    lam_start: float = 0.999
    lam_end: float = 0.5
    lam_delta: float = 200.0
    grad_clip: float | None = None
    seed: int = 0
    widths: tuple[int, ...] | None = None

    def __post_init__(self):
        Task(self.task)
        AgentKind(self.agent)
        if self.widths is not None:
            object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.episodes < 1 or self.steps < 1:
            raise ValueError("episodes and steps must be at least 1")
        if self.target_sync < 1:
            raise ValueError("target_sync must be at least 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.capacity < 1 or self.batch_size < 2:
            raise ValueError("capacity must be >= 1 and batch_size >= 2")
        if self.threshold is None and self.threshold_abs is None:
            raise ValueError("set threshold (percent) or threshold_abs")
        if Task(self.task) is Task.AR and self.min_conf is None:
            raise ValueError("association rules need min_conf")
        if Task(self.task) is not Task.AR and self.min_conf is not None:
            raise ValueError(f"{self.task} takes no min_conf")

    def absolute(self, db: TransactionDatabase):
        if self.threshold_abs is not None:
            return self.threshold_abs
        return absolute_threshold(db, self.task, self.threshold)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))


@dataclass
class EpisodeLog:
    episode: int
    extracted: int
    cumulative_unique: int
    mean_reward: float
    loss_mean: float | None
    wall_ms: float
    # zero-based steps at which a globally new pattern was recorded
    discoveries: tuple[int, ...] = ()


@dataclass
class MiningResult:
    config: RunConfig
    db: TransactionDatabase
    measure: MeasureConfig
    patterns: dict
    logs: list[EpisodeLog]
    net: QNetwork | None
    optimizer: RAdam | None
    memory_size: int = 0
    pushes: int = 0
    target_syncs: int = 0
    k_total: int = 0
    total_step_number: int | None = None
    # final generator states and schedule counters, for checkpoints
    agent_state: dict = field(default_factory=dict)

    @property
    def n_found(self) -> int:
        return len(self.patterns)


def prepare(db: TransactionDatabase, config: RunConfig) -> tuple[TransactionDatabase, MeasureConfig]:
    """Resolve thresholds against ``db``, prune it, and build the measure config."""
    threshold = config.absolute(db)
    pruned, _ = prune_items(db, config.task, threshold)
    return pruned, MeasureConfig.for_db(pruned, config.task, threshold, config.min_conf)


def _measure_of(db, cfg: MeasureConfig, pattern):
    if cfg.task is Task.AR:
        ante, cons = pattern
        c = confidence(db, ante, (cons,))
        return c.support, c.value
    if cfg.task is Task.HUI:
        return utility(db, pattern)
    return support(db, pattern)


def verify_patterns(db: TransactionDatabase, cfg: MeasureConfig, patterns) -> None:
    """Re-score every pattern from scratch; raise if any misses its thresholds."""
    for p in patterns:
        if cfg.task is Task.AR:
            ante, cons = p
            c = confidence(db, ante, (cons,))
            ok = c.support >= cfg.threshold and cfg.conf_ok(c.support, c.antecedent_support)
        else:
            ok = _measure_of(db, cfg, p) >= cfg.threshold
        if not ok:
            raise RunError(f"extracted pattern {p} fails its thresholds on re-scoring")


def run(db: TransactionDatabase, config: RunConfig, initial_net: QNetwork | None = None,
        target_count: int | None = None) -> MiningResult:
    """Train (or just run) one agent for ``episodes * steps`` steps.

    ``initial_net`` replaces the He-initialised network (used for transfer).
    """
    pruned, mcfg = prepare(db, config)
    kind = AgentKind(config.agent)
    init_ss, env_ss, agent_ss, replay_ss = np.random.SeedSequence(config.seed).spawn(4)
    env = ItemsetEnv(pruned, mcfg, np.random.default_rng(env_ss))
    agent_rng = np.random.default_rng(agent_ss)
    replay_rng = np.random.default_rng(replay_ss)
    n_items = pruned.n_items

    net = target = optimizer = memory = None
    if kind.trains:
        spec = spec_for_task(config.task, n_items, config.widths)
        if initial_net is not None:
            if initial_net.spec != spec:
                raise RunError("initial network does not match this database's network layout")
            net = initial_net.clone()
        else:
            net = QNetwork.initialize(spec, np.random.default_rng(init_ss))
        target = net.clone().eval()
        optimizer = RAdam(lr=config.lr, grad_clip=config.grad_clip)
        memory = ReplayMemory(config.capacity, env.state_dim)
    epsilon = DecaySchedule(config.eps_start, config.eps_end, config.eps_delta)
    fusion = FusionSchedule(config.lam_start, config.lam_end, config.lam_delta)

    found: dict = {}
    logs: list[EpisodeLog] = []
    syncs = 0
    k_total = 0
    for e in range(config.episodes):
        t0 = time.perf_counter()
        extracted = 0
        rewards = 0.0
        losses = []
        discoveries = []
        k = -1
        try:
            state = env.reset()
            for k in range(config.steps):
                if kind is AgentKind.RANDOM:
                    action = select_action_random(n_items, agent_rng)
                elif kind is AgentKind.STATE_EPS:
                    action = select_action_state_eps(state[:n_items], config.state_eps, agent_rng)
                elif kind is AgentKind.STATE_PROB:
                    action = select_action_state_prob(state[:n_items], agent_rng)
                elif kind is AgentKind.BASIC:
                    action = select_action_basic(net, state, epsilon.value(k_total), agent_rng)
                else:
                    action = select_action_fusion(net, state, fusion, epsilon.value(k_total), agent_rng)
                outcome, next_state = env.step(action)
                if outcome.qualifies:
                    extracted += 1
                    if outcome.pattern not in found:
                        found[outcome.pattern] = outcome.measure_value
                        discoveries.append(k)
                rewards += outcome.reward
                if memory is not None:
                    memory.push(state, action, outcome.reward, next_state)
                    loss = train_step(net, target, memory, optimizer, config.gamma, config.batch_size, replay_rng)
                    if loss is not None:
                        losses.append(loss)
                state = next_state
                k_total += 1
        except RunError:
            raise
        except Exception as exc:
            raise RunError(f"episode {e}, step {k}: {exc}") from exc
        if net is not None and (e + 1) % config.target_sync == 0:
            net.copy_into(target)
            syncs += 1
        logs.append(EpisodeLog(
            episode=e,
            extracted=extracted,
            cumulative_unique=len(found),
            mean_reward=rewards / config.steps,
            loss_mean=float(np.mean(losses)) if losses else None,
            wall_ms=(time.perf_counter() - t0) * 1e3,
            discoveries=tuple(discoveries),
        ))

    verify_patterns(pruned, mcfg, found)
    patterns = {p: _measure_of(pruned, mcfg, p) for p in found}
    result = MiningResult(
        config=config, db=pruned, measure=mcfg, patterns=patterns, logs=logs,
        net=net, optimizer=optimizer,
        memory_size=len(memory) if memory is not None else 0,
        pushes=memory.pushes if memory is not None else 0,
        target_syncs=syncs, k_total=k_total,
        agent_state={
            "k_total": k_total,
            "lambda": fusion.current if kind is AgentKind.FUSION else None,
            "epsilon": epsilon.value(k_total) if kind.trains else None,
            "rng": {"env": env.rng.bit_generator.state, "agent": agent_rng.bit_generator.state,
                    "replay": replay_rng.bit_generator.state},
        },
    )
    if target_count is not None:
        result.total_step_number = total_step_number(logs, target_count, config.steps)
    return result


def total_step_number(logs: Sequence[EpisodeLog], target_count: int, steps: int) -> int | None:
    """e' * K + k' for the first step whose cumulative unique count reaches ``target_count``."""
    if target_count <= 0:
        return 0
    before = 0
    for completed, log in enumerate(logs):
        need = target_count - before
        if len(log.discoveries) >= need:
            return completed * steps + log.discoveries[need - 1]
        before += len(log.discoveries)
    return None


def episode_log_csv(logs: Sequence[EpisodeLog], include_timing: bool = False) -> str:
    """CSV text; ``wall_ms`` is written as 0 unless timing is requested, keeping files reproducible."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EPISODE_LOG_HEADER)
    for log in logs:
        w.writerow([
            log.episode,
            log.extracted,
            log.cumulative_unique,
            repr(log.mean_reward),
            "" if log.loss_mean is None else repr(log.loss_mean),
            f"{log.wall_ms:.3f}" if include_timing else 0,
        ])
    return buf.getvalue()


def write_episode_log(path: str | Path, logs: Sequence[EpisodeLog], include_timing: bool = False) -> None:
    Path(path).write_text(episode_log_csv(logs, include_timing), encoding="utf-8")


# sweeps

@dataclass
class SweepRow:
    params: dict
    seeds: list[int]
    counts: list[int]
    step_numbers: list[int | None]

    @property
    def mean_count(self) -> float:
        return statistics.fmean(self.counts)

    @property
    def median_count(self) -> float:
        return statistics.median(self.counts)

    @property
    def mean_steps(self) -> float | None:
        done = [s for s in self.step_numbers if s is not None]
        return statistics.fmean(done) if done else None

    @property
    def median_steps(self) -> float | None:
        done = [s for s in self.step_numbers if s is not None]
        return statistics.median(done) if done else None


@dataclass
class SweepReport:
    rows: list[SweepRow] = field(default_factory=list)

    @property
    def n_runs(self) -> int:
        return sum(len(r.counts) for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        keys = sorted({k for r in self.rows for k in r.params})
        w.writerow([*keys, "seed", "unique", "total_step_number"])
        for r in self.rows:
            for seed, c, s in zip(r.seeds, r.counts, r.step_numbers):
                w.writerow([*(json.dumps(r.params.get(k)) for k in keys), seed, c, "" if s is None else s])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        keys = sorted({k for r in self.rows for k in r.params})
        w.writerow([*keys, "runs", "mean_unique", "median_unique", "mean_steps", "median_steps"])
        for r in self.rows:
            w.writerow([*(json.dumps(r.params.get(k)) for k in keys), len(r.counts),
                        r.mean_count, r.median_count,
                        "" if r.mean_steps is None else r.mean_steps,
                        "" if r.median_steps is None else r.median_steps])
        return buf.getvalue()


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def sweep(db: TransactionDatabase, base: RunConfig, grid: Mapping[str, Sequence], repeats: int = 10,
          target_count: int | None = None, cartesian: bool = True, workers: int | None = None) -> SweepReport:
    """Run every grid cell ``repeats`` times with seeds ``base.seed + r``.

    ``cartesian=False`` varies one axis at a time around ``base``.
    """
    known = {f.name for f in fields(RunConfig)}
    bad = set(grid) - known
    if bad:
        raise ValueError(f"grid keys are not config fields: {sorted(bad)}")
    if cartesian:
        keys = list(grid)
        cells = [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    else:
        cells = [{k: v} for k, vals in grid.items() for v in vals]
    jobs = [(ci, replace(base, **cell, seed=base.seed + r)) for ci, cell in enumerate(cells) for r in range(repeats)]

    def one(job):
        ci, cfg = job
        res = run(db, cfg, target_count=target_count)
        return ci, cfg.seed, res.n_found, res.total_step_number

    n = workers or worker_count()
    if n == 1:
        outcomes = [one(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            outcomes = list(pool.map(one, jobs))
    rows = [SweepRow(dict(cell), [], [], []) for cell in cells]
    for ci, seed, count, steps in outcomes:
        rows[ci].seeds.append(seed)
        rows[ci].counts.append(count)
        rows[ci].step_numbers.append(steps)
    return SweepReport(rows)


# Hyperparameters used for the published runs, per task.
PUBLISHED_PRESETS: dict[Task, dict] = {
    Task.HUI: dict(episodes=500, steps=500, capacity=10_000, gamma=0.95, batch_size=512, target_sync=5,
                   lr=1e-3, lam_start=0.999, lam_end=0.5, lam_delta=200.0),
    Task.FI: dict(episodes=1000, steps=500, capacity=10_000, gamma=0.95, batch_size=512, target_sync=5,
                  lr=1e-3, lam_start=0.999, lam_end=0.6, lam_delta=200.0),
    Task.AR: dict(episodes=1000, steps=500, capacity=10_000, gamma=0.95, batch_size=512, target_sync=5,
                  lr=1e-3, lam_start=0.999, lam_end=0.5, lam_delta=200.0),
}
