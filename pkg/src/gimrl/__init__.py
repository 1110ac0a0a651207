"""Reinforcement-learning itemset mining with exhaustive reference miners."""
from .dataset import Task, TransactionDatabase, load, load_plain, load_utility, prune_items, split_source_target
from .measures import MeasureConfig, confidence, support, utility
from .oracle import mine_ar_exhaustive, mine_fi_exhaustive, mine_hui_exhaustive
from .trainer import MiningResult, RunConfig, run, sweep, total_step_number
from .transfer import align_items, transfer_experiment, transfer_network

__all__ = [
    "MeasureConfig", "MiningResult", "RunConfig", "Task", "TransactionDatabase",
    "align_items", "confidence", "load", "load_plain", "load_utility",
    "mine_ar_exhaustive", "mine_fi_exhaustive", "mine_hui_exhaustive",
    "prune_items", "run", "split_source_target", "support", "sweep",
    "total_step_number", "transfer_experiment", "transfer_network", "utility",
]
