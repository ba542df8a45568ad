"""Frozen-policy evaluation and hyperstore loading."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np

from src.core.distributions import DistFamily, Kind
from src.core.errors import ArgumentError, ValidationError
from src.core.trace import EVAL_STREAM, Address, HyperStore, Trace
from src.models.train_model import (
    STORE_FORMAT,
    PolicyProgram,
    WorldSimulator,
    reward_stats,
    run_batch,
)

logger = logging.getLogger(__name__)


@dataclass
class EvaluationResult:
    """Per-episode rewards of a test phase and their summary."""

    rewards: np.ndarray
    mean: float
    stderr: float
    traces: List[Trace] = field(default_factory=list, repr=False)

    @property
    def episodes(self) -> int:
        return len(self.rewards)

    def summary(self) -> Dict[str, float]:
        return {"episodes": self.episodes, "mean_reward": self.mean, "stderr": self.stderr}


def evaluate(program: PolicyProgram, world: WorldSimulator, store: HyperStore,
             episodes: int = 1000, seed: int = 0, workers: int = 1) -> EvaluationResult:
    """
    Run test episodes with a fixed learned policy.

    The store is never modified; addresses it does not contain are drawn from
    their initial hypers.

    Args:
        program: Policy program
        world: World simulator
        store: Learned hyperparameters
        episodes: Number of test episodes, >= 1
        seed: Master seed of the test phase
        workers: Number of parallel workers

    Returns:
        EvaluationResult with rewards, mean, standard error and traces
    """
    if episodes < 1:
        raise ArgumentError(f"episodes must be >= 1, got {episodes}")
    traces = run_batch(program, world, store, seed, 0, episodes, workers, stream=EVAL_STREAM)
    rewards = np.array([t.reward for t in traces])
    mean, stderr = reward_stats(rewards)
    logger.info(f"Evaluated {episodes} episodes: mean reward {mean:.4f} +/- {stderr:.4f}")
    return EvaluationResult(rewards, mean, stderr, traces)


def load_store(file_path: str) -> Tuple[HyperStore, Dict[str, str]]:
    """
    Load a store saved with `save_store`.

    Args:
        file_path: Path to the saved store

    Returns:
        (store, header) where header holds the comment key/value pairs
    """
    path = Path(file_path)
    if not path.exists():
        raise ValidationError(f"Hyperstore file not found: {file_path}")

    with open(path, "r") as f:
        lines = f.read().splitlines()
    if not lines or lines[0].strip() != STORE_FORMAT:
        raise ValidationError(f"{file_path} is not a hyperstore file")

    store = HyperStore()
    header: Dict[str, str] = {}
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            header[key.strip()] = value.strip()
            continue
        try:
            address, kind, arity, frozen, rho = line.split("\t")
            family = DistFamily(
                Kind(kind),
                int(arity),
                () if frozen == "-" else tuple(int(i) for i in frozen.split(",")),
            )
            values = np.array([float(x) for x in rho.split()])
            address = Address.parse(address)
        except ValueError as e:
            raise ValidationError(f"{file_path}:{number}: malformed entry ({e})") from e
        if len(values) != family.arity:
            raise ValidationError(f"{file_path}:{number}: expected {family.arity} parameters")
        store.put(address, family, values)
    return store, header


def store_summary(store: HyperStore) -> Dict[str, Any]:
    """Entry counts per family, for logs."""
    counts: Dict[str, int] = {}
    for _, entry in store.items():
        counts[str(entry.family)] = counts.get(str(entry.family), 0) + 1
    return {"entries": len(store), "families": counts}
