"""Policy learning: batched episodes, gradient estimates and ascent steps."""

import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from src.core.errors import BBPLError, ValidationError
from src.core.estimator import CONTROL_VARIATES, estimate_gradient
from src.core.optimizer import OptimState, optim_step
from src.core.trace import (
    TRAIN_STREAM,
    EpisodeContext,
    HyperStore,
    Trace,
    episode_rng,
    episode_seed,
)

logger = logging.getLogger(__name__)

STORE_FORMAT = "# bbpl-hyperstore 1"


class WorldSimulator(Protocol):
    """Samples the hidden state of the world at the start of an episode."""

    horizon: int

    def sample(self, rng: np.random.Generator) -> Any:
        ...


PolicyProgram = Callable[[EpisodeContext, Any], float]


@dataclass
class TrainConfig:
    """Learning-phase settings."""

    samples_per_step: int = 1000
    steps: int = 200
    beta: float = 1.0
    rho0: float = 0.1
    tau: float = 1.0
    kappa: float = 0.5
    rmsprop_decay: float = 0.9
    epsilon: float = 1e-8
    seed: int = 0
    control_variate: str = "log_weight"

    def __post_init__(self):
        if self.samples_per_step < 2:
            raise ValidationError(f"samples_per_step must be >= 2, got {self.samples_per_step}")
        if self.steps < 0:
            raise ValidationError(f"steps must be >= 0, got {self.steps}")
        if not self.beta > 0:
            raise ValidationError(f"beta must be positive, got {self.beta}")
        if self.control_variate not in CONTROL_VARIATES:
            raise ValidationError(f"Unknown control_variate {self.control_variate!r}")

    @classmethod
    def from_dict(cls, values: Optional[Dict[str, Any]]) -> "TrainConfig":
        """
        Build a config from a mapping, rejecting unknown keys.

        Args:
            values: Mapping of config keys (missing keys take defaults)

        Returns:
            TrainConfig instance
        """
        values = dict(values or {})
        unknown = sorted(set(values) - {f.name for f in fields(cls)})
        if unknown:
            raise ValidationError(f"Unknown train config keys: {unknown}")
        kwargs = {}
        for f in fields(cls):
            if f.name not in values:
                continue
            try:
                kwargs[f.name] = type(f.default)(values[f.name])
            except (TypeError, ValueError) as e:
                raise ValidationError(f"Invalid value for {f.name}: {values[f.name]!r}") from e
        return cls(**kwargs)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def optimizer(self) -> OptimState:
        return OptimState(
            rho0=self.rho0,
            tau=self.tau,
            kappa=self.kappa,
            decay=self.rmsprop_decay,
            epsilon=self.epsilon,
        )


def run_episode(program: PolicyProgram, world: WorldSimulator, store: HyperStore,
                seed: int, frozen: bool = True) -> Trace:
    """
    Simulate one episode and return its trace.

    Args:
        program: Policy program, called as program(ctx, world_state) -> reward
        world: World simulator
        store: Hyperparameter store
        seed: 64-bit episode seed
        frozen: Leave the store untouched; unseen addresses use their initial hypers

    Returns:
        Trace of the episode
    """
    rng = episode_rng(seed)
    ctx = EpisodeContext(store, rng, seed=seed, horizon=world.horizon, frozen=frozen)
    state = world.sample(rng)
    reward = program(ctx, state)
    return ctx.finish(reward)


def _run_chunk(program, world, store, seeds):
    return [run_episode(program, world, store, int(s)) for s in seeds]


def run_batch(program: PolicyProgram, world: WorldSimulator, store: HyperStore,
              master_seed: int, step: int, n: int, workers: int = 1,
              stream: int = TRAIN_STREAM) -> List[Trace]:
    """
    Simulate `n` independent episodes of one batch.

    Episode streams depend only on (master seed, stream, step, episode index),
    so the result is the same for any number of workers. The store is only
    read during a batch; new addresses are registered afterwards with
    `HyperStore.absorb`.

    Returns:
        Traces in episode order
    """
    seeds = [episode_seed(master_seed, step, i, stream) for i in range(n)]
    if workers <= 1 or n < 2:
        return _run_chunk(program, world, store, seeds)
    chunks = [c for c in np.array_split(np.array(seeds, dtype=np.uint64), workers) if len(c)]
    results = Parallel(n_jobs=workers)(
        delayed(_run_chunk)(program, world, store, chunk) for chunk in chunks
    )
    return [trace for chunk in results for trace in chunk]


def reward_stats(rewards: Sequence[float]) -> Tuple[float, float]:
    """Mean and standard error (0 for a single reward)."""
    rewards = np.asarray(rewards, dtype=float)
    if len(rewards) < 2:
        return float(rewards.mean()), 0.0
    return float(rewards.mean()), float(rewards.std(ddof=1) / np.sqrt(len(rewards)))


def train(program: PolicyProgram, world: WorldSimulator, config: TrainConfig,
          seed: Optional[int] = None, workers: int = 1, store: Optional[HyperStore] = None,
          progress: bool = False, log_every: int = 10) -> Tuple[HyperStore, pd.DataFrame]:
    """
    Learn prior hyperparameters by stochastic gradient ascent.

    Each step simulates `config.samples_per_step` episodes against the current
    store, estimates the gradient and applies one RMSProp-rescaled step.

    Args:
        program: Policy program
        world: World simulator
        config: Training configuration
        seed: Master seed (defaults to config.seed)
        workers: Number of parallel workers for episode batches
        store: Store to continue from (a fresh one by default)
        progress: Show a progress bar
        log_every: Log a summary line every this many steps

    Returns:
        (store, history) with history columns step, mean_reward, stderr
    """
    seed = config.seed if seed is None else seed
    store = HyperStore() if store is None else store
    state = config.optimizer()
    rows = []

    logger.info(
        f"Training for {config.steps} steps x {config.samples_per_step} episodes "
        f"(seed {seed}, workers {workers})"
    )
    for step in tqdm(range(config.steps), disable=not progress, desc="train"):
        try:
            traces = run_batch(program, world, store, seed, step, config.samples_per_step, workers)
            store.absorb(traces)
            grad = estimate_gradient(traces, config.beta, config.control_variate)
            optim_step(state, store, grad)
        except BBPLError as e:
            logger.error(f"Training aborted at step {step}: {e}")
            raise

        mean, stderr = reward_stats([t.reward for t in traces])
        rows.append({"step": step, "mean_reward": mean, "stderr": stderr})
        if log_every and (step % log_every == 0 or step == config.steps - 1):
            logger.info(f"step {step}: mean reward {mean:.4f} +/- {stderr:.4f}, {len(store)} hypers")

    history = pd.DataFrame(rows, columns=["step", "mean_reward", "stderr"])
    return store, history


def save_store(store: HyperStore, file_path: str, header: Optional[Dict[str, Any]] = None):
    """
    Save a store as line-oriented text.

    Each line holds the address, family, arity, frozen components and the
    exact unconstrained parameters.

    Args:
        store: Store to save
        file_path: Path to save the store
        header: Key/value pairs written as comment lines
    """
    Path(file_path).parent.mkdir(parents=True, exist_ok=True)
    lines = [STORE_FORMAT]
    lines += [f"# {key}: {value}" for key, value in (header or {}).items()]
    for address, entry in store.items():
        frozen = ",".join(str(i) for i in entry.family.frozen) or "-"
        rho = " ".join(repr(float(x)) for x in entry.rho)
        lines.append(f"{address}\t{entry.family}\t{entry.family.arity}\t{frozen}\t{rho}")
    with open(file_path, "w") as f:
        f.write("\n".join(lines) + "\n")
    logger.info(f"Hyperstore with {len(store)} entries saved to {file_path}")
