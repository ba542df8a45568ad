"""Addresses, the hyperparameter store and the per-episode trace engine."""

import logging
import re
from dataclasses import dataclass, field
from functools import total_ordering
from typing import Any, Dict, Iterable, Iterator, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from src.core.distributions import (
    DistFamily,
    sample,
    score_logpdf_grad,
    to_constrained,
    to_unconstrained,
)
from src.core.errors import ArgumentError, EpisodeCapError, RewardError, TraceError

logger = logging.getLogger(__name__)

Arg = Union[int, str]

# Step caps are this multiple of the world's natural horizon.
STEP_CAP_FACTOR = 10

# spawn_key namespaces for episode streams
TRAIN_STREAM = 0
EVAL_STREAM = 1

# Text forms of integer arguments; string arguments may not look like this
_INT_TEXT = re.compile(r"-?[0-9]+")


def _normalize_arg(arg) -> Arg:
    if isinstance(arg, (bool, np.bool_)):
        raise ArgumentError(f"Address arguments must be int or str, got {arg!r}")
    if isinstance(arg, (int, np.integer)):
        return int(arg)
    if isinstance(arg, str):
        if ":" in arg or _INT_TEXT.fullmatch(arg):
            raise ArgumentError(f"String argument {arg!r} has no unambiguous text form")
        return arg
    raise ArgumentError(f"Address arguments must be int or str, got {arg!r}")


@total_ordering
@dataclass(frozen=True, eq=True)
class Address:
    """
    Structured name of one random choice, e.g. ``Address("Q", (3, 7))``.

    Equality is structural. Ordering is lexicographic on the tag, then on the
    arguments with integers sorting before strings, so stores iterate
    deterministically.
    """

    tag: str
    args: Tuple[Arg, ...] = ()

    def __post_init__(self):
        if not isinstance(self.tag, str) or not self.tag or ":" in self.tag:
            raise ArgumentError(f"Address tag must be a non-empty string without ':': {self.tag!r}")
        object.__setattr__(self, "args", tuple(_normalize_arg(a) for a in self.args))

    @classmethod
    def of(cls, tag: str, *args) -> "Address":
        return cls(tag, tuple(args))

    @classmethod
    def parse(cls, text: str) -> "Address":
        """Inverse of ``str(address)``."""
        tag, *args = text.split(":")
        return cls(tag, tuple(int(a) if _INT_TEXT.fullmatch(a) else a for a in args))

    def _key(self):
        return self.tag, tuple((0, a, "") if isinstance(a, int) else (1, 0, a) for a in self.args)

    def __lt__(self, other):
        if not isinstance(other, Address):
            return NotImplemented
        return self._key() < other._key()

    def __str__(self):
        return ":".join([self.tag, *(str(a) for a in self.args)])


@dataclass
class HyperEntry:
    """Family and unconstrained parameter vector of one learnable address."""

    family: DistFamily
    rho: np.ndarray

    @property
    def hypers(self) -> np.ndarray:
        """Constrained hyperparameters lambda = transform(rho)."""
        return to_constrained(self.family, self.rho)


class HyperStore:
    """
    Map from address to distribution family and hyperparameters.

    Entries are added lazily the first time an address is sampled and are
    never removed. Iteration is in address order.
    """

    def __init__(self):
        """Initialize an empty store."""
        self._entries: Dict[Address, HyperEntry] = {}
        self._order: Optional[List[Address]] = None

    def __len__(self):
        return len(self._entries)

    def __contains__(self, address):
        return address in self._entries

    def __iter__(self) -> Iterator[Address]:
        if self._order is None:
            self._order = sorted(self._entries)
        return iter(self._order)

    def items(self) -> Iterator[Tuple[Address, HyperEntry]]:
        for address in self:
            yield address, self._entries[address]

    def get(self, address: Address) -> Optional[HyperEntry]:
        return self._entries.get(address)

    def hypers(self, address: Address) -> np.ndarray:
        return self._entries[address].hypers

    def register(self, address: Address, family: DistFamily, init_hypers) -> HyperEntry:
        """
        Add an entry for `address` unless one exists.

        Args:
            address: Address of the random choice
            family: Learnable distribution family
            init_hypers: Constrained initial hyperparameters

        Returns:
            The (possibly pre-existing) entry
        """
        if not family.learnable:
            raise TraceError(f"Cannot store fixed family {family} at {address}")
        entry = self._entries.get(address)
        if entry is not None:
            if entry.family != family:
                raise TraceError(
                    f"Family mismatch at {address}: stored {entry.family!r}, got {family!r}"
                )
            return entry
        entry = HyperEntry(family, to_unconstrained(family, init_hypers))
        self._entries[address] = entry
        self._order = None
        return entry

    def put(self, address: Address, family: DistFamily, rho):
        """Insert or replace an entry by its unconstrained parameters."""
        self._entries[address] = HyperEntry(family, np.asarray(rho, dtype=float))
        self._order = None

    def set_rho(self, address: Address, rho: np.ndarray):
        self._entries[address].rho = np.asarray(rho, dtype=float)

    def absorb(self, traces: Iterable["Trace"]) -> int:
        """
        Register every learnable address seen in `traces`.

        Workers draw unseen addresses from their initial hypers without
        touching the shared store; the updater calls this between batches.

        Returns:
            Number of new entries
        """
        before = len(self)
        for trace in traces:
            for record in trace.records:
                if record.family.learnable and record.address not in self._entries:
                    self.register(record.address, record.family, record.init_hypers)
        added = len(self) - before
        if added:
            logger.debug(f"Store grew by {added} entries to {len(self)}")
        return added


class TraceRecord(NamedTuple):
    """One random choice made during an episode."""

    address: Address
    family: DistFamily
    value: Any
    log_density: float
    grad: Optional[np.ndarray]
    hypers: np.ndarray
    init_hypers: np.ndarray


@dataclass(frozen=True)
class Trace:
    """The random choices of one episode together with its reward."""

    records: Tuple[TraceRecord, ...]
    reward: float
    seed: int
    info: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.reward):
            raise RewardError(f"Non-finite reward {self.reward} (episode seed {self.seed})")

    @property
    def log_density(self) -> float:
        return float(sum(r.log_density for r in self.records))

    def learnable_records(self) -> List[TraceRecord]:
        return [r for r in self.records if r.grad is not None]

    def value(self, address: Address):
        for record in self.records:
            if record.address == address:
                return record.value
        raise KeyError(address)


def episode_seed(master_seed: int, step: int, episode: int, stream: int = TRAIN_STREAM) -> int:
    """64-bit seed of one episode, derived from (master seed, stream, step, episode)."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(stream, step, episode))
    low, high = seq.generate_state(2, dtype=np.uint32)
    return int(high) << 32 | int(low)


def episode_rng(seed: int) -> np.random.Generator:
    """Counter-based stream for one episode."""
    return np.random.Generator(np.random.Philox(key=seed))


class EpisodeContext:
    """
    Per-episode handle through which policy programs make random choices.

    Args:
        store: Hyperparameter store (read for learnable families)
        rng: Random stream of the episode
        seed: Episode seed, recorded on the trace
        horizon: Natural horizon of the world; None disables the step cap
        frozen: When True unseen addresses use their initial hypers and the
            store is never modified (batch episodes and evaluation)
    """

    def __init__(self, store: HyperStore, rng: np.random.Generator, seed: int = 0,
                 horizon: Optional[int] = None, frozen: bool = False):
        self.store = store
        self.rng = rng
        self.seed = seed
        self.frozen = frozen
        self.step_cap = None if horizon is None else STEP_CAP_FACTOR * max(int(horizon), 1)
        self.steps = 0
        self.info: Dict[str, Any] = {}
        # program-private state for the episode; never recorded
        self.scratch: Dict[str, Any] = {}
        self._records: List[TraceRecord] = []
        self._index: Dict[Address, int] = {}
        self._occurrences: Dict[Tuple, int] = {}

    def sample(self, address: Address, family: DistFamily, init_hypers):
        """
        Draw the random choice at `address` and append it to the trace.

        Args:
            address: Address, unused so far in this episode
            family: Distribution family
            init_hypers: Initial hypers (learnable) or the hypers (fixed)

        Returns:
            The sampled value
        """
        if address in self._index:
            raise TraceError(f"Address {address} sampled twice in one episode")

        if family.learnable:
            entry = self.store.get(address)
            if entry is not None and entry.family != family:
                raise TraceError(
                    f"Family mismatch at {address}: stored {entry.family!r}, got {family!r}"
                )
            if entry is None and not self.frozen:
                entry = self.store.register(address, family, init_hypers)
            hypers = entry.hypers if entry is not None else np.asarray(init_hypers, dtype=float)
        else:
            hypers = np.asarray(init_hypers, dtype=float)

        value = sample(family, hypers, self.rng)
        log_density, grad = score_logpdf_grad(family, hypers, value)
        self._index[address] = len(self._records)
        self._records.append(
            TraceRecord(address, family, value, log_density, grad, hypers, np.asarray(init_hypers))
        )
        return value

    def memo(self, address: Address, family: DistFamily, init_hypers):
        """Value already traced at `address` this episode, drawn on first use."""
        index = self._index.get(address)
        if index is None:
            return self.sample(address, family, init_hypers)
        record = self._records[index]
        if record.family != family:
            raise TraceError(f"Family mismatch at {address}: traced {record.family!r}")
        return record.value

    def flip(self, address: Address, p: float) -> bool:
        """Fixed-family Bernoulli noise."""
        return self.sample(address, DistFamily.bernoulli(), [p])

    def choose(self, address: Address, weights) -> int:
        """Fixed-family Categorical over the indices of `weights`."""
        weights = np.asarray(weights, dtype=float)
        return self.sample(address, DistFamily.categorical(len(weights)), weights)

    def next_address(self, tag: str, *args) -> Address:
        """``(tag, *args, n)`` where n counts earlier uses of ``(tag, *args)``."""
        key = (tag, *args)
        n = self._occurrences.get(key, 0)
        self._occurrences[key] = n + 1
        return Address(tag, (*args, n))

    def tick(self, n: int = 1):
        """Count agent steps; exceeding the cap is a hard error."""
        self.steps += n
        if self.step_cap is not None and self.steps > self.step_cap:
            raise EpisodeCapError(
                f"Episode (seed {self.seed}) exceeded its step cap of {self.step_cap}"
            )

    def annotate(self, **info):
        self.info.update(info)

    def finish(self, reward: float) -> Trace:
        return Trace(tuple(self._records), float(reward), self.seed, dict(self.info))


def trace_sample(ctx: EpisodeContext, address: Address, family: DistFamily, init_hypers):
    """Draw the choice at `address` through the episode context."""
    return ctx.sample(address, family, init_hypers)
