"""Finite-horizon RockSample with a structured left-to-right policy."""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.core.distributions import DistFamily
from src.core.errors import ArgumentError
from src.core.trace import Address, EpisodeContext, Trace

logger = logging.getLogger(__name__)

Position = Tuple[int, int]
Anchor = Union[str, int]
MoveDecision = Callable[[EpisodeContext, Anchor, int, str], bool]

GOOD_ROCK = 10.0
BAD_ROCK = -10.0
EXIT_REWARD = 10.0
MOVE_COST = 1.0
GOOD_PROB = 0.5
MOVE_PRIOR = (1.0, 1.0)
START = "start"
EXIT = "exit"


@dataclass(frozen=True)
class RockField:
    """
    N x N field with M rocks; the rover starts in the middle of the left edge.

    Args:
        size: Grid size N
        rocks: Distinct (x, y) rock positions inside the grid
        d0: Sensor half-efficiency distance (defaults to N / 2)
        qualities: Optional fixed rock qualities (True = good)
    """

    size: int
    rocks: Tuple[Position, ...]
    d0: Optional[float] = None
    qualities: Optional[Tuple[bool, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "rocks", tuple((int(x), int(y)) for x, y in self.rocks))
        if self.d0 is None:
            object.__setattr__(self, "d0", self.size / 2.0)
        if self.size < 1:
            raise ArgumentError(f"Grid size must be positive, got {self.size}")
        if not self.rocks:
            raise ArgumentError("A field needs at least one rock")
        if len(set(self.rocks)) != len(self.rocks):
            raise ArgumentError("Rock positions must be distinct")
        for x, y in self.rocks:
            if not (0 <= x < self.size and 0 <= y < self.size):
                raise ArgumentError(f"Rock ({x}, {y}) outside the {self.size}x{self.size} grid")
        if not self.d0 > 0:
            raise ArgumentError(f"d0 must be positive, got {self.d0}")
        if self.qualities is not None and len(self.qualities) != len(self.rocks):
            raise ArgumentError("One quality per rock required")

    @property
    def start(self) -> Position:
        return (0, self.size // 2)

    @property
    def n_rocks(self) -> int:
        return len(self.rocks)

    def position(self, anchor: Anchor) -> Position:
        return self.start if anchor == START else self.rocks[anchor]


def euclidean(a: Position, b: Position) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def manhattan(a: Position, b: Position) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def sensor_accuracy(field: RockField, src: Position, rock: int) -> float:
    """Probability of a correct reading: 0.5 + 0.5 * 2^(-dist / d0)."""
    return 0.5 + 0.5 * 2.0 ** (-euclidean(src, field.rocks[rock]) / field.d0)


def reading_label(good: bool) -> str:
    return "good" if good else "bad"


def sense(field: RockField, src: Position, rock: int, good: bool, ctx: EpisodeContext,
          address: Optional[Address] = None) -> str:
    """
    Noisy remote reading of a rock's quality.

    The reading is correct with probability `sensor_accuracy`; the draw is
    traced as fixed-family noise.

    Returns:
        'good' or 'bad'
    """
    if not 0 <= rock < field.n_rocks:
        raise ArgumentError(f"Unknown rock {rock}")
    address = address or ctx.next_address("sense", rock)
    correct = ctx.flip(address, sensor_accuracy(field, src, rock))
    return reading_label(good if correct else not good)


def learned_move(ctx: EpisodeContext, anchor: Anchor, rock: int, reading: str) -> bool:
    """Move with probability theta ~ Beta at ("move", anchor, rock, reading)."""
    theta = ctx.sample(Address.of("move", anchor, rock, reading), DistFamily.beta(), MOVE_PRIOR)
    return ctx.flip(Address.of("go", anchor, rock), theta)


def always_move(ctx: EpisodeContext, anchor: Anchor, rock: int, reading: str) -> bool:
    return True


def always_discard(ctx: EpisodeContext, anchor: Anchor, rock: int, reading: str) -> bool:
    return False


MOVE_POLICIES: Dict[str, MoveDecision] = {
    "learned": learned_move,
    "always_move": always_move,
    "always_discard": always_discard,
}


def structured_agent(field: RockField, qualities: Sequence[bool], ctx: EpisodeContext,
                     decide: MoveDecision = learned_move) -> float:
    """
    Visit rocks left to right, then exit at the right edge.

    From the current anchor the agent considers the remaining rocks (not yet
    visited or discarded, x not left of the rover) by increasing distance. It
    senses each, then decides to move there or to discard it for good. At a
    rock it knows the quality exactly and samples only good rocks. When no
    candidate is left it leaves the field eastwards.

    Args:
        field: Rock field
        qualities: Hidden quality of every rock
        ctx: Episode context
        decide: Move decision, called as decide(ctx, anchor, rock, reading)

    Returns:
        Episode reward
    """
    anchor: Anchor = START
    pos = field.start
    closed = set()
    anchors: List[Anchor] = [START]
    good_sampled = bad_sampled = steps = 0

    while True:
        remaining = [r for r in range(field.n_rocks)
                     if r not in closed and field.rocks[r][0] >= pos[0]]
        if not remaining:
            break
        remaining.sort(key=lambda r: (euclidean(pos, field.rocks[r]), r))
        moved = False
        for rock in remaining:
            ctx.tick()
            reading = sense(field, pos, rock, qualities[rock], ctx,
                            Address.of("sense", anchor, rock))
            closed.add(rock)
            if decide(ctx, anchor, rock, reading):
                steps += manhattan(pos, field.rocks[rock])
                anchor, pos = rock, field.rocks[rock]
                anchors.append(rock)
                if qualities[rock]:
                    good_sampled += 1
                moved = True
                break
        if not moved:
            break

    ctx.tick()
    steps += field.size - pos[0]
    anchors.append(EXIT)
    reward = GOOD_ROCK * good_sampled + BAD_ROCK * bad_sampled - MOVE_COST * steps + EXIT_REWARD
    ctx.annotate(anchors=anchors, good_sampled=good_sampled, bad_sampled=bad_sampled,
                 steps=steps, exited=True)
    return reward


def make_field(size: int, n_rocks: int, seed: int, d0: Optional[float] = None) -> RockField:
    """
    Random field: rock cells drawn without replacement, each rock good w.p. 0.5.

    Args:
        size: Grid size N
        n_rocks: Number of rocks M <= N^2
        seed: Generator seed
        d0: Sensor half-efficiency distance (N / 2 by default)

    Returns:
        RockField with fixed qualities
    """
    if size < 1 or n_rocks < 1:
        raise ArgumentError(f"Need N >= 1 and M >= 1, got N={size}, M={n_rocks}")
    if n_rocks > size * size:
        raise ArgumentError(f"Cannot place {n_rocks} rocks on a {size}x{size} grid")
    rng = np.random.default_rng(seed)
    cells = rng.choice(size * size, size=n_rocks, replace=False)
    rocks = tuple((int(c % size), int(c // size)) for c in cells)
    qualities = tuple(bool(q) for q in rng.random(n_rocks) < GOOD_PROB)
    return RockField(size, rocks, d0, qualities)


class RockWorld:
    """
    World simulator drawing rock qualities.

    Args:
        field: Rock field
        fixed_qualities: Replay the field's own qualities instead of resampling
    """

    def __init__(self, field: RockField, fixed_qualities: bool = False):
        if fixed_qualities and field.qualities is None:
            raise ArgumentError("Field has no fixed qualities")
        self.field = field
        self.fixed_qualities = fixed_qualities
        self.horizon = field.n_rocks + 1

    def sample(self, rng: np.random.Generator) -> Tuple[bool, ...]:
        if self.fixed_qualities:
            return self.field.qualities
        return tuple(bool(q) for q in rng.random(self.field.n_rocks) < GOOD_PROB)


class RockProgram:
    """Structured RockSample agent with a named move-decision policy."""

    def __init__(self, field: RockField, policy: str = "learned"):
        if policy not in MOVE_POLICIES:
            raise ArgumentError(f"Unknown RockSample policy {policy!r}")
        self.field = field
        self.policy = policy

    def __call__(self, ctx: EpisodeContext, qualities: Tuple[bool, ...]) -> float:
        return structured_agent(self.field, qualities, ctx, MOVE_POLICIES[self.policy])


def transition_frequencies(traces: Sequence[Trace]) -> pd.DataFrame:
    """
    Anchor-to-anchor transition counts (rock ids, 'start' and 'exit').

    Returns:
        DataFrame with columns from, to, transitions, frequency (transitions
        per episode)
    """
    counts: Dict[Tuple[str, str], int] = {}
    for trace in traces:
        anchors = [str(a) for a in trace.info.get("anchors", [])]
        for move in zip(anchors[:-1], anchors[1:]):
            counts[move] = counts.get(move, 0) + 1
    n = max(len(traces), 1)
    rows = [
        {"from": a, "to": b, "transitions": c, "frequency": c / n}
        for (a, b), c in sorted(counts.items())
    ]
    return pd.DataFrame(rows, columns=["from", "to", "transitions", "frequency"])
