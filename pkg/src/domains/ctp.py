"""Canadian Traveler Problem: instances, weathers, DFS agents and the optimistic baseline."""

import heapq
import logging
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd

from src.core.distributions import DistFamily
from src.core.errors import ArgumentError, GenerationError, TraceError
from src.core.trace import Address, EpisodeContext, Trace

logger = logging.getLogger(__name__)

Edge = Tuple[int, int]
Chooser = Callable[[EpisodeContext, int, List[int]], int]

MAX_GENERATION_ATTEMPTS = 1000
MAX_WEATHER_REJECTIONS = 10 ** 6
EDGE_PRIOR = (1.0, 1.0)
# Learning-phase settings the edge policy trains with unless configured otherwise.
# 200 steps at this rate cover the step-size sum of 1000 steps at rho0 = 0.1.
TRAIN_SETTINGS = {"rho0": 0.3}


def edge_key(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class CtpInstance:
    """
    Graph with known edge distances and open probabilities.

    Args:
        coords: (x, y) position of every node
        edges: Undirected edges as (u, v) with u < v
        distances: Length of every edge, > 0
        open_probs: Probability in (0, 1] that each edge is open
        start: Start node
        goal: Goal node
    """

    coords: Tuple[Tuple[float, float], ...]
    edges: Tuple[Edge, ...]
    distances: Tuple[float, ...]
    open_probs: Tuple[float, ...]
    start: int
    goal: int

    def __post_init__(self):
        n = len(self.coords)
        object.__setattr__(self, "edges", tuple(edge_key(int(u), int(v)) for u, v in self.edges))
        if self.start == self.goal:
            raise ArgumentError("Start and goal must differ")
        if not (0 <= self.start < n and 0 <= self.goal < n):
            raise ArgumentError(f"Start/goal outside 0..{n - 1}")
        if not (len(self.edges) == len(self.distances) == len(self.open_probs)):
            raise ArgumentError("edges, distances and open_probs differ in length")
        if len(set(self.edges)) != len(self.edges):
            raise ArgumentError("Duplicate edges")
        for (u, v), d, p in zip(self.edges, self.distances, self.open_probs):
            if u == v or not (0 <= u < n and 0 <= v < n):
                raise ArgumentError(f"Invalid edge ({u}, {v})")
            if not d > 0:
                raise ArgumentError(f"Edge ({u}, {v}) has non-positive distance {d}")
            if not 0 < p <= 1:
                raise ArgumentError(f"Edge ({u}, {v}) open probability {p} outside (0, 1]")

    @property
    def n_nodes(self) -> int:
        return len(self.coords)

    @cached_property
    def edge_index(self) -> Dict[Edge, int]:
        return {e: i for i, e in enumerate(self.edges)}

    @cached_property
    def adjacency(self) -> Dict[int, List[Tuple[int, int]]]:
        """node -> sorted list of (neighbor, edge index)."""
        adj: Dict[int, List[Tuple[int, int]]] = {u: [] for u in range(self.n_nodes)}
        for i, (u, v) in enumerate(self.edges):
            adj[u].append((v, i))
            adj[v].append((u, i))
        for u in adj:
            adj[u].sort()
        return adj

    def distance(self, u: int, v: int) -> float:
        return self.distances[self.edge_index[edge_key(u, v)]]

    def graph(self, open_mask: Optional[Sequence[bool]] = None) -> nx.Graph:
        """networkx view restricted to the open edges (all edges by default)."""
        g = nx.Graph()
        g.add_nodes_from(range(self.n_nodes))
        for i, (u, v) in enumerate(self.edges):
            if open_mask is None or open_mask[i]:
                g.add_edge(u, v, weight=self.distances[i])
        return g

    @cached_property
    def full_graph(self) -> nx.Graph:
        return self.graph()

    def is_connected(self) -> bool:
        return nx.is_connected(self.full_graph)


@dataclass(frozen=True, eq=False)
class Weather:
    """Open/blocked status of every edge in one episode."""

    open_mask: Tuple[bool, ...]

    def blocked_edges(self, instance: CtpInstance) -> frozenset:
        return frozenset(e for e, is_open in zip(instance.edges, self.open_mask) if not is_open)


@dataclass(frozen=True)
class CtpTrajectory:
    """Visited nodes, including backtracking moves, and the distance travelled."""

    nodes: Tuple[int, ...]
    distance: float

    def moves(self) -> List[Edge]:
        return list(zip(self.nodes[:-1], self.nodes[1:]))


def generate_instance(n_nodes: int, radius: float, open_prob: float, seed: int) -> CtpInstance:
    """
    Random geometric graph in the unit square.

    Nodes within `radius` of each other are joined by an edge of Euclidean
    length; the layout is redrawn until the graph is connected. The start is
    the leftmost node and the goal the rightmost.

    Args:
        n_nodes: Number of nodes, >= 2
        radius: Connection radius, > 0
        open_prob: Open probability assigned to every edge, in (0, 1]
        seed: Generator seed

    Returns:
        CtpInstance
    """
    if n_nodes < 2:
        raise ArgumentError(f"n_nodes must be >= 2, got {n_nodes}")
    if not radius > 0:
        raise ArgumentError(f"radius must be positive, got {radius}")
    if not 0 < open_prob <= 1:
        raise ArgumentError(f"open_prob must lie in (0, 1], got {open_prob}")

    rng = np.random.default_rng(seed)
    for attempt in range(MAX_GENERATION_ATTEMPTS):
        points = rng.random((n_nodes, 2))
        edges, distances = [], []
        for u in range(n_nodes):
            for v in range(u + 1, n_nodes):
                d = float(np.hypot(*(points[u] - points[v])))
                if d <= radius:
                    edges.append((u, v))
                    distances.append(d)
        start, goal = int(np.argmin(points[:, 0])), int(np.argmax(points[:, 0]))
        if not edges or start == goal:
            continue
        instance = CtpInstance(
            coords=tuple((float(x), float(y)) for x, y in points),
            edges=tuple(edges),
            distances=tuple(distances),
            open_probs=(float(open_prob),) * len(edges),
            start=start,
            goal=goal,
        )
        if instance.is_connected():
            logger.debug(f"Generated {n_nodes}-node instance after {attempt + 1} attempts")
            return instance
    raise GenerationError(
        f"No connected {n_nodes}-node graph with radius {radius} in "
        f"{MAX_GENERATION_ATTEMPTS} attempts (radius too small)"
    )


def with_open_prob(instance: CtpInstance, open_prob: float) -> CtpInstance:
    """Same layout with every edge open with probability `open_prob`."""
    return replace(instance, open_probs=(float(open_prob),) * len(instance.edges))


def sample_weather(instance: CtpInstance, rng: np.random.Generator,
                   max_rejections: int = MAX_WEATHER_REJECTIONS) -> Weather:
    """
    Draw edge statuses independently, conditioned on the goal being reachable.

    Args:
        instance: CTP instance
        rng: Random stream
        max_rejections: Give up after this many disconnected draws

    Returns:
        Weather in which the goal is reachable from the start
    """
    probs = np.asarray(instance.open_probs)
    for _ in range(max_rejections):
        mask = tuple(bool(x) for x in rng.random(len(probs)) < probs)
        blocked = [e for e, is_open in zip(instance.edges, mask) if not is_open]
        graph = nx.restricted_view(instance.full_graph, [], blocked) if blocked else instance.full_graph
        if nx.has_path(graph, instance.start, instance.goal):
            return Weather(mask)
    raise GenerationError(f"No connected weather in {max_rejections} draws")


def shortest_path(instance: CtpInstance, blocked: Iterable[Edge], src: int,
                  dst: int) -> Tuple[Optional[List[int]], float]:
    """
    Dijkstra over the edges not in `blocked`, ties broken by node index.

    Args:
        instance: CTP instance
        blocked: Edges to ignore, as (u, v) pairs
        src: Source node
        dst: Destination node

    Returns:
        (path from src to dst, length), or (None, inf) when dst is unreachable
    """
    n = instance.n_nodes
    if not (0 <= src < n and 0 <= dst < n):
        raise ArgumentError(f"Nodes ({src}, {dst}) outside 0..{n - 1}")
    blocked = {edge_key(u, v) for u, v in blocked}

    dist = {src: 0.0}
    prev: Dict[int, int] = {}
    done = set()
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == dst:
            break
        for v, i in instance.adjacency[u]:
            if v in done or instance.edges[i] in blocked:
                continue
            nd = d + instance.distances[i]
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))

    if dst not in done:
        return None, math.inf
    path = [dst]
    while path[-1] != src:
        path.append(prev[path[-1]])
    return path[::-1], dist[dst]


def edge_policy_choose(ctx: EpisodeContext, u: int, candidates: List[int]) -> int:
    """
    Choose among candidates in proportion to sampled edge preferences Q(u, v).

    Each Q(u, v) ~ Beta(a_uv, b_uv) is drawn once per episode, the first time
    the agent considers the edge.
    """
    if not candidates:
        raise ArgumentError(f"No candidates at node {u}")
    prefs = [ctx.memo(Address.of("Q", u, v), DistFamily.beta(), EDGE_PRIOR) for v in candidates]
    return candidates[ctx.choose(ctx.next_address("select", u), prefs)]


def random_policy_choose(ctx: EpisodeContext, u: int, candidates: List[int]) -> int:
    """Uniform choice among candidates."""
    if not candidates:
        raise ArgumentError(f"No candidates at node {u}")
    return candidates[ctx.choose(ctx.next_address("random", u), np.ones(len(candidates)))]


def dfs_agent(instance: CtpInstance, weather: Weather, policy: Chooser,
              ctx: EpisodeContext) -> CtpTrajectory:
    """
    Walk the graph depth-first, letting `policy` pick the next unvisited node.

    At each node the agent sees which incident edges are open. With no open
    unvisited neighbor it walks back to the node it came from.

    Args:
        instance: CTP instance
        weather: Edge statuses, goal reachable
        policy: Chooser called as policy(ctx, u, candidates)
        ctx: Episode context

    Returns:
        CtpTrajectory ending at the goal
    """
    u = instance.start
    visited = {u}
    stack: List[int] = []
    nodes = [u]
    distance = 0.0
    while u != instance.goal:
        ctx.tick()
        candidates = [
            v for v, i in instance.adjacency[u] if weather.open_mask[i] and v not in visited
        ]
        if candidates:
            v = policy(ctx, u, candidates)
            stack.append(u)
            visited.add(v)
        else:
            if not stack:
                raise TraceError("DFS exhausted the open graph without reaching the goal")
            v = stack.pop()
        distance += instance.distance(u, v)
        u = v
        nodes.append(u)
    return CtpTrajectory(tuple(nodes), distance)


def optimistic_agent(instance: CtpInstance, weather: Weather,
                     ctx: Optional[EpisodeContext] = None) -> CtpTrajectory:
    """
    Replanning agent that assumes every unobserved edge is open.

    At each node it records the blocked incident edges, plans the shortest
    path to the goal around every block seen so far and takes its first edge.
    """
    u = instance.start
    known_blocked = set()
    nodes = [u]
    distance = 0.0
    while u != instance.goal:
        if ctx is not None:
            ctx.tick()
        for _, i in instance.adjacency[u]:
            if not weather.open_mask[i]:
                known_blocked.add(instance.edges[i])
        path, _ = shortest_path(instance, known_blocked, u, instance.goal)
        if path is None:
            raise TraceError(f"Optimistic graph lost the goal at node {u}")
        v = path[1]
        distance += instance.distance(u, v)
        u = v
        nodes.append(u)
    return CtpTrajectory(tuple(nodes), distance)


class CtpWorld:
    """World simulator drawing a connected weather per episode."""

    def __init__(self, instance: CtpInstance):
        self.instance = instance
        self.horizon = 2 * instance.n_nodes

    def sample(self, rng: np.random.Generator) -> Weather:
        return sample_weather(self.instance, rng)


class CtpProgram:
    """
    Policy program for the CTP with reward equal to minus the distance travelled.

    Args:
        instance: CTP instance
        policy: 'edge' (learned preferences), 'random' or 'optimistic'
    """

    POLICIES = ("edge", "random", "optimistic")

    def __init__(self, instance: CtpInstance, policy: str = "edge"):
        if policy not in self.POLICIES:
            raise ArgumentError(f"Unknown CTP policy {policy!r}, expected one of {self.POLICIES}")
        self.instance = instance
        self.policy = policy

    def __call__(self, ctx: EpisodeContext, weather: Weather) -> float:
        if self.policy == "optimistic":
            trajectory = optimistic_agent(self.instance, weather, ctx)
        else:
            chooser = edge_policy_choose if self.policy == "edge" else random_policy_choose
            trajectory = dfs_agent(self.instance, weather, chooser, ctx)
        ctx.annotate(path=list(trajectory.nodes), distance=trajectory.distance)
        return -trajectory.distance


def edge_frequencies(traces: Sequence[Trace]) -> pd.DataFrame:
    """
    Directed edge traversal counts over evaluation episodes.

    Returns:
        DataFrame with columns u, v, traversals (all traversals, repeats
        included) and episodes (episodes traversing the edge at least once)
    """
    traversals: Dict[Edge, int] = {}
    episodes: Dict[Edge, int] = {}
    for trace in traces:
        path = trace.info.get("path", [])
        moves = list(zip(path[:-1], path[1:]))
        for move in moves:
            traversals[move] = traversals.get(move, 0) + 1
        for move in set(moves):
            episodes[move] = episodes.get(move, 0) + 1
    rows = [
        {"u": u, "v": v, "traversals": traversals[(u, v)], "episodes": episodes[(u, v)]}
        for u, v in sorted(traversals)
    ]
    return pd.DataFrame(rows, columns=["u", "v", "traversals", "episodes"])
