"""Skeleton graph: loading, hop distances and the normalised adjacency factor."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .tensor import Tensor


class GraphError(ValueError):
    pass


class GraphParseError(GraphError):
    pass


class NodeRangeError(GraphError):
    pass


class SelfLoopError(GraphError):
    pass


class DuplicateEdgeError(GraphError):
    pass


class DisconnectedGraphError(GraphError):
    pass


@dataclass(frozen=True)
class SkeletonGraph:
    node_count: int
    edges: tuple
    node_names: tuple = ()
    reduction_map: tuple = ()
    mirror_pairs: tuple = field(default=())

    def __post_init__(self):
        n = self.node_count
        if n < 1:
            raise GraphError(f"node_count must be positive, got {n}")
        seen = set()
        for a, b in self.edges:
            for v in (a, b):
                if not 0 <= v < n:
                    raise NodeRangeError(f"edge ({a}, {b}) references node {v} outside [0, {n})")
            if a == b:
                raise SelfLoopError(f"self-loop on node {a}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise DuplicateEdgeError(f"duplicate edge ({a}, {b})")
            seen.add(key)
        if self.node_names and len(self.node_names) != n:
            raise GraphError(f"{len(self.node_names)} node names for {n} nodes")
        if self.reduction_map and len(self.reduction_map) != n:
            raise GraphError(f"reduction_map has {len(self.reduction_map)} entries for {n} nodes")
        for a, b in self.mirror_pairs:
            if not (0 <= a < n and 0 <= b < n):
                raise NodeRangeError(f"mirror pair ({a}, {b}) outside [0, {n})")
        _bfs_all(self)  # connectivity check

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.node_count, self.node_count))
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a

    def mirror_permutation(self) -> np.ndarray:
        """Node permutation implementing the left/right swap table."""
        perm = np.arange(self.node_count)
        for a, b in self.mirror_pairs:
            perm[a], perm[b] = b, a
        return perm


def _neighbours(graph: SkeletonGraph):
    nbrs = [[] for _ in range(graph.node_count)]
    for a, b in graph.edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    return nbrs


def _bfs_all(graph: SkeletonGraph) -> np.ndarray:
    n = graph.node_count
    nbrs = _neighbours(graph)
    psi = np.full((n, n), -1, dtype=np.int64)
    for src in range(n):
        psi[src, src] = 0
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in nbrs[u]:
                if psi[src, v] < 0:
                    psi[src, v] = psi[src, u] + 1
                    queue.append(v)
        missing = np.flatnonzero(psi[src] < 0)
        if missing.size:
            raise DisconnectedGraphError(f"graph is disconnected: node {missing[0]} unreachable from node {src}")
    return psi


def shortest_path_matrix(graph: SkeletonGraph) -> np.ndarray:
    """Hop distances between all node pairs (one BFS per node)."""
    return _bfs_all(graph)


def normalized_adjacency_factor(graph: SkeletonGraph) -> np.ndarray:
    """``D^-1/2 (A + I) D^-1/2`` with D the degree matrix of ``A + I``."""
    a_hat = graph.adjacency() + np.eye(graph.node_count)
    inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return inv_sqrt[:, None] * a_hat * inv_sqrt[None, :]


def init_decoupled_factor(factor: np.ndarray, groups: int) -> Tensor:
    """Learnable ``N x N x groups`` copy of the factor, one identical slice per group."""
    if groups < 1:
        raise ValueError(f"groups must be >= 1, got {groups}")
    stacked = np.repeat(np.asarray(factor, dtype=np.float64)[:, :, None], groups, axis=2)
    return Tensor(stacked, requires_grad=True)


# ---------------------------------------------------------------- file format


def parse_graph(text: str) -> SkeletonGraph:
    node_count = None
    names, sources, edges, mirrors = {}, {}, [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind, args = parts[0], parts[1:]
        try:
            if kind == "nodes" and len(args) == 1:
                node_count = int(args[0])
            elif kind == "node" and len(args) == 3:
                idx = int(args[0])
                names[idx], sources[idx] = args[1], int(args[2])
            elif kind == "edge" and len(args) == 2:
                edges.append((int(args[0]), int(args[1])))
            elif kind == "mirror" and len(args) == 2:
                mirrors.append((int(args[0]), int(args[1])))
            else:
                raise GraphParseError(f"line {lineno}: cannot parse {raw.strip()!r}")
        except ValueError as exc:
            if isinstance(exc, GraphError):
                raise
            raise GraphParseError(f"line {lineno}: bad integer in {raw.strip()!r}") from None
    if node_count is None:
        raise GraphParseError("missing 'nodes <N>' statement")
    if names and sorted(names) != list(range(node_count)):
        raise GraphParseError(f"node statements must cover ids 0..{node_count - 1} exactly once")
    return SkeletonGraph(
        node_count=node_count,
        edges=tuple(edges),
        node_names=tuple(names[i] for i in range(node_count)) if names else (),
        reduction_map=tuple(sources[i] for i in range(node_count)) if sources else (),
        mirror_pairs=tuple(mirrors),
    )


def format_graph(graph: SkeletonGraph) -> str:
    lines = [f"nodes {graph.node_count}"]
    if graph.node_names:
        for i, name in enumerate(graph.node_names):
            src = graph.reduction_map[i] if graph.reduction_map else i
            lines.append(f"node {i} {name} {src}")
    lines += [f"edge {a} {b}" for a, b in graph.edges]
    lines += [f"mirror {a} {b}" for a, b in graph.mirror_pairs]
    return "\n".join(lines) + "\n"


def load_graph(path) -> SkeletonGraph:
    return parse_graph(Path(path).read_text())


def save_graph(graph: SkeletonGraph, path):
    Path(path).write_text(format_graph(graph))


def builtin_slgt27() -> SkeletonGraph:
    text = resources.files("slgtformer").joinpath("graphs/slgt27.graph").read_text()
    return parse_graph(text)


def path_graph(n: int) -> SkeletonGraph:
    return SkeletonGraph(node_count=n, edges=tuple((i, i + 1) for i in range(n - 1)))
