"""Traffic graph over activity-flow nodes and its propagation operators."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .flowkit import FEATURES, ActivityFlow, BasicFlow, Label, endpoint_sort_key


class GraphError(ValueError):
    pass


@dataclass(eq=False)
class TrafficGraph:
    nodes: list
    X: np.ndarray
    A: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray = None
    test_mask: np.ndarray = None
    index: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.nodes)
        if self.train_mask is None:
            self.train_mask = np.zeros(n, dtype=bool)
        if self.test_mask is None:
            self.test_mask = np.zeros(n, dtype=bool)
        if not self.index:
            self.index = {f.source: i for i, f in enumerate(self.nodes)}
        if np.any(self.train_mask & self.test_mask):
            raise GraphError("train and test masks overlap")

    @property
    def n(self):
        return len(self.nodes)

    def binary_labels(self):
        return (self.labels >= int(Label.DDoS)).astype(np.int64)

    def subgraph(self, idx):
        """Induced subgraph on ``idx`` (sorted); edges to other nodes are dropped."""
        idx = np.asarray(sorted(idx), dtype=np.int64)
        return TrafficGraph(
            [self.nodes[i] for i in idx],
            self.X[idx],
            self.A[np.ix_(idx, idx)],
            self.labels[idx],
            self.train_mask[idx],
            self.test_mask[idx],
        )


@dataclass(frozen=True)
class Hypergraph:
    n: int
    hyperedges: tuple

    def __post_init__(self):
        for e in self.hyperedges:
            if len(e) < 2:
                raise GraphError(f"hyperedge {e} has fewer than 2 nodes")
            if max(e) >= self.n or min(e) < 0:
                raise GraphError(f"hyperedge {e} references a node outside 0..{self.n - 1}")


def build_graph(flows: Sequence[ActivityFlow], basic: Sequence[BasicFlow]) -> TrafficGraph:
    """Undirected 0/1 adjacency between endpoints that exchanged at least one flow.

    Nodes are ordered by (ip, port); every basic-flow endpoint must be a node.
    """
    nodes = sorted(flows, key=lambda f: endpoint_sort_key(f.source))
    index = {}
    for i, f in enumerate(nodes):
        if f.source in index:
            raise GraphError(f"duplicate node {f.source[0]}:{f.source[1]}")
        index[f.source] = i
    n = len(nodes)
    A = np.zeros((n, n))
    for f in basic:
        for end in (f.key.source, f.key.destination):
            if end not in index:
                raise GraphError(f"dangling endpoint {end[0]}:{end[1]} has no node")
        i, j = index[f.key.source], index[f.key.destination]
        if i != j:
            A[i, j] = A[j, i] = 1.0
    X = np.stack([f.feature_vector for f in nodes]) if n else np.zeros((0, len(FEATURES)))
    labels = np.array([int(f.label) for f in nodes], dtype=np.int64)
    return TrafficGraph(nodes, X.astype(np.float64), A, labels, index=index)


def normalized_adjacency(A) -> np.ndarray:
    """Renormalized operator D^-1/2 (A + I) D^-1/2, D the degree matrix of A + I."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise GraphError(f"adjacency must be square, got shape {A.shape}")
    if not np.array_equal(A, A.T):
        raise GraphError("adjacency is not symmetric")
    if np.any(A < 0):
        raise GraphError("adjacency has negative entries")
    At = A + np.eye(len(A))
    d = 1.0 / np.sqrt(At.sum(axis=1))
    return At * d[:, None] * d[None, :]


def build_hypergraph(flows, basic, grouping="ByDestination") -> Hypergraph:
    """One hyperedge per destination endpoint: the endpoint plus every source sending to it."""
    if grouping != "ByDestination":
        raise ValueError(f"unknown hyperedge grouping {grouping!r}")
    if isinstance(flows, TrafficGraph):
        index = flows.index
        n = flows.n
    else:
        nodes = sorted(flows, key=lambda f: endpoint_sort_key(f.source))
        index = {f.source: i for i, f in enumerate(nodes)}
        n = len(nodes)
    members: dict[int, set] = {}
    for f in basic:
        d = index[f.key.destination]
        members.setdefault(d, {d}).add(index[f.key.source])
    edges = tuple(tuple(sorted(members[d])) for d in sorted(members) if len(members[d]) >= 2)
    return Hypergraph(n, edges)


def _disparate_pair(X, e):
    # row-major scan with strict improvement keeps the lexicographically
    # smallest (u, v) among ties
    sub = X[list(e)]
    best, pair = -1.0, (e[0], e[1])
    for i in range(len(e) - 1):
        diff = sub[i + 1:] - sub[i]
        dist = np.sum(diff * diff, axis=1)
        k = int(np.argmax(dist))
        if dist[k] > best:
            best, pair = dist[k], (e[i], e[i + 1 + k])
    return pair


def hypergraph_expand(h: Hypergraph, X) -> np.ndarray:
    """Approximate each hyperedge by its most distant pair plus mediator edges.

    For hyperedge e with most distant pair (u, v), edge (u, v) and the edges
    joining u and v to every other member are added with weight 1/(2|e|-3);
    weights sum over hyperedges.
    """
    X = np.asarray(X, dtype=np.float64)
    A = np.zeros((h.n, h.n))
    for e in h.hyperedges:
        e = tuple(sorted(e))
        u, v = _disparate_pair(X, e)
        w = 1.0 / (2 * len(e) - 3)
        A[u, v] += w
        A[v, u] += w
        for m in e:
            if m in (u, v):
                continue
            for end in (u, v):
                A[end, m] += w
                A[m, end] += w
    return A


def write_graph_dump(graph: TrafficGraph, edge_path, node_path):
    """Edge list ``i j weight`` (i < j) and a node table CSV."""
    n = graph.n
    with open(edge_path, "w", encoding="utf-8") as fh:
        for i in range(n):
            for j in np.flatnonzero(graph.A[i, i + 1:]) + i + 1:
                fh.write(f"{i} {j} {float(graph.A[i, j])!r}\n")
    with open(node_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "src_ip", "src_port", "label"] + list(FEATURES))
        for i, f in enumerate(graph.nodes):
            w.writerow([i, f.source[0], f.source[1], f.label.name] + [repr(float(v)) for v in graph.X[i]])
