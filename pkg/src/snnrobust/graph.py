"""Watts-Strogatz graph generation, acyclic orientation, layering, and metrics.

Undirected graphs are generated from a ring lattice with random rewiring,
oriented into DAGs by directing every edge from its lower-indexed endpoint
to its higher-indexed one, and layered by the max-predecessor rule. Metric
computation (density, distances, centralities) runs on the undirected graph;
the directed density of the derived DAG is recorded alongside.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

GRAPH_SCHEMA_VERSION = 1


class GraphError(ValueError):
    """Invalid graph input or parameter."""


@dataclass(frozen=True)
class UndirectedGraph:
    """Simple undirected graph on vertices 0..vertex_count-1.

    Edges are stored as a frozenset of (u, v) tuples with u < v; no
    self-loops, no duplicates.
    """

    vertex_count: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        if self.vertex_count < 1:
            raise GraphError("vertex_count must be positive")
        for u, v in self.edges:
            if u == v:
                raise GraphError(f"self-loop at vertex {u}")
            if not (0 <= u < v < self.vertex_count):
                raise GraphError(f"edge ({u},{v}) out of range or not canonical")

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        """Symmetric binary adjacency matrix with zero diagonal."""
        a = np.zeros((self.vertex_count, self.vertex_count), dtype=np.int8)
        for u, v in self.edges:
            a[u, v] = 1
            a[v, u] = 1
        return a

    def neighbor_lists(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.vertex_count)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        for lst in adj:
            lst.sort()
        return adj

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.vertex_count, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg


def make_graph(vertex_count: int, edges: Iterable[tuple[int, int]]) -> UndirectedGraph:
    """Build an UndirectedGraph, canonicalizing edge tuples to u < v."""
    canon = set()
    for u, v in edges:
        if u == v:
            raise GraphError(f"self-loop at vertex {u}")
        canon.add((min(u, v), max(u, v)))
    return UndirectedGraph(vertex_count, frozenset(canon))


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph; every edge (u, v) satisfies u < v."""

    vertex_count: int
    directed_edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        if self.vertex_count < 1:
            raise GraphError("vertex_count must be positive")
        for u, v in self.directed_edges:
            if not (0 <= u < v < self.vertex_count):
                raise GraphError(f"directed edge ({u},{v}) must satisfy 0 <= u < v < n")

    @property
    def edge_count(self) -> int:
        return len(self.directed_edges)

    def predecessor_lists(self) -> list[list[int]]:
        preds: list[list[int]] = [[] for _ in range(self.vertex_count)]
        for u, v in self.directed_edges:
            preds[v].append(u)
        for lst in preds:
            lst.sort()
        return preds

    def successor_lists(self) -> list[list[int]]:
        succs: list[list[int]] = [[] for _ in range(self.vertex_count)]
        for u, v in self.directed_edges:
            succs[u].append(v)
        for lst in succs:
            lst.sort()
        return succs


@dataclass(frozen=True)
class LayeredDag:
    """A DAG with the max-predecessor layering.

    layer_index maps each vertex to its layer; layers is the corresponding
    ordered partition (vertex ids ascending within each layer). Sources are
    the in-degree-0 vertices (exactly layer 0), sinks the out-degree-0 ones.
    """

    dag: Dag
    layer_index: dict[int, int]
    layers: tuple[tuple[int, ...], ...]
    sources: tuple[int, ...]
    sinks: tuple[int, ...]

    @property
    def depth(self) -> int:
        return len(self.layers)


def generate_ws(size: int, nei: int, p: float, seed: int) -> UndirectedGraph:
    """Generate a Watts-Strogatz graph.

    Starts from a ring lattice where each vertex connects to its `nei`
    nearest neighbors on each side (degree 2*nei), then visits every lattice
    edge (u, u+k) and, with probability `p`, replaces its far endpoint with
    a uniformly chosen vertex that is neither u nor already adjacent to u.
    Rewiring preserves the edge count (size * nei) exactly.
    """
    if nei < 1:
        raise GraphError("nei must be >= 1")
    if size < 2 * nei + 1:
        raise GraphError(f"size must be >= 2*nei+1, got size={size}, nei={nei}")
    if not (0.0 <= p <= 1.0):
        raise GraphError(f"rewiring probability must be in [0,1], got {p}")

    rng = np.random.default_rng(seed)
    adj: list[set[int]] = [set() for _ in range(size)]
    for k in range(1, nei + 1):
        for u in range(size):
            v = (u + k) % size
            adj[u].add(v)
            adj[v].add(u)

    for k in range(1, nei + 1):
        for u in range(size):
            if rng.random() >= p:
                continue
            v = (u + k) % size
            if v not in adj[u]:
                # lattice slot already rewired away by an earlier own-edge pass
                continue
            if len(adj[u]) >= size - 1:
                continue
            forbidden = np.zeros(size, dtype=bool)
            forbidden[u] = True
            forbidden[list(adj[u])] = True
            candidates = np.flatnonzero(~forbidden)
            w = int(rng.choice(candidates))
            adj[u].discard(v)
            adj[v].discard(u)
            adj[u].add(w)
            adj[w].add(u)

    edges = frozenset((u, v) for u in range(size) for v in adj[u] if u < v)
    return UndirectedGraph(size, edges)


def to_dag(g: UndirectedGraph) -> Dag:
    """Orient every undirected edge {i, j} with i < j as the directed edge (i, j).

    Equivalent to keeping only the lower triangle of the adjacency matrix;
    the result is acyclic because every edge increases the vertex index.
    """
    return Dag(g.vertex_count, frozenset(g.edges))


def layer_dag(d: Dag) -> LayeredDag:
    """Assign each vertex the layer 1 + max(layer of predecessors).

    Vertices with in-degree zero get layer 0. A vertex is processed only
    once all its predecessors have been assigned; a cycle (impossible for a
    valid Dag, still guarded) raises GraphError.
    """
    n = d.vertex_count
    preds = d.predecessor_lists()
    succs = d.successor_lists()
    in_deg = [len(preds[v]) for v in range(n)]

    index: dict[int, int] = {}
    ready = deque(v for v in range(n) if in_deg[v] == 0)
    remaining = [len(preds[v]) for v in range(n)]
    while ready:
        v = ready.popleft()
        index[v] = 0 if not preds[v] else 1 + max(index[u] for u in preds[v])
        for w in succs[v]:
            remaining[w] -= 1
            if remaining[w] == 0:
                ready.append(w)
    if len(index) != n:
        raise GraphError("cycle detected: layering requires an acyclic graph")

    depth = max(index.values()) + 1
    layers_mut: list[list[int]] = [[] for _ in range(depth)]
    for v in range(n):
        layers_mut[index[v]].append(v)
    layers = tuple(tuple(sorted(layer)) for layer in layers_mut)
    sources = tuple(v for v in range(n) if in_deg[v] == 0)
    sinks = tuple(v for v in range(n) if not succs[v])
    return LayeredDag(dag=d, layer_index=index, layers=layers, sources=sources, sinks=sinks)


@dataclass
class GraphMetrics:
    """Graph-theoretic summary of an undirected graph.

    Path-based quantities (diameter, path lengths, eccentricity, betweenness,
    closeness) are computed on the largest connected component when the graph
    is disconnected; `disconnected` records that this happened. Densities and
    the degree distribution always refer to the whole graph.
    """

    vertex_count: int
    edge_count: int
    density_undirected: float
    density_directed: float
    diameter: int
    avg_path_length: float
    avg_eccentricity: float
    avg_betweenness: float
    avg_closeness: float
    degree_distribution: list[int] = field(default_factory=list)
    path_length_distribution: list[int] = field(default_factory=list)
    disconnected: bool = False

    def to_dict(self) -> dict:
        return {
            "vertex_count": self.vertex_count,
            "edge_count": self.edge_count,
            "density_undirected": self.density_undirected,
            "density_directed": self.density_directed,
            "diameter": self.diameter,
            "avg_path_length": self.avg_path_length,
            "avg_eccentricity": self.avg_eccentricity,
            "avg_betweenness": self.avg_betweenness,
            "avg_closeness": self.avg_closeness,
            "degree_distribution": list(self.degree_distribution),
            "path_length_distribution": list(self.path_length_distribution),
            "disconnected": self.disconnected,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GraphMetrics":
        return cls(**d)


def connected_components(g: UndirectedGraph) -> list[list[int]]:
    """Connected components as sorted vertex lists, largest first."""
    adj = g.neighbor_lists()
    seen = [False] * g.vertex_count
    comps: list[list[int]] = []
    for start in range(g.vertex_count):
        if seen[start]:
            continue
        comp = [start]
        seen[start] = True
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for w in adj[u]:
                if not seen[w]:
                    seen[w] = True
                    comp.append(w)
                    queue.append(w)
        comps.append(sorted(comp))
    comps.sort(key=lambda c: (-len(c), c[0]))
    return comps


def _bfs_distances(adj: list[list[int]], source: int, n: int) -> np.ndarray:
    dist = np.full(n, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        du = dist[u]
        for w in adj[u]:
            if dist[w] < 0:
                dist[w] = du + 1
                queue.append(w)
    return dist


def _brandes_betweenness(adj: list[list[int]], nodes: list[int]) -> dict[int, float]:
    """Unnormalized betweenness over ordered pairs (Brandes accumulation)."""
    bc = {v: 0.0 for v in nodes}
    for s in nodes:
        stack: list[int] = []
        preds: dict[int, list[int]] = {v: [] for v in nodes}
        sigma = {v: 0.0 for v in nodes}
        dist = {v: -1 for v in nodes}
        sigma[s] = 1.0
        dist[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            stack.append(u)
            for w in adj[u]:
                if dist[w] < 0:
                    dist[w] = dist[u] + 1
                    queue.append(w)
                if dist[w] == dist[u] + 1:
                    sigma[w] += sigma[u]
                    preds[w].append(u)
        delta = {v: 0.0 for v in nodes}
        while stack:
            w = stack.pop()
            for u in preds[w]:
                delta[u] += (sigma[u] / sigma[w]) * (1.0 + delta[w])
            if w != s:
                bc[w] += delta[w]
    return bc


def compute_metrics(g: UndirectedGraph) -> GraphMetrics:
    """Compute the full metric set for an undirected graph.

    Densities: undirected |E| / (n(n-1)/2); directed density of the derived
    DAG is half that (same edge set). Betweenness is normalized by
    (n-1)(n-2)/2 and closeness is (n-1) / sum of distances, with n the size
    of the component the metric is computed on.
    """
    n = g.vertex_count
    m = g.edge_count
    density_u = 0.0 if n < 2 else m / (n * (n - 1) / 2.0)
    density_d = density_u / 2.0

    degrees = g.degrees()
    max_deg = int(degrees.max()) if n > 0 else 0
    degree_hist = np.bincount(degrees, minlength=max_deg + 1).tolist()

    comps = connected_components(g)
    disconnected = len(comps) > 1
    comp = comps[0]
    nc = len(comp)
    adj = g.neighbor_lists()

    if nc == 1:
        return GraphMetrics(
            vertex_count=n,
            edge_count=m,
            density_undirected=density_u,
            density_directed=density_d,
            diameter=0,
            avg_path_length=0.0,
            avg_eccentricity=0.0,
            avg_betweenness=0.0,
            avg_closeness=0.0,
            degree_distribution=degree_hist,
            path_length_distribution=[0],
            disconnected=disconnected,
        )

    ecc: dict[int, int] = {}
    closeness: dict[int, float] = {}
    path_sum = 0
    path_hist_counts: dict[int, int] = {}
    for v in comp:
        dist = _bfs_distances(adj, v, n)
        dcomp = dist[comp]
        ecc[v] = int(dcomp.max())
        closeness[v] = (nc - 1) / float(dcomp.sum())
        path_sum += int(dcomp.sum())
        for d_val, cnt in zip(*np.unique(dcomp[dcomp > 0], return_counts=True)):
            path_hist_counts[int(d_val)] = path_hist_counts.get(int(d_val), 0) + int(cnt)

    diameter = max(ecc.values())
    # each unordered pair was counted twice in the per-source scan
    avg_path_length = path_sum / float(nc * (nc - 1))
    path_hist = [0] * (diameter + 1)
    for d_val, cnt in path_hist_counts.items():
        path_hist[d_val] = cnt // 2

    # neighbors of a component vertex stay inside the component
    raw_bc = _brandes_betweenness(adj, comp)
    if nc > 2:
        norm = (nc - 1) * (nc - 2) / 2.0
        bc = {v: (raw_bc[v] / 2.0) / norm for v in comp}
    else:
        bc = {v: 0.0 for v in comp}

    return GraphMetrics(
        vertex_count=n,
        edge_count=m,
        density_undirected=density_u,
        density_directed=density_d,
        diameter=diameter,
        avg_path_length=avg_path_length,
        avg_eccentricity=float(np.mean([ecc[v] for v in comp])),
        avg_betweenness=float(np.mean([bc[v] for v in comp])),
        avg_closeness=float(np.mean([closeness[v] for v in comp])),
        degree_distribution=degree_hist,
        path_length_distribution=path_hist,
        disconnected=disconnected,
    )


def graph_to_json(
    g: UndirectedGraph,
    generator: dict | None = None,
    metrics: GraphMetrics | None = None,
) -> str:
    """Serialize a graph (plus optional generator params and metrics) to JSON."""
    doc = {
        "schema_version": GRAPH_SCHEMA_VERSION,
        "generator": generator,
        "vertex_count": g.vertex_count,
        "edges": sorted([list(e) for e in g.edges]),
        "metrics": metrics.to_dict() if metrics is not None else None,
        "disconnected_flag": metrics.disconnected if metrics is not None else None,
    }
    return json.dumps(doc, sort_keys=True)


def graph_from_json(text: str) -> tuple[UndirectedGraph, dict | None, GraphMetrics | None]:
    doc = json.loads(text)
    if doc.get("schema_version") != GRAPH_SCHEMA_VERSION:
        raise GraphError(f"unsupported graph schema version {doc.get('schema_version')!r}")
    g = make_graph(doc["vertex_count"], [tuple(e) for e in doc["edges"]])
    metrics = GraphMetrics.from_dict(doc["metrics"]) if doc.get("metrics") else None
    return g, doc.get("generator"), metrics
