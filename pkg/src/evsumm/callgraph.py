"""Dynamic call graphs, PageRank, context-block selection and dummy methods."""
from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field

import numpy as np

from ._accel import USE_NUMBA, njit
from .tokenizer import TokenSequence, tokenize

DAMPING = 0.85
TOL = 1e-10
MAX_ITER = 1000


class GraphError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"pagerank did not converge after {iterations} iterations (residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class Node:
    id: int
    label: str
    kind: str = "app"
    source_ref: str | None = None


@dataclass
class CallGraph:
    nodes: dict[int, Node]
    edges: list[tuple[int, int]]
    self_loops: set[int] = field(default_factory=set)

    def __post_init__(self):
        seen = set()
        for edge in self.edges:
            a, b = edge
            if a not in self.nodes or b not in self.nodes:
                raise GraphError(f"edge {list(edge)} references an unknown node")
            if a == b:
                raise GraphError(f"self-loop on node {a} must be recorded in self_loops")
            if edge in seen:
                raise GraphError(f"duplicate edge {list(edge)}")
            seen.add(edge)

    @property
    def node_ids(self) -> list[int]:
        return sorted(self.nodes)

    def out_degree(self, node_id: int) -> int:
        return sum(1 for a, _ in self.edges if a == node_id)

    def predecessors(self, node_id: int) -> list[int]:
        if node_id not in self.nodes:
            raise GraphError(f"unknown node {node_id}")
        return sorted({a for a, b in self.edges if b == node_id})

    @classmethod
    def from_dict(cls, data: dict) -> "CallGraph":
        nodes: dict[int, Node] = {}
        for raw in data.get("nodes", []):
            nid = int(raw["id"])
            if nid in nodes:
                raise GraphError(f"duplicate node id {nid}")
            kind = raw.get("kind", "app")
            if kind not in ("app", "framework"):
                raise GraphError(f"node {nid}: kind must be 'app' or 'framework', got {kind!r}")
            nodes[nid] = Node(nid, str(raw.get("label", "")), kind, raw.get("source_ref"))
        edges, seen, loops = [], set(), set()
        for raw in data.get("edges", []):
            a, b = int(raw[0]), int(raw[1])
            for end in (a, b):
                if end not in nodes:
                    raise GraphError(f"edge [{a}, {b}] references unknown node {end}")
            if a == b:
                loops.add(a)
                continue
            if (a, b) not in seen:
                seen.add((a, b))
                edges.append((a, b))
        return cls(nodes, edges, loops)

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n.id, "label": n.label, "kind": n.kind, "source_ref": n.source_ref}
                      for n in (self.nodes[i] for i in self.node_ids)],
            "edges": [list(e) for e in self.edges],
        }


def parse_graph(path) -> CallGraph:
    with open(path, encoding="utf-8") as fh:
        return CallGraph.from_dict(json.load(fh))


@dataclass
class RankVector:
    ranks: dict[int, float]
    normalized: bool
    iterations: int = 0

    def __getitem__(self, node_id: int) -> float:
        return self.ranks[node_id]

    def normalize(self) -> "RankVector":
        total = sum(self.ranks.values())
        return RankVector({k: v / total for k, v in self.ranks.items()}, True, self.iterations)


@njit
def _pagerank_loops(src, dst, out_degree, n, damping, tol, max_iter):
    r = np.ones(n)
    nxt = np.empty(n)
    residual = np.inf
    it = 0
    while it < max_iter:
        for i in range(n):
            nxt[i] = 1.0 - damping
        for k in range(src.shape[0]):
            j = src[k]
            nxt[dst[k]] += damping * r[j] / out_degree[j]
        residual = 0.0
        for i in range(n):
            diff = abs(nxt[i] - r[i])
            if diff > residual:
                residual = diff
            r[i] = nxt[i]
        it += 1
        if residual <= tol:
            break
    return r, it, residual


def _pagerank_numpy(src, dst, out_degree, n, damping, tol, max_iter):
    r = np.ones(n)
    residual = np.inf
    it = 0
    safe_degree = np.where(out_degree > 0, out_degree, 1.0)
    while it < max_iter:
        share = r[src] / safe_degree[src]
        nxt = (1.0 - damping) + damping * np.bincount(dst, weights=share, minlength=n)
        residual = float(np.max(np.abs(nxt - r))) if n else 0.0
        r = nxt
        it += 1
        if residual <= tol:
            break
    return r, it, residual


pagerank_kernel = _pagerank_loops if USE_NUMBA else _pagerank_numpy
# below this many edges the numpy path wins once numba's load/compile cost is counted
NUMBA_MIN_EDGES = 5000


def pagerank(graph: CallGraph, damping: float = DAMPING, tol: float = TOL, max_iter: int = MAX_ITER,
             normalize: bool = True, kernel=None) -> RankVector:
    """Iterate ``r_i <- (1 - d) + d * sum_{j -> i} r_j / outdeg(j)`` from r = 1.

    Nodes without outgoing edges pass nothing on.  Convergence is declared
    when the largest per-node change is at most ``tol``.
    """
    if not graph.nodes:
        raise GraphError("pagerank of an empty graph")
    if not 0.0 < damping < 1.0:
        raise ValueError(f"damping must lie in (0, 1), got {damping}")
    ids = graph.node_ids
    index = {nid: i for i, nid in enumerate(ids)}
    src = np.array([index[a] for a, _ in graph.edges], dtype=np.int64)
    dst = np.array([index[b] for _, b in graph.edges], dtype=np.int64)
    out_degree = np.bincount(src, minlength=len(ids)).astype(np.float64)
    if kernel is None:
        kernel = pagerank_kernel if len(src) >= NUMBA_MIN_EDGES else _pagerank_numpy
    r, iterations, residual = kernel(src, dst, out_degree, len(ids), float(damping), float(tol), int(max_iter))
    if residual > tol:
        raise ConvergenceError(float(residual), int(iterations))
    ranks = RankVector({nid: float(r[index[nid]]) for nid in ids}, False, int(iterations))
    return ranks.normalize() if normalize else ranks


def select_context_block(graph: CallGraph, ranks: RankVector, target: int, tie_rule: str = "lowest_id",
                         seed: int = 0, rel_tol: float = 1e-12) -> int | None:
    """Highest-ranked caller of ``target``; None when nothing calls it.

    Ranks within ``rel_tol`` of the maximum count as tied.  ``tie_rule`` is
    ``lowest_id`` or ``random`` (seeded).
    """
    preds = graph.predecessors(target)
    if not preds:
        return None
    best = max(ranks[p] for p in preds)
    tied = [p for p in preds if ranks[p] >= best - rel_tol * abs(best)]
    if tie_rule == "lowest_id" or len(tied) == 1:
        return tied[0]
    if tie_rule in ("random", "seeded_random"):
        return random.Random(seed).choice(tied)
    raise ValueError(f"unknown tie rule {tie_rule!r}")


_LABEL = re.compile(r"^\s*(?:[\w$.<>]+\s+)*?([A-Za-z_$][\w$.]*)\s*\(([^()]*)\)\s*$")


def _simple_name(qualified: str) -> str:
    return re.split(r"[.$]", qualified.strip())[-1]


def synthesize_dummy(block_label: str) -> TokenSequence:
    """``onClick(View view)`` -> tokens of ``public void onClick(View view) { }``."""
    m = _LABEL.match(block_label)
    if not m:
        raise GraphError(f"cannot read a callback signature from {block_label!r}")
    name = _simple_name(m.group(1))
    if not name:
        raise GraphError(f"empty method name in {block_label!r}")
    params = []
    for param in m.group(2).split(","):
        words = param.split()
        if words:
            params.append(" ".join([_simple_name(words[0])] + words[1:]))
    return tokenize(f"public void {name}({', '.join(params)}) {{ }}", "code")
