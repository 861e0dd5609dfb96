"""Mover's distance between token histograms over an embedding ground space.

The exact solver is a primal network simplex on the bipartite transportation
graph with Bland's anti-cycling rule (entering arc = first negative reduced
cost in row-major arc order; leaving arc = smallest-index minimizer). Top-k
search prunes candidates with the relaxed one-sided lower bound (and the
centroid bound under a Euclidean ground metric) without changing results.
"""

from __future__ import annotations

import heapq
import logging
import threading
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .embed import EmbeddingTable
from .tokenize import TokenSeq

logger = logging.getLogger(__name__)

COSINE = "cosine"
EUCLIDEAN = "euclidean"

#: cost entries below this are clamped to zero to stabilize pivoting
COST_CLAMP = 1e-12

_REDUCED_COST_TOL = 1e-12


class SolverError(RuntimeError):
    """Network simplex failed to converge; carries the offending instance."""

    def __init__(self, message: str, instance: dict | None = None):
        super().__init__(message)
        self.instance = instance


@dataclass(frozen=True)
class GramHistogram:
    """Normalized bag of tokens: the marginal of the transport problem."""

    support: np.ndarray  # unique sorted token indices
    weights: np.ndarray  # strictly positive, sums to 1
    granularity: str

    def __post_init__(self):
        if len(self.support) == 0:
            raise ValueError("histogram support must be non-empty")
        if len(self.support) != len(self.weights):
            raise ValueError("support and weights must align")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be strictly positive")
        if abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {self.weights.sum()!r}")
        if np.any(np.diff(self.support) <= 0):
            raise ValueError("support must be unique and sorted")


@dataclass(frozen=True)
class CostMatrix:
    values: np.ndarray  # (|supportA|, |supportB|), nonnegative finite
    metric: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("cost matrix must be finite")
        if np.any(self.values < 0):
            raise ValueError("cost matrix must be nonnegative")


@dataclass(frozen=True)
class TransportPlan:
    flow: np.ndarray  # (|supportA|, |supportB|), nonnegative


def nbow(tokens: TokenSeq, table: EmbeddingTable) -> GramHistogram:
    """Counts of in-vocabulary tokens normalized to sum 1; OOV tokens are
    dropped before normalization."""
    index = table.vocab.index
    ids = [index[t] for t in tokens.tokens if t in index]
    if not ids:
        raise ValueError("document has no embeddable tokens")
    support, counts = np.unique(np.asarray(ids, dtype=np.int64), return_counts=True)
    weights = counts.astype(np.float64) / len(ids)
    return GramHistogram(support=support, weights=weights, granularity=tokens.granularity)


def _pairwise_cost(va: np.ndarray, vb: np.ndarray, metric: str) -> np.ndarray:
    va = va.astype(np.float64)
    vb = vb.astype(np.float64)
    if metric == COSINE:
        norms_a = np.linalg.norm(va, axis=1, keepdims=True)
        norms_b = np.linalg.norm(vb, axis=1, keepdims=True)
        ua = np.divide(va, norms_a, out=np.zeros_like(va), where=norms_a > 0)
        ub = np.divide(vb, norms_b, out=np.zeros_like(vb), where=norms_b > 0)
        cost = 1.0 - ua @ ub.T
    elif metric == EUCLIDEAN:
        sq = (
            np.sum(va ** 2, axis=1)[:, None]
            + np.sum(vb ** 2, axis=1)[None, :]
            - 2.0 * va @ vb.T
        )
        cost = np.sqrt(np.maximum(sq, 0.0))
    else:
        raise ValueError(f"unknown ground metric {metric!r}")
    cost[cost < COST_CLAMP] = 0.0
    return cost


def cost_matrix(
    a: GramHistogram, b: GramHistogram, table: EmbeddingTable, metric: str = COSINE
) -> CostMatrix:
    """Ground distances between all support pairs of the two histograms."""
    va = table.vectors[a.support]
    vb = table.vectors[b.support]
    return CostMatrix(values=_pairwise_cost(va, vb, metric), metric=metric)


def _northwest_corner(a: np.ndarray, b: np.ndarray) -> list[tuple[int, int, float]]:
    m, n = len(a), len(b)
    remaining_a = a.copy()
    remaining_b = b.copy()
    arcs = []
    i = j = 0
    for _ in range(m + n - 1):
        flow = max(0.0, min(remaining_a[i], remaining_b[j]))
        arcs.append((i, j, flow))
        remaining_a[i] -= flow
        remaining_b[j] -= flow
        if i < m - 1 and (remaining_a[i] <= remaining_b[j] or j == n - 1):
            i += 1
        elif j < n - 1:
            j += 1
    return arcs


def emd_exact(
    a: GramHistogram, b: GramHistogram, c: CostMatrix
) -> tuple[float, TransportPlan]:
    """Exact minimum-cost transport between the two histograms.

    Returns the optimal value and an attaining plan whose marginals match the
    histogram weights to 1e-9.
    """
    cost = np.ascontiguousarray(c.values, dtype=np.float64)
    m, n = cost.shape
    if m != len(a.support) or n != len(b.support):
        raise ValueError("cost matrix shape does not match histogram supports")

    flow = _network_simplex(a.weights, b.weights, cost)
    distance = float((flow * cost).sum())
    row_err = np.abs(flow.sum(axis=1) - a.weights).max()
    col_err = np.abs(flow.sum(axis=0) - b.weights).max()
    if row_err > 1e-9 or col_err > 1e-9:
        raise SolverError(
            f"plan marginals off by ({row_err:.3g}, {col_err:.3g})",
            instance={"a": a.weights.tolist(), "b": b.weights.tolist(), "cost": cost.tolist()},
        )
    return distance, TransportPlan(flow=flow)


def _network_simplex(a: np.ndarray, b: np.ndarray, cost: np.ndarray) -> np.ndarray:
    """Primal network simplex on the bipartite transportation graph.

    Spanning-tree basis with parent pointers; potentials and depths are
    maintained incrementally (a pivot shifts one re-rooted subtree by the
    entering arc's reduced cost). Pricing is most-negative-reduced-cost,
    switching to Bland's first-negative rule during degenerate stalls so
    cycling is impossible; leaving-arc ties break on the smallest arc index.
    """
    m, n = cost.shape
    size = m + n  # node ids: 0..m-1 supplies, m..size-1 demands

    parent = [-1] * size
    flow_up = [0.0] * size  # flow on the arc to parent
    children: list[set] = [set() for _ in range(size)]

    adjacency: list[dict[int, float]] = [dict() for _ in range(size)]
    for i, j, flow in _northwest_corner(a, b):
        adjacency[i][m + j] = flow
        adjacency[m + j][i] = flow

    # initial tree rooted at node 0
    depth = [0] * size
    seen = [False] * size
    seen[0] = True
    stack = [0]
    while stack:
        node = stack.pop()
        for neighbor, flow in adjacency[node].items():
            if not seen[neighbor]:
                seen[neighbor] = True
                parent[neighbor] = node
                children[node].add(neighbor)
                flow_up[neighbor] = flow
                depth[neighbor] = depth[node] + 1
                stack.append(neighbor)

    potential = np.zeros(size, dtype=np.float64)
    stack = [0]
    while stack:
        node = stack.pop()
        for child in children[node]:
            if child < m:  # child is a supply, parent a demand
                potential[child] = cost[child, node - m] - potential[node]
            else:
                potential[child] = cost[node, child - m] - potential[node]
            stack.append(child)

    pivot_cap = 50 * size * size
    stall = 0  # consecutive degenerate pivots; long stalls engage Bland's rule
    stall_limit = size

    for _ in range(pivot_cap):
        reduced = cost - potential[:m, None] - potential[None, m:]
        flat_view = reduced.ravel()
        if stall <= stall_limit:
            entering_flat = int(np.argmin(flat_view))
            if flat_view[entering_flat] >= -_REDUCED_COST_TOL:
                break  # optimal
        else:
            mask = flat_view < -_REDUCED_COST_TOL
            entering_flat = int(np.argmax(mask))
            if not mask[entering_flat]:
                break  # optimal
        enter_i, enter_j = divmod(entering_flat, n)
        theta = _pivot(
            parent,
            children,
            flow_up,
            depth,
            potential,
            float(flat_view[entering_flat]),
            enter_i,
            m + enter_j,
            m,
            n,
        )
        stall = stall + 1 if theta <= 1e-15 else 0
    else:
        raise SolverError(
            f"no convergence within {pivot_cap} pivots",
            instance={"a": a.tolist(), "b": b.tolist(), "cost": cost.tolist()},
        )

    result = np.zeros((m, n), dtype=np.float64)
    for node in range(size):
        up = parent[node]
        if up < 0:
            continue
        if node < m:
            result[node, up - m] = flow_up[node]
        else:
            result[up, node - m] = flow_up[node]
    return result


def _pivot(parent, children, flow_up, depth, potential, reduced_cost, enter_a, enter_b, m, n):
    """One basis exchange; returns the flow moved around the cycle."""
    # path from each endpoint of the entering arc up to their junction
    path_a = [enter_a]
    path_b = [enter_b]
    x, y = enter_a, enter_b
    while depth[x] > depth[y]:
        x = parent[x]
        path_a.append(x)
    while depth[y] > depth[x]:
        y = parent[y]
        path_b.append(y)
    while x != y:
        x = parent[x]
        y = parent[y]
        path_a.append(x)
        path_b.append(y)

    # cycle arcs in traversal order starting after the entering arc, as
    # (child_node, sign); signs alternate around the alternating cycle
    cycle: list[tuple[int, float]] = []
    sign = -1.0
    for node in path_b[:-1]:  # enter_b up to the junction
        cycle.append((node, sign))
        sign = -sign
    for node in reversed(path_a[:-1]):  # junction down to enter_a
        cycle.append((node, sign))
        sign = -sign

    theta = np.inf
    leaving = -1
    leaving_key = -1
    for node, arc_sign in cycle:
        if arc_sign < 0:
            arc_flow = flow_up[node]
            up = parent[node]
            flat = node * n + (up - m) if node < m else up * n + (node - m)
            if leaving < 0 or arc_flow < theta - 1e-15:
                theta = arc_flow
                leaving = node
                leaving_key = flat
            elif arc_flow - theta <= 1e-15 and flat < leaving_key:
                leaving = node
                leaving_key = flat
                if arc_flow < theta:
                    theta = arc_flow

    if leaving < 0:
        # cannot happen on a balanced transportation polytope: the cycle
        # alternates, so at least one arc runs against the entering arc
        raise SolverError("pivot found no leaving arc")

    theta = max(0.0, theta)
    if theta > 0.0:
        for node, arc_sign in cycle:
            updated = flow_up[node] + arc_sign * theta
            flow_up[node] = updated if updated > 0.0 else 0.0

    # reattach: reverse the tree path from the entering endpoint inside the
    # detached subtree (the one hanging off the leaving arc) up to it
    inside = enter_a if _in_subtree(parent, enter_a, leaving) else enter_b
    outside = enter_b if inside == enter_a else enter_a

    path = [inside]
    while path[-1] != leaving:
        path.append(parent[path[-1]])
    children[parent[leaving]].discard(leaving)
    for t in range(len(path) - 1):
        children[path[t + 1]].discard(path[t])
        children[path[t]].add(path[t + 1])
    children[outside].add(inside)
    old_flows = [flow_up[node] for node in path]
    flow_up[inside] = theta
    for t in range(len(path) - 1):
        flow_up[path[t + 1]] = old_flows[t]
    for t in range(len(path) - 1, 0, -1):
        parent[path[t]] = path[t - 1]
    parent[inside] = outside

    # the re-rooted subtree hangs under `outside` via the entering arc; its
    # potentials shift by the entering arc's reduced cost (sign depending on
    # each node's side) and its depths are recomputed by one walk
    supply_shift = reduced_cost if inside < m else -reduced_cost
    stack = [inside]
    depth[inside] = depth[outside] + 1
    while stack:
        node = stack.pop()
        potential[node] += supply_shift if node < m else -supply_shift
        node_depth = depth[node] + 1
        for child in children[node]:
            depth[child] = node_depth
            stack.append(child)
    return theta


def _in_subtree(parent, node, subtree_root):
    while node >= 0:
        if node == subtree_root:
            return True
        node = parent[node]
    return False


def wcd(a: GramHistogram, b: GramHistogram, table: EmbeddingTable, metric: str = EUCLIDEAN) -> float:
    """Centroid lower bound: distance between the weighted mean vectors.

    Only valid as a lower bound under the Euclidean ground metric.
    """
    if metric != EUCLIDEAN:
        raise ValueError("wcd bound requires euclidean ground metric")
    centroid_a = a.weights @ table.vectors[a.support].astype(np.float64)
    centroid_b = b.weights @ table.vectors[b.support].astype(np.float64)
    return float(np.linalg.norm(centroid_a - centroid_b))


def rwmd(a: GramHistogram, b: GramHistogram, c: CostMatrix) -> float:
    """Relaxed lower bound: each mass moves to its cheapest target; the max of
    the two one-sided relaxations. Valid for any nonnegative cost."""
    from_a = float(a.weights @ c.values.min(axis=1))
    from_b = float(b.weights @ c.values.min(axis=0))
    return max(from_a, from_b)


def mover_distance(
    doc_a: TokenSeq,
    doc_b: TokenSeq,
    table: EmbeddingTable,
    metric: str = COSINE,
) -> float:
    """nbow -> cost matrix -> exact transport, at the documents' granularity."""
    hist_a = nbow(doc_a, table)
    hist_b = nbow(doc_b, table)
    distance, _ = emd_exact(hist_a, hist_b, cost_matrix(hist_a, hist_b, table, metric))
    return distance


@dataclass
class PreparedDoc:
    doc_id: str
    hist: GramHistogram
    vectors: np.ndarray
    units: np.ndarray | None
    centroid: np.ndarray


@dataclass
class MoverIndex:
    """Histograms of a corpus side, prepared for repeated top-k queries."""

    table: EmbeddingTable
    metric: str
    entries: list[PreparedDoc]
    skipped: list[str] = field(default_factory=list)


@dataclass
class SearchStats:
    exact_evaluations: int = 0
    bound_computations: int = 0
    pruned: int = 0


def prepare_histogram(
    doc_id: str, hist: GramHistogram, table: EmbeddingTable, metric: str
) -> PreparedDoc:
    vectors = table.vectors[hist.support].astype(np.float64)
    units = None
    if metric == COSINE:
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        units = np.divide(vectors, norms, out=np.zeros_like(vectors), where=norms > 0)
    centroid = hist.weights @ vectors
    return PreparedDoc(doc_id=doc_id, hist=hist, vectors=vectors, units=units, centroid=centroid)


def prepare_doc(doc_id: str, tokens: TokenSeq, table: EmbeddingTable, metric: str) -> PreparedDoc:
    return prepare_histogram(doc_id, nbow(tokens, table), table, metric)


def build_index(
    docs: Iterable[tuple[str, TokenSeq]],
    table: EmbeddingTable,
    metric: str = COSINE,
) -> MoverIndex:
    entries = []
    skipped = []
    for doc_id, tokens in docs:
        try:
            entries.append(prepare_doc(doc_id, tokens, table, metric))
        except ValueError:
            logger.warning("skipping unembeddable document %s", doc_id)
            skipped.append(doc_id)
    return MoverIndex(table=table, metric=metric, entries=entries, skipped=skipped)


def _pair_cost(query: PreparedDoc, entry: PreparedDoc, metric: str) -> CostMatrix:
    if metric == COSINE:
        cost = 1.0 - query.units @ entry.units.T
        cost[cost < COST_CLAMP] = 0.0
        return CostMatrix(values=cost, metric=metric)
    return CostMatrix(values=_pairwise_cost(query.vectors, entry.vectors, metric), metric=metric)


def topk_query(
    query: TokenSeq,
    index: MoverIndex,
    k: int,
    pruning: bool = True,
    stats: SearchStats | None = None,
    threads: int = 1,
) -> list[tuple[str, float]]:
    """The k nearest indexed documents by exact mover distance, ascending,
    ties broken by doc id. Pruning skips the exact solve whenever a lower
    bound exceeds the current k-th best; results are identical either way.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not index.entries:
        raise ValueError("index is empty")
    prepared_query = prepare_doc("__query__", query, index.table, index.metric)

    if not pruning:
        evaluated = [
            (_exact_distance(prepared_query, entry, index.metric, stats), entry.doc_id)
            for entry in index.entries
        ]
        return _ranked(evaluated, k)

    bounds = []
    for entry in index.entries:
        cost = _pair_cost(prepared_query, entry, index.metric)
        bound = rwmd(prepared_query.hist, entry.hist, cost)
        if index.metric == EUCLIDEAN:
            bound = max(
                bound, float(np.linalg.norm(prepared_query.centroid - entry.centroid))
            )
        if stats is not None:
            stats.bound_computations += 1
        bounds.append((bound, entry.doc_id, entry, cost))
    bounds.sort(key=lambda item: (item[0], item[1]))

    evaluated: list[tuple[float, str]] = []
    if threads > 1:
        _topk_parallel(prepared_query, bounds, k, index.metric, evaluated, stats, threads)
    else:
        worst_kth = np.inf
        best_heap: list[float] = []  # max-heap (negated) of the k best distances
        for bound, doc_id, entry, cost in bounds:
            if len(best_heap) == k and bound > worst_kth:
                if stats is not None:
                    stats.pruned += len(bounds) - len(evaluated)
                break
            distance, _ = emd_exact(prepared_query.hist, entry.hist, cost)
            if stats is not None:
                stats.exact_evaluations += 1
            evaluated.append((distance, doc_id))
            if len(best_heap) < k:
                heapq.heappush(best_heap, -distance)
            elif distance < -best_heap[0]:
                heapq.heapreplace(best_heap, -distance)
            if len(best_heap) == k:
                worst_kth = -best_heap[0]
    return _ranked(evaluated, k)


def _exact_distance(query: PreparedDoc, entry: PreparedDoc, metric, stats) -> float:
    cost = _pair_cost(query, entry, metric)
    distance, _ = emd_exact(query.hist, entry.hist, cost)
    if stats is not None:
        stats.exact_evaluations += 1
    return distance


def _ranked(evaluated: list[tuple[float, str]], k: int) -> list[tuple[str, float]]:
    evaluated.sort(key=lambda item: (item[0], item[1]))
    return [(doc_id, distance) for distance, doc_id in evaluated[:k]]


def _topk_parallel(prepared_query, bounds, k, metric, evaluated, stats, threads):
    # shared monotonically tightening threshold; workers claim candidates in
    # bound order off a shared cursor
    lock = threading.Lock()
    state = {"cursor": 0, "heap": [], "worst": np.inf, "stats_exact": 0, "stats_pruned": 0}

    def worker():
        while True:
            with lock:
                position = state["cursor"]
                if position >= len(bounds):
                    return
                bound, doc_id, entry, cost = bounds[position]
                if len(state["heap"]) == k and bound > state["worst"]:
                    state["stats_pruned"] += len(bounds) - position
                    state["cursor"] = len(bounds)
                    return
                state["cursor"] = position + 1
            distance, _ = emd_exact(prepared_query.hist, entry.hist, cost)
            with lock:
                state["stats_exact"] += 1
                evaluated.append((distance, doc_id))
                if len(state["heap"]) < k:
                    heapq.heappush(state["heap"], -distance)
                elif distance < -state["heap"][0]:
                    heapq.heapreplace(state["heap"], -distance)
                if len(state["heap"]) == k:
                    state["worst"] = -state["heap"][0]

    pool = [threading.Thread(target=worker) for _ in range(threads)]
    for thread in pool:
        thread.start()
    for thread in pool:
        thread.join()
    if stats is not None:
        stats.exact_evaluations += state["stats_exact"]
        stats.pruned += state["stats_pruned"]


def plan_to_tsv(plan: TransportPlan, cost: CostMatrix) -> str:
    """Tab-separated `i, j, flow, cost` rows for nonzero flows, plus a trailer
    line with the total transported cost."""
    lines = []
    total = 0.0
    rows, cols = np.nonzero(plan.flow)
    for i, j in zip(rows.tolist(), cols.tolist()):
        flow = plan.flow[i, j]
        unit_cost = cost.values[i, j]
        total += flow * unit_cost
        lines.append(f"{i}\t{j}\t{flow:.12g}\t{unit_cost:.12g}")
    lines.append(f"total\t\t\t{total:.12g}")
    return "\n".join(lines) + "\n"
