"""Similarity graph construction and edge-betweenness community detection.

The graph connects entities whose embedding cosine similarity strictly
exceeds a threshold (absolute, or a nearest-rank percentile of all
pairwise similarities). Betweenness uses UNWEIGHTED shortest paths (hop
count); edge weights enter only through the modularity used to pick the
returned partition. Betweenness is accumulated in exact rational
arithmetic and converted to float at the boundary, so equal-by-math
results compare equal in tests, and removal tie-breaks are stable.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import EmbeddingSet, HcfError

log = logging.getLogger(__name__)

GN_TRIVIAL_MODULARITY = float("-inf")


@dataclass(frozen=True)
class AbsoluteThreshold:
    value: float


@dataclass(frozen=True)
class PercentileThreshold:
    percentile: float = 90.0

    def __post_init__(self):
        if not (0.0 < self.percentile <= 100.0):
            raise HcfError("percentile must be in (0, 100]")


@dataclass(frozen=True)
class CompanyGraph:
    """Weighted undirected graph over entity ids; no self loops."""

    nodes: tuple
    adj: dict  # id -> {neighbor id: weight}
    node_attrs: dict = field(default_factory=dict)

    def edges(self) -> list:
        """(a, b, weight) with a < b, sorted."""
        out = []
        for a in self.nodes:
            for b, w in self.adj.get(a, {}).items():
                if a < b:
                    out.append((a, b, w))
        return sorted(out)

    def n_edges(self) -> int:
        return sum(len(nbrs) for nbrs in self.adj.values()) // 2


@dataclass(frozen=True)
class Partition:
    """Disjoint communities covering every node, plus their modularity."""

    communities: tuple  # tuple of tuples of node ids, each sorted
    modularity: float

    def community_of(self) -> dict:
        out = {}
        for k, comm in enumerate(self.communities):
            for node in comm:
                out[node] = k
        return out


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise HcfError("cosine similarity undefined for a zero vector")
    return float(a @ b / (na * nb))


def build_graph(embeddings: EmbeddingSet, threshold, node_attrs=None) -> CompanyGraph:
    """Edge iff pairwise cosine strictly exceeds the resolved threshold."""
    ids = embeddings.ids
    mat = embeddings.matrix()
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0.0):
        bad = [ids[k] for k in np.flatnonzero(norms == 0.0)[:5]]
        raise HcfError(f"zero vectors cannot enter the similarity graph: {bad}")
    unit = mat / norms[:, None]
    sims = unit @ unit.T

    if isinstance(threshold, AbsoluteThreshold):
        t = float(threshold.value)
    elif isinstance(threshold, PercentileThreshold):
        iu = np.triu_indices(len(ids), k=1)
        values = np.sort(sims[iu])
        if len(values) == 0:
            raise HcfError("need at least two embeddings to build a graph")
        rank = int(np.ceil(threshold.percentile / 100.0 * len(values)))  # nearest-rank
        t = float(values[max(rank, 1) - 1])
    else:
        raise HcfError(f"unknown threshold policy {threshold!r}")

    adj = {eid: {} for eid in ids}
    for r in range(len(ids)):
        for c in range(r + 1, len(ids)):
            w = float(sims[r, c])
            if w > t:
                adj[ids[r]][ids[c]] = w
                adj[ids[c]][ids[r]] = w
    graph = CompanyGraph(tuple(ids), adj, dict(node_attrs or {}))
    if graph.n_edges() == 0:
        log.warning("similarity graph has no edges at threshold %.6f", t)
    return graph


def edge_betweenness(graph: CompanyGraph, adj=None) -> dict:
    """Brandes accumulation over unweighted shortest paths.

    Pair contributions split equally among equal-length shortest paths;
    each unordered pair counts once. Values are exact rationals converted
    to float, keyed by (a, b) with a < b.
    """
    return {e: float(v) for e, v in
            _edge_betweenness_exact(graph.nodes, adj if adj is not None else graph.adj).items()}


def _edge_betweenness_exact(nodes, adj) -> dict:
    acc = {}
    for a in nodes:
        for b in adj.get(a, {}):
            if a < b:
                acc[(a, b)] = Fraction(0)
    for s in nodes:
        if not adj.get(s):
            continue
        dist = {s: 0}
        sigma = {s: 1}
        preds = {s: []}
        order = []
        queue = deque([s])
        while queue:
            v = queue.popleft()
            order.append(v)
            for w in sorted(adj[v]):
                if w not in dist:
                    dist[w] = dist[v] + 1
                    sigma[w] = 0
                    preds[w] = []
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = {v: Fraction(0) for v in order}
        for w in reversed(order):
            for v in preds[w]:
                c = Fraction(sigma[v], sigma[w]) * (1 + delta[w])
                key = (v, w) if v < w else (w, v)
                acc[key] += c
                delta[v] += c
    # ordered-pair accumulation counts each unordered pair twice
    return {e: v / 2 for e, v in acc.items()}


def weighted_modularity(graph: CompanyGraph, communities) -> float:
    """Newman modularity with edge weights, computed on ``graph``."""
    degree = {v: sum(graph.adj.get(v, {}).values()) for v in graph.nodes}
    two_w = sum(degree.values())
    if two_w == 0.0:
        return 0.0
    q = 0.0
    for comm in communities:
        members = set(comm)
        internal = 0.0  # both directions, i.e. 2x the intra-community weight
        total_deg = 0.0
        for v in comm:
            total_deg += degree[v]
            for w, wt in graph.adj.get(v, {}).items():
                if w in members:
                    internal += wt
        q += internal / two_w - (total_deg / two_w) ** 2
    return q


def connected_components(nodes, adj) -> tuple:
    """Sorted node tuples, ordered by smallest member."""
    seen = set()
    comps = []
    for start in sorted(nodes):
        if start in seen:
            continue
        comp = []
        queue = deque([start])
        seen.add(start)
        while queue:
            v = queue.popleft()
            comp.append(v)
            for w in adj.get(v, {}):
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        comps.append(tuple(sorted(comp)))
    return tuple(sorted(comps))


@dataclass
class GirvanNewmanResult:
    removals: list          # edges in removal order
    steps: list             # per removal: {edge, betweenness, n_components, modularity}
    best: Partition


def girvan_newman(graph: CompanyGraph) -> GirvanNewmanResult:
    """Remove the max-betweenness edge until none remain, recomputing
    betweenness after every removal.

    Ties on the maximum break lexicographically by (a, b) edge id. After
    each removal the connected components are scored with weighted
    modularity on the ORIGINAL graph; the best-scoring partition is
    returned (earliest on ties).
    """
    if graph.n_edges() == 0:
        raise HcfError("community detection needs at least one edge")
    work = {v: dict(nbrs) for v, nbrs in graph.adj.items()}
    removals = []
    steps = []
    best_partition = None
    best_q = GN_TRIVIAL_MODULARITY
    while any(work[v] for v in work):
        bw = _edge_betweenness_exact(graph.nodes, work)
        max_b = max(bw.values())
        edge = min(e for e, v in bw.items() if v == max_b)
        a, b = edge
        del work[a][b]
        del work[b][a]
        removals.append(edge)
        comps = connected_components(graph.nodes, work)
        q = weighted_modularity(graph, comps)
        steps.append({"edge": edge, "betweenness": float(max_b),
                      "n_components": len(comps), "modularity": q})
        if q > best_q:
            best_q = q
            best_partition = Partition(comps, q)
    if best_partition is None:  # unreachable: loop runs at least once
        comps = connected_components(graph.nodes, work)
        best_partition = Partition(comps, weighted_modularity(graph, comps))
    return GirvanNewmanResult(removals, steps, best_partition)


def top_neighbors(embeddings: EmbeddingSet, entity_id: str, k: int = 10) -> list:
    """The k most cosine-similar entities to ``entity_id``; ties by id,
    self excluded, zero-vector candidates skipped. Returns (id, sim) pairs."""
    if entity_id not in embeddings.rows:
        raise HcfError(f"unknown entity {entity_id!r}")
    query = embeddings.rows[entity_id]
    if not np.any(query):
        raise HcfError(f"entity {entity_id!r} has a zero vector")
    scored = []
    for other, vec in embeddings.rows.items():
        if other == entity_id or not np.any(vec):
            continue
        scored.append((other, cosine_similarity(query, vec)))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[:max(k, 0)]


def community_top_items(partition: Partition, model, k: int = 5) -> dict:
    """Per community, the k items with the highest mean eval-mode score
    over member entities. Returns {community index: [(item id, score)]}."""
    from .dcf import score_all

    entity_index = {eid: idx for idx, eid in enumerate(model.entity_ids)}
    out = {}
    for ci, comm in enumerate(partition.communities):
        rows = [entity_index[eid] for eid in comm if eid in entity_index]
        if not rows or k <= 0:
            out[ci] = []
            continue
        mean_scores = score_all(model, entity_indices=rows).mean(axis=0)
        ranked = sorted(zip(model.item_ids, mean_scores), key=lambda t: (-t[1], t[0]))
        out[ci] = [(iid, float(s)) for iid, s in ranked[:k]]
    return out


def graph_to_json(graph: CompanyGraph, partition: Partition | None = None) -> dict:
    comm_of = partition.community_of() if partition else {}
    return {
        "nodes": [{"id": v, "community": comm_of.get(v, 0)} for v in sorted(graph.nodes)],
        "edges": [{"a": a, "b": b, "weight": w} for a, b, w in graph.edges()],
        "modularity": partition.modularity if partition else None,
    }


def graph_to_dot(graph: CompanyGraph, partition: Partition | None = None) -> str:
    comm_of = partition.community_of() if partition else {}
    lines = ["graph communities {"]
    for v in sorted(graph.nodes):
        lines.append(f'  "{v}" [community={comm_of.get(v, 0)}];')
    for a, b, w in graph.edges():
        lines.append(f'  "{a}" -- "{b}" [weight={w:.6g}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
