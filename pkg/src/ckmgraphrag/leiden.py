"""Leiden community detection (modularity objective) and its hierarchical variant.

Follows Traag, Waltman & van Eck (2019): fast local moving, refinement of
each community into well-connected sub-communities, and aggregation of the
refined partition, repeated until no node moves.  All randomness (visiting
order, refinement choices, restarts) comes from one seeded ``random.Random``.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence


class _Graph:
    """Weighted undirected graph on nodes 0..n-1 with self loops allowed."""

    def __init__(self, n: int, adj: list[dict[int, float]], node_weight: list[float]):
        self.n = n
        self.adj = adj  # adj[u][v] = weight; self loops stored once at adj[u][u]
        self.node_weight = node_weight  # number of original nodes (for bookkeeping)
        self.degree = [
            sum(w for v, w in nbrs.items() if v != u) + 2 * nbrs.get(u, 0.0)
            for u, nbrs in enumerate(adj)
        ]
        self.total = sum(self.degree)  # = 2m


def _from_edges(n: int, edges: Iterable[tuple[int, int, float]]) -> _Graph:
    adj: list[dict[int, float]] = [dict() for _ in range(n)]
    for u, v, w in edges:
        if u == v:
            adj[u][u] = adj[u].get(u, 0.0) + w
        else:
            adj[u][v] = adj[u].get(v, 0.0) + w
            adj[v][u] = adj[v].get(u, 0.0) + w
    return _Graph(n, adj, [1.0] * n)


def modularity(n: int, edges: Sequence[tuple[int, int]], membership: Sequence[int],
               resolution: float = 1.0) -> float:
    """Newman modularity of ``membership`` on an unweighted simple graph."""
    m = len(edges)
    if m == 0:
        return 0.0
    internal: dict[int, float] = {}
    degree_sum: dict[int, float] = {}
    for u, v in edges:
        degree_sum[membership[u]] = degree_sum.get(membership[u], 0) + 1
        degree_sum[membership[v]] = degree_sum.get(membership[v], 0) + 1
        if membership[u] == membership[v]:
            internal[membership[u]] = internal.get(membership[u], 0) + 1
    return sum(
        internal.get(c, 0) / m - resolution * (k / (2 * m)) ** 2 for c, k in degree_sum.items()
    )


class _Partition:
    def __init__(self, graph: _Graph, membership: list[int]):
        self.g = graph
        self.membership = membership
        self.comm_degree: dict[int, float] = {}
        self.comm_size: dict[int, int] = {}
        for u, c in enumerate(membership):
            self.comm_degree[c] = self.comm_degree.get(c, 0.0) + graph.degree[u]
            self.comm_size[c] = self.comm_size.get(c, 0) + 1

    def move(self, u: int, c: int) -> None:
        old = self.membership[u]
        k = self.g.degree[u]
        self.comm_degree[old] -= k
        self.comm_size[old] -= 1
        if self.comm_size[old] == 0:
            del self.comm_size[old], self.comm_degree[old]
        self.membership[u] = c
        self.comm_degree[c] = self.comm_degree.get(c, 0.0) + k
        self.comm_size[c] = self.comm_size.get(c, 0) + 1

    def free_label(self) -> int:
        c = len(self.membership)
        while c in self.comm_size:
            c += 1
        return c


def _links_to_communities(g: _Graph, membership: Sequence[int], u: int) -> dict[int, float]:
    out: dict[int, float] = {}
    for v, w in g.adj[u].items():
        if v != u:
            out[membership[v]] = out.get(membership[v], 0.0) + w
    return out


def _move_nodes_fast(g: _Graph, part: _Partition, gamma: float, rng: random.Random) -> bool:
    order = list(range(g.n))
    rng.shuffle(order)
    queue = deque(order)
    queued = [True] * g.n
    moved = False
    two_m = g.total
    while queue:
        u = queue.popleft()
        queued[u] = False
        cur = part.membership[u]
        k = g.degree[u]
        links = _links_to_communities(g, part.membership, u)
        # gain relative to u sitting alone; both sides exclude u's own degree
        base = links.get(cur, 0.0) - gamma * k * (part.comm_degree[cur] - k) / two_m
        best_c, best = cur, base
        for c in sorted(links):
            if c == cur:
                continue
            gain = links[c] - gamma * k * part.comm_degree[c] / two_m
            if gain > best + 1e-12:
                best_c, best = c, gain
        if best < -1e-12:
            best_c = part.free_label()  # an empty community beats a negative one
        if best_c != cur:
            part.move(u, best_c)
            moved = True
            for v in g.adj[u]:
                if v != u and not queued[v] and part.membership[v] != best_c:
                    queue.append(v)
                    queued[v] = True
    return moved


def _refine(g: _Graph, part: _Partition, gamma: float, rng: random.Random,
            theta: float) -> list[int]:
    """Greedy merge of singletons inside each community into well-connected subsets."""
    two_m = g.total
    refined = _Partition(g, list(range(g.n)))
    members: dict[int, list[int]] = {}
    for u, c in enumerate(part.membership):
        members.setdefault(c, []).append(u)
    for c in sorted(members):
        nodes = members[c]
        in_s = set(nodes)
        s_degree = sum(g.degree[u] for u in nodes)
        # ext[r]: weight between refined community r and the rest of S
        ext = {u: sum(w for v, w in g.adj[u].items() if v != u and v in in_s) for u in nodes}
        order = list(nodes)
        rng.shuffle(order)
        for u in order:
            k = g.degree[u]
            own = refined.membership[u]
            if refined.comm_size[own] > 1 or ext[own] < gamma * k * (s_degree - k) / two_m:
                continue
            links = {
                r: w for r, w in _links_to_communities(g, refined.membership, u).items()
                if r != own and r in ext
            }
            candidates, gains = [], []
            for r in sorted(links):
                kr = refined.comm_degree[r]
                if ext[r] < gamma * kr * (s_degree - kr) / two_m:
                    continue
                gain = links[r] - gamma * k * kr / two_m
                if gain >= 0:
                    candidates.append(r)
                    gains.append(gain)
            if not candidates:
                continue
            if theta > 0:
                top = max(gains)
                weights = [math.exp((x - top) / theta) for x in gains]
                best_c = rng.choices(candidates, weights=weights)[0]
            else:
                best_c = candidates[gains.index(max(gains))]
            ext[best_c] += ext.pop(own) - 2.0 * links[best_c]
            refined.move(u, best_c)
    return refined.membership


def _aggregate(g: _Graph, refined: Sequence[int]) -> tuple[_Graph, list[int]]:
    labels = {c: i for i, c in enumerate(sorted(set(refined)))}
    n = len(labels)
    adj: list[dict[int, float]] = [dict() for _ in range(n)]
    weight = [0.0] * n
    for u in range(g.n):
        cu = labels[refined[u]]
        weight[cu] += g.node_weight[u]
        for v, w in g.adj[u].items():
            cv = labels[refined[v]]
            if u == v:
                adj[cu][cu] = adj[cu].get(cu, 0.0) + w
            elif u < v:
                if cu == cv:
                    adj[cu][cu] = adj[cu].get(cu, 0.0) + w
                else:
                    adj[cu][cv] = adj[cu].get(cv, 0.0) + w
                    adj[cv][cu] = adj[cv].get(cu, 0.0) + w
    agg = _Graph(n, adj, weight)
    return agg, [labels[c] for c in refined]


def _leiden_pass(g0: _Graph, membership: list[int], gamma: float, rng: random.Random,
                 theta: float) -> list[int]:
    """One Leiden run from ``membership``; returns the membership of original nodes."""
    g = g0
    part = _Partition(g, list(membership))
    node_map = list(range(g0.n))  # original node -> node of current graph
    while True:
        _move_nodes_fast(g, part, gamma, rng)
        if len(part.comm_size) == g.n:
            break
        refined = _refine(g, part, gamma, rng, theta)
        agg, agg_of = _aggregate(g, refined)
        if agg.n == g.n:
            break
        # an aggregate node inherits the (unrefined) community of its members
        init = [0] * agg.n
        for u in range(g.n):
            init[agg_of[u]] = part.membership[u]
        node_map = [agg_of[x] for x in node_map]
        g = agg
        part = _Partition(g, init)
    return [part.membership[node_map[u]] for u in range(g0.n)]


def _canonical(membership: Sequence[int]) -> list[int]:
    relabel: dict[int, int] = {}
    return [relabel.setdefault(c, len(relabel)) for c in membership]


def _quality(g: _Graph, membership: Sequence[int], gamma: float) -> float:
    internal: dict[int, float] = {}
    degree: dict[int, float] = {}
    for u in range(g.n):
        c = membership[u]
        degree[c] = degree.get(c, 0.0) + g.degree[u]
        for v, w in g.adj[u].items():
            if membership[v] == c:
                internal[c] = internal.get(c, 0.0) + (2.0 * w if u == v else w)
    two_m = g.total
    return sum(internal.get(c, 0.0) / two_m - gamma * (k / two_m) ** 2 for c, k in degree.items())


def _merge_adjacent(g: _Graph, membership: Sequence[int], rng: random.Random) -> list[int] | None:
    """Merge the two communities joined by a random inter-community edge."""
    crossing = [(u, v) for u in range(g.n) for v in g.adj[u] if u < v and membership[u] != membership[v]]
    if not crossing:
        return None
    u, v = crossing[rng.randrange(len(crossing))]
    a, b = membership[u], membership[v]
    return [a if c == b else c for c in membership]


def _converge(g: _Graph, membership: list[int], gamma: float, rng: random.Random,
              theta: float, max_sweeps: int) -> list[int]:
    for _ in range(max(1, max_sweeps)):
        new = _canonical(_leiden_pass(g, membership, gamma, rng, theta))
        if new == membership:
            break
        membership = new
    return membership


def leiden(n: int, edges: Iterable[tuple[int, int]], resolution: float = 1.0,
           seed: int = 0, max_sweeps: int = 10, theta: float = 0.01,
           n_restarts: int = 16) -> list[int]:
    """Leiden partition of nodes ``0..n-1``; community ids in order of first node.

    Leiden passes are repeated from the previous result until the partition
    stops changing or ``max_sweeps`` passes have been made.  Each further
    restart merges two adjacent communities of the best partition found so
    far and converges again from there, keeping the result only if
    modularity improves.  This escapes local optima where a node can only
    change sides after two communities have been joined.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    g = _from_edges(n, ((u, v, 1.0) for u, v in edges))
    if g.total == 0:
        return list(range(n))
    rng = random.Random(seed)
    best = _converge(g, list(range(n)), resolution, rng, theta, max_sweeps)
    best_q = _quality(g, best, resolution)
    for _ in range(n_restarts - 1):
        start = _merge_adjacent(g, best, rng)
        if start is None:
            break
        cand = _converge(g, start, resolution, rng, theta, max_sweeps)
        q = _quality(g, cand, resolution)
        if q > best_q + 1e-12:
            best, best_q = cand, q
    return best


@dataclass
class HierCommunity:
    id: int
    level: int
    members: list[Hashable]
    parent: int | None


def hierarchical_leiden(
    nodes: Sequence[Hashable],
    edges: Sequence[tuple[Hashable, Hashable]],
    resolution: float = 1.0,
    max_community_size: int = 50,
    seed: int = 0,
    max_sweeps: int = 10,
    n_restarts: int = 16,
) -> list[HierCommunity]:
    """Level-0 Leiden partition, then recursive re-partitioning of oversized communities.

    Every level covers all nodes: a community that is small enough (or that
    Leiden cannot split) is carried to the next level unchanged as its own
    child.  Levels stop once no community exceeds ``max_community_size``.
    Ids are assigned level by level, communities ordered by their smallest
    member.
    """
    if max_community_size < 1:
        raise ValueError("max_community_size must be >= 1")
    order = sorted(nodes)
    index = {v: i for i, v in enumerate(order)}
    int_edges = [(index[u], index[v]) for u, v in edges]

    def partition(sub_nodes: list[int], salt: int) -> list[list[int]]:
        local = {v: i for i, v in enumerate(sub_nodes)}
        sub_edges = [(local[u], local[v]) for u, v in int_edges if u in local and v in local]
        memb = leiden(len(sub_nodes), sub_edges, resolution, seed + salt, max_sweeps,
                      n_restarts=n_restarts)
        groups: dict[int, list[int]] = {}
        for v, c in zip(sub_nodes, memb):
            groups.setdefault(c, []).append(v)
        return sorted(groups.values(), key=lambda g: g[0])

    result: list[HierCommunity] = []
    if not order:
        return result
    level_groups = [(grp, None) for grp in partition(list(range(len(order))), 0)]
    level = 0
    while True:
        ids = []
        for grp, parent in level_groups:
            cid = len(result)
            result.append(HierCommunity(cid, level, [order[i] for i in grp], parent))
            ids.append((cid, grp))
        oversized = [grp for _, grp in ids if len(grp) > max_community_size]
        if not oversized:
            break
        next_groups = []
        any_split = False
        for cid, grp in ids:
            if len(grp) > max_community_size:
                parts = partition(grp, cid + 1)
                any_split |= len(parts) > 1
                next_groups.extend((p, cid) for p in parts)
            else:
                next_groups.append((grp, cid))
        if not any_split:
            break
        level_groups = sorted(next_groups, key=lambda gp: gp[0][0])
        level += 1
    return result
