"""Boykov-Kolmogorov max-flow / min-cut on sparse unit graphs.

Two search trees grow from the terminals (S from the source, T from the
sink) through non-saturated residual arcs. When they touch, the connecting
path is augmented by its bottleneck. Nodes cut off from their tree become
orphans, and the adoption stage either re-attaches them to a valid parent or
frees them. The run stops when no active node is left. At that point the S
tree is exactly the set of nodes reachable from the source in the residual
graph.

Node labels: ``True`` for the source side (foreground).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

FREE, SOURCE_TREE, SINK_TREE = 0, 1, 2
TERMINAL, ORPHAN, NO_PARENT = -1, -2, -3
_INF_DIST = np.iinfo(np.int64).max // 4


@numba.njit(cache=True)
def _bk(first, head, sister, rcap, tr, tree, parent):
    n = tr.shape[0]
    ts = np.zeros(n, np.int64)
    dist = np.zeros(n, np.int64)
    cap = n + 1
    queue = np.empty(cap, np.int64)
    inq = np.zeros(n, np.bool_)
    qh = 0
    qn = 0
    orphans = np.empty(cap, np.int64)
    oh = 0
    on = 0
    flow = 0.0
    time = 0

    for i in range(n):
        if tr[i] > 0:
            tree[i] = SOURCE_TREE
        elif tr[i] < 0:
            tree[i] = SINK_TREE
        else:
            continue
        parent[i] = TERMINAL
        dist[i] = 1
        queue[(qh + qn) % cap] = i
        qn += 1
        inq[i] = True

    while True:
        i = -1
        while qn > 0:
            c = queue[qh]
            qh = (qh + 1) % cap
            qn -= 1
            inq[c] = False
            if parent[c] != NO_PARENT:
                i = c
                break
        if i < 0:
            break

        # growth
        x = -1
        y = -1
        bridge = -1
        if tree[i] == SOURCE_TREE:
            for a in range(first[i], first[i + 1]):
                if rcap[a] > 0:
                    j = head[a]
                    if tree[j] == FREE:
                        tree[j] = SOURCE_TREE
                        parent[j] = sister[a]
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
                        if not inq[j]:
                            queue[(qh + qn) % cap] = j
                            qn += 1
                            inq[j] = True
                    elif tree[j] == SINK_TREE:
                        x = i
                        y = j
                        bridge = a
                        break
                    elif ts[j] <= ts[i] and dist[j] > dist[i]:
                        parent[j] = sister[a]
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
        else:
            for a in range(first[i], first[i + 1]):
                if rcap[sister[a]] > 0:
                    j = head[a]
                    if tree[j] == FREE:
                        tree[j] = SINK_TREE
                        parent[j] = sister[a]
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
                        if not inq[j]:
                            queue[(qh + qn) % cap] = j
                            qn += 1
                            inq[j] = True
                    elif tree[j] == SOURCE_TREE:
                        x = j
                        y = i
                        bridge = sister[a]
                        break
                    elif ts[j] <= ts[i] and dist[j] > dist[i]:
                        parent[j] = sister[a]
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
        if bridge < 0:
            continue

        # i may still have unexplored arcs
        if not inq[i]:
            queue[(qh + qn) % cap] = i
            qn += 1
            inq[i] = True
        time += 1

        # augmentation
        b = rcap[bridge]
        k = x
        while True:
            p = parent[k]
            if p == TERMINAL:
                b = min(b, tr[k])
                break
            b = min(b, rcap[sister[p]])
            k = head[p]
        k = y
        while True:
            p = parent[k]
            if p == TERMINAL:
                b = min(b, -tr[k])
                break
            b = min(b, rcap[p])
            k = head[p]

        rcap[bridge] -= b
        rcap[sister[bridge]] += b
        k = x
        while True:
            p = parent[k]
            if p == TERMINAL:
                tr[k] -= b
                if tr[k] == 0:
                    parent[k] = ORPHAN
                    orphans[(oh + on) % cap] = k
                    on += 1
                break
            rcap[sister[p]] -= b
            rcap[p] += b
            nxt = head[p]
            if rcap[sister[p]] == 0:
                parent[k] = ORPHAN
                orphans[(oh + on) % cap] = k
                on += 1
            k = nxt
        k = y
        while True:
            p = parent[k]
            if p == TERMINAL:
                tr[k] += b
                if tr[k] == 0:
                    parent[k] = ORPHAN
                    orphans[(oh + on) % cap] = k
                    on += 1
                break
            rcap[p] -= b
            rcap[sister[p]] += b
            nxt = head[p]
            if rcap[p] == 0:
                parent[k] = ORPHAN
                orphans[(oh + on) % cap] = k
                on += 1
            k = nxt
        flow += b

        # adoption
        while on > 0:
            o = orphans[oh]
            oh = (oh + 1) % cap
            on -= 1
            t = tree[o]
            best = NO_PARENT
            dmin = _INF_DIST
            for a in range(first[o], first[o + 1]):
                if t == SOURCE_TREE:
                    ok = rcap[sister[a]] > 0
                else:
                    ok = rcap[a] > 0
                if not ok:
                    continue
                j = head[a]
                if tree[j] != t or parent[j] == NO_PARENT:
                    continue
                d = 0
                k = j
                while True:
                    if ts[k] == time:
                        d += dist[k]
                        break
                    p = parent[k]
                    d += 1
                    if p == TERMINAL:
                        ts[k] = time
                        dist[k] = 1
                        break
                    if p == ORPHAN:
                        d = _INF_DIST
                        break
                    k = head[p]
                if d < _INF_DIST:
                    if d < dmin:
                        best = a
                        dmin = d
                    k = j
                    while ts[k] != time:
                        ts[k] = time
                        dist[k] = d
                        d -= 1
                        k = head[parent[k]]
            if best != NO_PARENT:
                parent[o] = best
                ts[o] = time
                dist[o] = dmin + 1
                continue
            for a in range(first[o], first[o + 1]):
                j = head[a]
                if tree[j] != t or parent[j] == NO_PARENT:
                    continue
                if t == SOURCE_TREE:
                    ok = rcap[sister[a]] > 0
                else:
                    ok = rcap[a] > 0
                if ok and not inq[j]:
                    queue[(qh + qn) % cap] = j
                    qn += 1
                    inq[j] = True
                pj = parent[j]
                if pj >= 0 and head[pj] == o:
                    parent[j] = ORPHAN
                    orphans[(oh + on) % cap] = j
                    on += 1
            tree[o] = FREE
            parent[o] = NO_PARENT
    return flow


@dataclass
class FlowGraph:
    """Unit graph with terminal (T-link) and neighbour (N-link) capacities.

    ``edges`` holds undirected pairs ``(u, v)``; ``edge_cap`` is either one
    symmetric capacity per edge or a ``(m, 2)`` array of ``(u->v, v->u)``.
    Terminal capacities may be any finite reals: each unit's pair is shifted
    by a common constant so both are non-negative, which leaves the minimum
    cut unchanged and is added back to the reported flow.

    After :meth:`solve`, ``tree`` (0 free, 1 S, 2 T) and ``parent`` expose the
    final search-tree state.
    """

    source_cap: np.ndarray
    sink_cap: np.ndarray
    edges: np.ndarray
    edge_cap: np.ndarray
    tree: np.ndarray = field(default=None, repr=False)
    parent: np.ndarray = field(default=None, repr=False)
    flow: float = field(default=None, repr=False)

    def __post_init__(self):
        self.source_cap = np.asarray(self.source_cap, np.float64).ravel()
        self.sink_cap = np.asarray(self.sink_cap, np.float64).ravel()
        if self.source_cap.shape != self.sink_cap.shape:
            raise ValueError("source and sink capacity arrays differ in length")
        self.edges = np.asarray(self.edges, np.int64).reshape(-1, 2)
        cap = np.asarray(self.edge_cap, np.float64)
        if cap.ndim == 1:
            cap = np.repeat(cap[:, None], 2, axis=1)
        if cap.shape != (len(self.edges), 2):
            raise ValueError("edge capacity shape does not match edges")
        if (cap < 0).any() or not np.isfinite(cap).all():
            raise ValueError("N-link capacities must be finite and non-negative")
        if not (np.isfinite(self.source_cap).all() and np.isfinite(self.sink_cap).all()):
            raise ValueError("T-link capacities must be finite")
        self.edge_cap = cap

    @property
    def n_units(self) -> int:
        return self.source_cap.shape[0]

    def _csr(self):
        n, m = self.n_units, len(self.edges)
        tails = np.empty(2 * m, np.int64)
        heads = np.empty(2 * m, np.int64)
        tails[0::2], heads[0::2] = self.edges[:, 0], self.edges[:, 1]
        tails[1::2], heads[1::2] = self.edges[:, 1], self.edges[:, 0]
        caps = self.edge_cap.reshape(-1).copy()
        sister = np.arange(2 * m) ^ 1
        order = np.argsort(tails, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(2 * m)
        first = np.zeros(n + 1, np.int64)
        np.cumsum(np.bincount(tails, minlength=n), out=first[1:])
        return first, heads[order], rank[sister[order]], caps[order]

    def solve(self):
        """Run BK; return ``(labels, flow_value)`` with labels True on the source side."""
        first, head, sister, rcap = self._csr()
        src, snk = self.source_cap, self.sink_cap
        base = np.minimum(src, snk)
        tr = src - snk
        self.tree = np.zeros(self.n_units, np.int8)
        self.parent = np.full(self.n_units, NO_PARENT, np.int64)
        extra = _bk(first, head, sister, rcap, tr, self.tree, self.parent)
        self.flow = float(base.sum() + extra)
        return self.tree == SOURCE_TREE, self.flow


def max_flow(source_cap, sink_cap, edges, edge_cap):
    return FlowGraph(source_cap, sink_cap, edges, edge_cap).solve()


def cut_value(labels, source_cap, sink_cap, edges, edge_cap) -> float:
    """Cost of a labelling: severed T-links plus N-links from S side to T side."""
    labels = np.asarray(labels, bool)
    edges = np.asarray(edges, np.int64).reshape(-1, 2)
    cap = np.asarray(edge_cap, np.float64)
    if cap.ndim == 1:
        cap = np.repeat(cap[:, None], 2, axis=1)
    total = np.where(labels, sink_cap, source_cap).sum()
    u, v = edges[:, 0], edges[:, 1]
    total += cap[labels[u] & ~labels[v], 0].sum()
    total += cap[labels[v] & ~labels[u], 1].sum()
    return float(total)
