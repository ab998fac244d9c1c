"""Exact s-t min-cut via a Boykov-Kolmogorov style augmenting-path search.

Terminal capacities are folded per node (the overlapping part of source and
sink capacity is pre-saturated into the flow), so the search trees operate
on the pairwise arcs only. After solve(), a node is on the source side iff
it sits in the source search tree, which equals residual reachability from
the source; unreachable nodes (including tie cases) fall to the sink side.
"""

from __future__ import annotations

from collections import deque

from .errors import InvalidArgument, InvalidGraph

FREE = 0
SOURCE_TREE = 1
SINK_TREE = 2

PARENT_NONE = -1
PARENT_TERMINAL = -2
PARENT_ORPHAN = -3


class MinCutGraph:
    def __init__(self, num_nodes: int):
        if num_nodes < 0:
            raise InvalidArgument("node count must be >= 0")
        self.n = num_nodes
        self.adj: list[list[int]] = [[] for _ in range(num_nodes)]
        self.arc_head: list[int] = []
        self.arc_cap: list[float] = []
        # > 0: residual source->node capacity; < 0: node->sink is -tr_cap
        self.tr_cap = [0.0] * num_nodes
        self.flow = 0.0
        self.tree = [FREE] * num_nodes
        self._solved = False

    def add_terminal(self, node: int, cap_source: float, cap_sink: float) -> None:
        if cap_source < 0 or cap_sink < 0:
            raise InvalidGraph("terminal capacities must be >= 0")
        d = self.tr_cap[node]
        if d > 0:
            cap_source += d
        else:
            cap_sink -= d
        overlap = min(cap_source, cap_sink)
        self.flow += overlap
        self.tr_cap[node] = cap_source - cap_sink

    def add_edge(self, i: int, j: int, cap_ij: float, cap_ji: float) -> None:
        if i == j:
            raise InvalidGraph("self-loops are not allowed")
        if cap_ij < 0 or cap_ji < 0:
            raise InvalidGraph("edge capacities must be >= 0")
        a = len(self.arc_head)
        self.arc_head.extend((j, i))
        self.arc_cap.extend((float(cap_ij), float(cap_ji)))
        self.adj[i].append(a)
        self.adj[j].append(a + 1)

    def solve(self) -> float:
        self.parent = [PARENT_NONE] * self.n
        self.tree = [FREE] * self.n
        self.orphans: deque[int] = deque()
        self.active: deque[int] = deque()
        self._in_active = [False] * self.n
        for v in range(self.n):
            if self.tr_cap[v] > 0:
                self.tree[v] = SOURCE_TREE
                self.parent[v] = PARENT_TERMINAL
                self._activate(v)
            elif self.tr_cap[v] < 0:
                self.tree[v] = SINK_TREE
                self.parent[v] = PARENT_TERMINAL
                self._activate(v)
        while True:
            conn = self._grow()
            if conn is None:
                break
            self._augment(conn)
            self._adopt()
        self._solved = True
        return self.flow

    def is_source_side(self, node: int) -> bool:
        if not self._solved:
            raise InvalidArgument("call solve() before querying the cut")
        return self.tree[node] == SOURCE_TREE

    def _activate(self, v: int) -> None:
        if not self._in_active[v]:
            self._in_active[v] = True
            self.active.append(v)

    def _grow(self):
        """Expand both trees; return the connecting source->sink arc of an
        augmenting path, or None when none remains."""
        while self.active:
            i = self.active[0]
            ti = self.tree[i]
            if ti == FREE:
                self.active.popleft()
                self._in_active[i] = False
                continue
            for a in self.adj[i]:
                residual = self.arc_cap[a] if ti == SOURCE_TREE \
                    else self.arc_cap[a ^ 1]
                if residual <= 0.0:
                    continue
                j = self.arc_head[a]
                tj = self.tree[j]
                if tj == FREE:
                    self.tree[j] = ti
                    self.parent[j] = a ^ 1  # arc j -> i
                    self._activate(j)
                elif tj != ti:
                    return a if ti == SOURCE_TREE else a ^ 1
            self.active.popleft()
            self._in_active[i] = False
        return None

    def _augment(self, conn: int) -> None:
        cap = self.arc_cap
        head = self.arc_head
        parent = self.parent

        bottleneck = cap[conn]
        i = head[conn ^ 1]
        while parent[i] != PARENT_TERMINAL:
            a = parent[i]
            bottleneck = min(bottleneck, cap[a ^ 1])
            i = head[a]
        bottleneck = min(bottleneck, self.tr_cap[i])
        j = head[conn]
        while parent[j] != PARENT_TERMINAL:
            a = parent[j]
            bottleneck = min(bottleneck, cap[a])
            j = head[a]
        bottleneck = min(bottleneck, -self.tr_cap[j])

        self.flow += bottleneck
        cap[conn] -= bottleneck
        cap[conn ^ 1] += bottleneck

        i = head[conn ^ 1]
        while parent[i] != PARENT_TERMINAL:
            a = parent[i]
            cap[a] += bottleneck
            cap[a ^ 1] -= bottleneck
            nxt = head[a]
            if cap[a ^ 1] <= 0.0:
                parent[i] = PARENT_ORPHAN
                self.orphans.append(i)
            i = nxt
        self.tr_cap[i] -= bottleneck
        if self.tr_cap[i] <= 0.0:
            parent[i] = PARENT_ORPHAN
            self.orphans.append(i)

        j = head[conn]
        while parent[j] != PARENT_TERMINAL:
            a = parent[j]
            cap[a] -= bottleneck
            cap[a ^ 1] += bottleneck
            nxt = head[a]
            if cap[a] <= 0.0:
                parent[j] = PARENT_ORPHAN
                self.orphans.append(j)
            j = nxt
        self.tr_cap[j] += bottleneck
        if self.tr_cap[j] >= 0.0:
            parent[j] = PARENT_ORPHAN
            self.orphans.append(j)

    def _rooted(self, q: int) -> bool:
        parent = self.parent
        head = self.arc_head
        while True:
            pa = parent[q]
            if pa == PARENT_TERMINAL:
                return True
            if pa < 0:
                return False
            q = head[pa]

    def _adopt(self) -> None:
        while self.orphans:
            p = self.orphans.popleft()
            tp = self.tree[p]
            found = False
            for a in self.adj[p]:
                j = self.arc_head[a]
                if self.tree[j] != tp:
                    continue
                residual = self.arc_cap[a ^ 1] if tp == SOURCE_TREE \
                    else self.arc_cap[a]
                if residual <= 0.0:
                    continue
                if self._rooted(j):
                    self.parent[p] = a  # arc p -> new parent j
                    found = True
                    break
            if found:
                continue
            for a in self.adj[p]:
                j = self.arc_head[a]
                if self.tree[j] != tp:
                    continue
                residual = self.arc_cap[a ^ 1] if tp == SOURCE_TREE \
                    else self.arc_cap[a]
                if residual > 0.0:
                    self._activate(j)
                if self.parent[j] == (a ^ 1):  # j's parent was p
                    self.parent[j] = PARENT_ORPHAN
                    self.orphans.append(j)
            self.tree[p] = FREE
            self.parent[p] = PARENT_NONE
