"""Stage dependency graph derived from outs -> deps."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from ..errors import CycleDetected
from .spec import PipelineSpec, paths_overlap


@dataclass(frozen=True)
class Dag:
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    order: tuple[str, ...]

    def predecessors(self, name: str) -> list[str]:
        return sorted(a for a, b in self.edges if b == name)

    def successors(self, name: str) -> list[str]:
        return sorted(b for a, b in self.edges if a == name)

    def descendants(self, name: str) -> set[str]:
        out: set[str] = set()
        stack = [name]
        while stack:
            for nxt in self.successors(stack.pop()):
                if nxt not in out:
                    out.add(nxt)
                    stack.append(nxt)
        return out

    def ancestors(self, name: str) -> set[str]:
        out: set[str] = set()
        stack = [name]
        while stack:
            for prev in self.predecessors(stack.pop()):
                if prev not in out:
                    out.add(prev)
                    stack.append(prev)
        return out

    def ranks(self) -> dict[str, int]:
        """1-based layer of each stage: longest path from any source."""
        rank: dict[str, int] = {}
        for n in self.order:
            preds = self.predecessors(n)
            rank[n] = 1 + max((rank[p] for p in preds), default=0)
        return rank

    def plan_text(self) -> str:
        return "\n".join(self.order)


def derive_edges(stages) -> list[tuple[str, str]]:
    """A -> B whenever an out of A is (or contains, or lies inside) a dep of B."""
    edges = set()
    for a in stages:
        for b in stages:
            if any(paths_overlap(o, d) for o in a.outs for d in b.deps):
                edges.add((a.name, b.name))
    return sorted(edges)


def _find_cycle(nodes: list[str], edges: list[tuple[str, str]]) -> list[str] | None:
    succ: dict[str, list[str]] = {n: [] for n in nodes}
    for a, b in edges:
        succ[a].append(b)
    for n in succ:
        succ[n].sort()
    WHITE, GREY, BLACK = 0, 1, 2
    color = {n: WHITE for n in nodes}

    for start in sorted(nodes):
        if color[start] != WHITE:
            continue
        path = [start]
        iters = [iter(succ[start])]
        color[start] = GREY
        while iters:
            nxt = next(iters[-1], None)
            if nxt is None:
                color[path.pop()] = BLACK
                iters.pop()
                continue
            if color[nxt] == GREY:
                return path[path.index(nxt):] + [nxt]
            if color[nxt] == WHITE:
                color[nxt] = GREY
                path.append(nxt)
                iters.append(iter(succ[nxt]))
    return None


def build_dag(spec: PipelineSpec) -> Dag:
    """Derive edges, reject cycles (reporting the full path, e.g. [A, B, A])
    and compute a topological order with lexicographic tie-break."""
    nodes = [s.name for s in spec.stages]
    edges = derive_edges(spec.stages)
    cycle = _find_cycle(nodes, edges)
    if cycle:
        raise CycleDetected(cycle)
    indeg = {n: 0 for n in nodes}
    succ: dict[str, list[str]] = {n: [] for n in nodes}
    for a, b in edges:
        indeg[b] += 1
        succ[a].append(b)
    heap = [n for n, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        n = heapq.heappop(heap)
        order.append(n)
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                heapq.heappush(heap, m)
    return Dag(tuple(nodes), tuple(edges), tuple(order))
