"""Reference colorers and the propriety check."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Sequence

from .graph import Graph


class UncoloredVertex(ValueError):
    pass


@dataclass(frozen=True)
class Coloring:
    colors: tuple[int, ...]
    num_colors_used: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "colors", tuple(int(c) for c in self.colors))
        object.__setattr__(self, "num_colors_used", len({c for c in self.colors if c >= 0}))

    def to_dict(self) -> dict:
        return {"colors": list(self.colors), "num_colors_used": self.num_colors_used}


def verify_proper(g: Graph, coloring: Coloring | Sequence[int]) -> bool:
    colors = coloring.colors if isinstance(coloring, Coloring) else tuple(coloring)
    if len(colors) != g.vertex_count:
        raise UncoloredVertex(f"expected {g.vertex_count} colors, got {len(colors)}")
    for u, c in enumerate(colors):
        if c is None or c < 0:
            raise UncoloredVertex(f"vertex {u} has no color")
    return all(colors[u] != colors[v] for u, v in g.edges())


def _smallest_free(taken: set[int]) -> int:
    c = 0
    while c in taken:
        c += 1
    return c


def greedy_color(g: Graph, order: Sequence[int] | None = None) -> Coloring:
    """First-fit coloring along ``order`` (default: index order); at most Δ+1 colors."""
    order = range(g.vertex_count) if order is None else order
    if sorted(order) != list(range(g.vertex_count)):
        raise ValueError("order must be a permutation of the vertices")
    colors = [-1] * g.vertex_count
    for u in order:
        colors[u] = _smallest_free({colors[v] for v in g.adjacency[u]})
    return Coloring(tuple(colors))


def dsatur_color(g: Graph) -> Coloring:
    """DSATUR: pick the vertex of highest saturation, then highest degree, then
    lowest index, and give it the smallest free color."""
    n = g.vertex_count
    colors = [-1] * n
    seen: list[set[int]] = [set() for _ in range(n)]
    heap = [(0, -g.degree(u), u) for u in range(n)]
    heapq.heapify(heap)
    while heap:
        neg_sat, _, u = heapq.heappop(heap)
        if colors[u] >= 0 or -neg_sat != len(seen[u]):
            continue  # stale entry
        c = _smallest_free(seen[u])
        colors[u] = c
        for v in g.adjacency[u]:
            if colors[v] < 0 and c not in seen[v]:
                seen[v].add(c)
                heapq.heappush(heap, (-len(seen[v]), -g.degree(v), v))
    return Coloring(tuple(colors))
