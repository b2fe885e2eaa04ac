"""Immutable simple graphs, triangle-free test instances and DIMACS ``.col`` I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class GraphError(ValueError):
    pass


class DuplicateEdge(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class IndexOutOfRange(GraphError):
    pass


class InvalidSpec(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True, eq=True)
class Graph:
    """Simple undirected graph on vertices ``0..vertex_count-1``.

    ``adjacency[u]`` is the ascending tuple of neighbours of ``u``. Instances
    are immutable and safe to share between concurrent runs.
    """

    vertex_count: int
    adjacency: tuple[tuple[int, ...], ...]
    max_degree: int = field(init=False)

    def __post_init__(self) -> None:
        if len(self.adjacency) != self.vertex_count:
            raise GraphError("adjacency length does not match vertex_count")
        object.__setattr__(
            self, "max_degree", max((len(a) for a in self.adjacency), default=0)
        )

    @property
    def n(self) -> int:
        return self.vertex_count

    def degree(self, u: int) -> int:
        return len(self.adjacency[u])

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u, nbrs in enumerate(self.adjacency) for v in nbrs if u < v]

    @property
    def edge_count(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """Adjacency as a CSR int32 matrix, used for vectorized neighbour counts."""
        n = self.vertex_count
        indptr = np.zeros(n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(a) for a in self.adjacency])
        indices = np.fromiter(
            (v for a in self.adjacency for v in a), dtype=np.int32, count=int(indptr[-1])
        )
        data = np.ones(len(indices), dtype=np.int32)
        return sp.csr_matrix((data, indices, indptr), shape=(n, n))

    @cached_property
    def edge_array(self) -> np.ndarray:
        """``(m, 2)`` int64 array of edges ``(u, v)`` with ``u < v``."""
        return np.array(self.edges(), dtype=np.int64).reshape(-1, 2)

    @cached_property
    def neighbor_sets(self) -> tuple[frozenset[int], ...]:
        return tuple(frozenset(a) for a in self.adjacency)


def build_graph(edges: Iterable[Sequence[int]], vertex_count: int) -> Graph:
    """Build a :class:`Graph`, rejecting self-loops, duplicates and bad indices."""
    if vertex_count < 0:
        raise IndexOutOfRange(f"negative vertex_count {vertex_count}")
    nbrs: list[set[int]] = [set() for _ in range(vertex_count)]
    for edge in edges:
        u, v = int(edge[0]), int(edge[1])
        if not (0 <= u < vertex_count and 0 <= v < vertex_count):
            raise IndexOutOfRange(f"edge ({u}, {v}) outside 0..{vertex_count - 1}")
        if u == v:
            raise SelfLoop(f"self-loop at vertex {u}")
        if v in nbrs[u]:
            raise DuplicateEdge(f"duplicate edge ({u}, {v})")
        nbrs[u].add(v)
        nbrs[v].add(u)
    return Graph(vertex_count, tuple(tuple(sorted(s)) for s in nbrs))


def is_triangle_free(g: Graph) -> bool:
    sets = g.neighbor_sets
    for u, nbrs in enumerate(g.adjacency):
        for v in nbrs:
            # each triangle is seen from its smallest edge; checking u<v is enough
            if u < v and not sets[u].isdisjoint(sets[v]):
                return False
    return True


# ---------------------------------------------------------------------------
# generators

FAMILIES = (
    "cycle",
    "complete_bipartite",
    "random_bipartite",
    "random_triangle_free",
    "regular_high_girth_attempt",
)


@dataclass(frozen=True)
class GraphFamilySpec:
    family: str
    n: int = 0
    degree_target: int = 0
    edge_probability: float | None = None
    seed: int = 0

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise InvalidSpec(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "cycle" and self.n < 4:
            # C3 is a triangle
            raise InvalidSpec("cycle needs n >= 4 to be triangle-free")
        if self.family == "complete_bipartite" and self.degree_target < 0:
            raise InvalidSpec("complete_bipartite needs degree_target >= 0")
        if self.family in ("random_bipartite", "random_triangle_free", "regular_high_girth_attempt"):
            if self.n < 1:
                raise InvalidSpec(f"{self.family} needs n >= 1")
        if self.family in ("random_bipartite", "random_triangle_free"):
            p = self._probability()
            if not 0.0 <= p <= 1.0:
                raise InvalidSpec(f"edge probability {p} outside [0, 1]")
        if self.family == "regular_high_girth_attempt":
            if not 0 <= self.degree_target < self.n:
                raise InvalidSpec("regular_high_girth_attempt needs 0 <= degree_target < n")
        if not 0 <= self.seed < 2**64:
            raise InvalidSpec("seed must be a 64-bit unsigned integer")

    def _probability(self) -> float:
        if self.edge_probability is not None:
            return float(self.edge_probability)
        if self.family == "random_bipartite":
            half = max(self.n // 2, 1)
            return self.degree_target / half
        return self.degree_target / max(self.n - 1, 1)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "n": self.n,
            "degree_target": self.degree_target,
            "edge_probability": self.edge_probability,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GraphFamilySpec":
        unknown = set(data) - {"family", "n", "degree_target", "edge_probability", "seed"}
        if unknown:
            raise InvalidSpec(f"unknown graph spec keys: {sorted(unknown)}")
        if "family" not in data:
            raise InvalidSpec("graph spec needs a 'family'")
        return cls(
            family=data["family"],
            n=int(data.get("n", 0)),
            degree_target=int(data.get("degree_target", 0)),
            edge_probability=(
                None if data.get("edge_probability") is None else float(data["edge_probability"])
            ),
            seed=int(data.get("seed", 0)),
        )


def cycle_graph(n: int) -> Graph:
    return build_graph([(i, (i + 1) % n) for i in range(n)], n)


def complete_bipartite(a: int, b: int | None = None) -> Graph:
    b = a if b is None else b
    return build_graph([(i, a + j) for i in range(a) for j in range(b)], a + b)


def _sample_pairs(rng: np.random.Generator, rows: range, cols_for, p: float) -> list[tuple[int, int]]:
    edges = []
    for u in rows:
        cols = cols_for(u)
        if len(cols) == 0:
            continue
        hits = cols[rng.random(len(cols)) < p]
        edges.extend((u, int(v)) for v in hits)
    return edges


def random_bipartite(n: int, p: float, seed: int) -> Graph:
    rng = np.random.default_rng(seed)
    left = n // 2
    right = np.arange(left, n)
    return build_graph(_sample_pairs(rng, range(left), lambda u: right, p), n)


def random_triangle_free(n: int, p: float, seed: int) -> Graph:
    """G(n, p) followed by keep-first repair.

    Edges are scanned in lexicographic order and an edge is dropped when it
    would close a triangle with edges already kept.
    """
    rng = np.random.default_rng(seed)
    candidates = _sample_pairs(rng, range(n), lambda u: np.arange(u + 1, n), p)
    nbrs: list[set[int]] = [set() for _ in range(n)]
    kept = []
    for u, v in candidates:
        if nbrs[u].isdisjoint(nbrs[v]):
            nbrs[u].add(v)
            nbrs[v].add(u)
            kept.append((u, v))
    return build_graph(kept, n)


def regular_high_girth_attempt(n: int, degree: int, seed: int, max_failures: int = 50) -> Graph:
    """Best-effort ``degree``-regular graph with girth at least 5.

    Repeatedly joins two random vertices of deficient degree at distance
    greater than 3. Stops after ``max_failures`` consecutive rejected
    proposals, so the result may fall short of regularity.
    """
    rng = np.random.default_rng(seed)
    nbrs: list[set[int]] = [set() for _ in range(n)]
    deficient = list(range(n)) if degree > 0 else []
    failures = 0

    def within_three(u: int, v: int) -> bool:
        if v in nbrs[u]:
            return True
        ball2 = set(nbrs[u])
        for w in nbrs[u]:
            ball2 |= nbrs[w]
        if v in ball2:
            return True
        return any(x in ball2 for x in nbrs[v])

    while len(deficient) >= 2 and failures < max_failures:
        i, j = rng.choice(len(deficient), size=2, replace=False)
        u, v = deficient[i], deficient[j]
        if within_three(u, v):
            failures += 1
            continue
        failures = 0
        nbrs[u].add(v)
        nbrs[v].add(u)
        deficient = [w for w in deficient if len(nbrs[w]) < degree]
    return Graph(n, tuple(tuple(sorted(s)) for s in nbrs))


def generate(spec: GraphFamilySpec) -> Graph:
    """Generate a triangle-free graph; a pure function of ``spec``."""
    spec.validate()
    if spec.family == "cycle":
        return cycle_graph(spec.n)
    if spec.family == "complete_bipartite":
        return complete_bipartite(spec.degree_target)
    if spec.family == "random_bipartite":
        return random_bipartite(spec.n, spec._probability(), spec.seed)
    if spec.family == "random_triangle_free":
        return random_triangle_free(spec.n, spec._probability(), spec.seed)
    return regular_high_girth_attempt(spec.n, spec.degree_target, spec.seed)


# ---------------------------------------------------------------------------
# DIMACS

def write_dimacs(g: Graph, comment: str | None = None) -> str:
    lines = []
    if comment:
        lines.extend(f"c {line}" for line in comment.splitlines())
    edges = g.edges()
    lines.append(f"p edge {g.vertex_count} {len(edges)}")
    lines.extend(f"e {u + 1} {v + 1}" for u, v in edges)
    return "\n".join(lines) + "\n"


def read_dimacs(text: str) -> Graph:
    """Parse DIMACS ``.col`` text (``p edge N M`` header, 1-based ``e u v`` lines)."""
    n = None
    edges: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] == "c":
            continue
        parts = line.split()
        if parts[0] == "p":
            if n is not None:
                raise ParseError("second problem line", lineno)
            if len(parts) != 4 or parts[1] not in ("edge", "col"):
                raise ParseError(f"malformed problem line {line!r}", lineno)
            try:
                n, declared = int(parts[2]), int(parts[3])
            except ValueError:
                raise ParseError(f"non-integer counts in {line!r}", lineno) from None
            if n < 0 or declared < 0:
                raise ParseError("negative counts", lineno)
        elif parts[0] == "e":
            if n is None:
                raise ParseError("edge before problem line", lineno)
            if len(parts) != 3:
                raise ParseError(f"malformed edge line {line!r}", lineno)
            try:
                u, v = int(parts[1]), int(parts[2])
            except ValueError:
                raise ParseError(f"non-integer vertex in {line!r}", lineno) from None
            if not (1 <= u <= n and 1 <= v <= n):
                raise ParseError(f"vertex index out of range 1..{n} in {line!r}", lineno)
            if u == v:
                raise ParseError(f"self-loop at vertex {u}", lineno)
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ParseError(f"duplicate edge {key}", lineno)
            seen.add(key)
            edges.append((u - 1, v - 1))
        else:
            raise ParseError(f"unknown line type {parts[0]!r}", lineno)
    if n is None:
        raise ParseError("missing 'p edge N M' line", max(len(text.splitlines()), 1))
    # the declared edge count is not enforced; many published instances get it wrong
    return build_graph(edges, n)
