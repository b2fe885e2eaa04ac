"""Round-based semi-random coloring of triangle-free graphs.

Each round ``t < t1`` runs three phases over the uncolored vertices:

* Phase I: every (u, c) with c in the palette of u is tentatively assigned
  independently with probability ``p_t = min(1, 1/(4 d_t))``.
* Phase II: u drops every color tentatively assigned to a neighbour, then
  keeps each remaining color with probability
  ``min(1, exp(-1/2) / Pr[no neighbour assigned c])`` so that every color
  survives with probability exactly ``exp(-1/2)`` (when that is attainable).
  A vertex holding a surviving color it was assigned is colored with the
  smallest such color.
* Phase III: colors whose conflict degree ``d_{t+1}(u, c)`` reaches
  ``2 gamma d_{t+1}`` are discarded.

Palettes are stored as a boolean ``n x num_colors`` matrix and neighbour
counts are sparse matrix products, so a round costs a few passes over the
edges.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rng as rngmod
from .averaging import removal_average_bound
from .baselines import Coloring, verify_proper
from .graph import Graph, is_triangle_free
from .schedule import EXP_HALF, DegenerateSchedule, Schedule, ScheduleParams, build_schedule

DESIRED_FREE = EXP_HALF
DEGENERATE_ALPHA_EPS = 1e-9


class NotTriangleFree(ValueError):
    pass


class InvariantViolation(AssertionError):
    pass


class EmptyPalette(RuntimeError):
    """An uncolored vertex lost its whole palette; ``state`` and ``traces``
    hold the run up to and including the failing round."""

    def __init__(self, vertex: int, round: int, state=None, traces=None):
        super().__init__(f"palette of vertex {vertex} emptied in round {round}")
        self.vertex = vertex
        self.round = round
        self.state = state
        self.traces = traces or []


class CompletionFailure(RuntimeError):
    def __init__(self, conflicts_remaining: int, attempts: int):
        super().__init__(f"completion failed after {attempts} attempt(s); {conflicts_remaining} conflicted vertices")
        self.conflicts_remaining = conflicts_remaining
        self.attempts = attempts


@dataclass
class ColoringState:
    graph: Graph
    palettes: np.ndarray  # bool, shape (n, num_colors)
    color: np.ndarray  # int64, -1 while uncolored
    round: int = 0

    @property
    def num_colors(self) -> int:
        return self.palettes.shape[1]

    @property
    def uncolored_mask(self) -> np.ndarray:
        return self.color < 0

    @property
    def uncolored(self) -> set[int]:
        return set(np.flatnonzero(self.color < 0).tolist())

    def palette(self, u: int) -> set[int]:
        return set(np.flatnonzero(self.palettes[u]).tolist())

    def permanent_color(self, u: int) -> int | None:
        c = int(self.color[u])
        return None if c < 0 else c

    def active_palettes(self) -> np.ndarray:
        """Palettes restricted to uncolored vertices (colored rows zeroed)."""
        return self.palettes & self.uncolored_mask[:, None]

    def copy(self) -> "ColoringState":
        return ColoringState(self.graph, self.palettes.copy(), self.color.copy(), self.round)


@dataclass
class RoundOutcome:
    tentative: np.ndarray
    removed_conflict: int = 0
    removed_equalize: int = 0
    newly_colored: list[int] = field(default_factory=list)
    removed_cleanup: int = 0
    palette_emptied: list[int] = field(default_factory=list)

    def counters(self) -> dict:
        return {
            "assigned": int(self.tentative.sum()),
            "removed_conflict": self.removed_conflict,
            "removed_equalize": self.removed_equalize,
            "newly_colored": len(self.newly_colored),
            "removed_cleanup": self.removed_cleanup,
            "palette_emptied": len(self.palette_emptied),
        }


@dataclass
class CleanupReport:
    """Per-vertex quantities of one cleanup phase (rows of colored vertices are unused)."""

    d_next: np.ndarray  # d_{t+1}(u, c) on the post-Phase-II state
    size_before: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    threshold: np.ndarray
    mu_before: np.ndarray
    mu_after: np.ndarray
    removed: np.ndarray


@dataclass
class RoundTrace:
    t: int
    predicted: dict
    measured: dict
    counters: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "predicted": self.predicted,
            "measured": self.measured,
            "counters": self.counters,
            "checks": self.checks,
        }


@dataclass(frozen=True)
class CompletionPolicy:
    strategy: str = "retry"
    max_attempts: int = 50
    resample_rounds: int = 10

    STRATEGIES = ("single_shot", "retry", "local_resample", "greedy_fallback")

    def __post_init__(self) -> None:
        if self.strategy not in self.STRATEGIES:
            raise ValueError(f"unknown completion strategy {self.strategy!r}")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.resample_rounds < 0:
            raise ValueError("resample_rounds must be >= 0")

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "max_attempts": self.max_attempts, "resample_rounds": self.resample_rounds}


# ---------------------------------------------------------------------------
# state and counts

def init_state(g: Graph, num_colors: int) -> ColoringState:
    if num_colors < 1:
        raise ValueError("num_colors must be >= 1")
    return ColoringState(
        graph=g,
        palettes=np.ones((g.vertex_count, num_colors), dtype=bool),
        color=np.full(g.vertex_count, -1, dtype=np.int64),
        round=0,
    )


def conflict_degrees(state: ColoringState) -> np.ndarray:
    """``d(u, c)``: uncolored neighbours of u whose palette holds c, for every row."""
    return np.asarray(state.graph.matrix @ state.active_palettes().astype(np.int32))


def vertex_averages(state: ColoringState, degrees: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Palette sizes and ``d(u)`` (mean conflict degree over the palette; 0 if empty)."""
    degrees = conflict_degrees(state) if degrees is None else degrees
    sizes = state.palettes.sum(axis=1)
    totals = (degrees * state.palettes).sum(axis=1)
    avg = np.divide(totals, sizes, out=np.zeros(len(sizes), dtype=float), where=sizes > 0)
    return sizes, avg


def _activation(schedule: Schedule, t: int) -> float:
    if not 0 <= t < len(schedule.activation_p):
        raise ValueError(f"round {t} outside the schedule (t1={schedule.t1})")
    return schedule.activation_p[t]


def free_probabilities(state: ColoringState, schedule: Schedule, degrees: np.ndarray | None = None) -> np.ndarray:
    """``Pr[no neighbour is assigned c] = (1 - p_t)^{d_t(u,c)}`` from the round-start state."""
    p = _activation(schedule, state.round)
    degrees = conflict_degrees(state) if degrees is None else degrees
    return np.power(1.0 - p, degrees.astype(float))


def exact_free_probability(state: ColoringState, u: int, c: int, schedule: Schedule) -> float:
    if not state.palettes[u, c]:
        raise ValueError(f"color {c} is not in the palette of vertex {u}")
    p = _activation(schedule, state.round)
    d = sum(1 for v in state.graph.adjacency[u] if state.color[v] < 0 and state.palettes[v, c])
    return (1.0 - p) ** d


# ---------------------------------------------------------------------------
# phases

def phase1_assign(state: ColoringState, schedule: Schedule, rng: rngmod.StreamRNG) -> np.ndarray:
    p = _activation(schedule, state.round)
    draws = rng.uniform_grid((state.round, rngmod.PHASE_ASSIGN), state.graph.vertex_count, state.num_colors)
    return (draws < p) & state.active_palettes()


def phase2_resolve(
    state: ColoringState, tentative: np.ndarray, schedule: Schedule, rng: rngmod.StreamRNG
) -> tuple[ColoringState, RoundOutcome]:
    g = state.graph
    active = state.active_palettes()
    pr_free = free_probabilities(state, schedule)

    # II.1: a color assigned to any neighbour leaves the palette
    taken_nearby = np.asarray(g.matrix @ tentative.astype(np.int32)) > 0
    conflict = active & taken_nearby
    pal = active & ~conflict

    # II.2: equalize survival at exp(-1/2)
    with np.errstate(divide="ignore"):
        keep = np.minimum(1.0, DESIRED_FREE / pr_free)
    draws = rng.uniform_grid((state.round, rngmod.PHASE_EQUALIZE), g.vertex_count, state.num_colors)
    equalized = pal & (draws >= keep)
    pal &= ~equalized

    winners = pal & tentative
    newly = np.flatnonzero(winners.any(axis=1))
    color = state.color.copy()
    color[newly] = np.argmax(winners[newly], axis=1)

    uncolored = state.uncolored_mask
    palettes = np.where(uncolored[:, None], pal, state.palettes)
    out = ColoringState(g, palettes, color, state.round)
    outcome = RoundOutcome(
        tentative=tentative,
        removed_conflict=int(conflict.sum()),
        removed_equalize=int(equalized.sum()),
        newly_colored=newly.tolist(),
    )
    return out, outcome


def phase3_cleanup(state: ColoringState, schedule: Schedule) -> tuple[ColoringState, CleanupReport]:
    """Discard colors with ``d_{t+1}(u,c) >= 2 gamma d_{t+1}``; advances the round."""
    t = state.round
    d_next, s_next = schedule.d_seq[t + 1], schedule.s_seq[t + 1]
    uncolored = state.uncolored_mask
    degrees = conflict_degrees(state)
    sizes, mu = vertex_averages(state, degrees)

    alpha = np.clip(1.0 - sizes / s_next, 0.0, 0.5)
    slack = 1.0 - 2.0 * alpha
    ok = slack > DEGENERATE_ALPHA_EPS
    gamma = np.full(len(sizes), np.inf)
    gamma[ok] = np.maximum(1.0, mu[ok] * (1.0 - alpha[ok]) / (slack[ok] * d_next))
    threshold = 2.0 * gamma * d_next

    drop = state.palettes & uncolored[:, None] & (degrees >= threshold[:, None])
    palettes = state.palettes & ~drop
    kept_sizes = palettes.sum(axis=1)
    kept_totals = (degrees * palettes).sum(axis=1)
    mu_after = np.divide(kept_totals, kept_sizes, out=np.zeros(len(sizes), dtype=float), where=kept_sizes > 0)

    report = CleanupReport(
        d_next=degrees,
        size_before=sizes,
        alpha=alpha,
        gamma=gamma,
        threshold=threshold,
        mu_before=mu,
        mu_after=mu_after,
        removed=drop.sum(axis=1),
    )
    return ColoringState(state.graph, palettes, state.color.copy(), t + 1), report


# ---------------------------------------------------------------------------
# debug assertions

def proper_violations(state: ColoringState) -> list[str]:
    """Monochromatic edges among permanently colored vertices, and uncolored
    palettes still holding a colored neighbour's color."""
    problems = []
    color = state.color
    edges = state.graph.edge_array
    u, v = edges[:, 0], edges[:, 1]
    mono = (color[u] >= 0) & (color[u] == color[v])
    for a, b in edges[mono][:5]:
        problems.append(f"edge ({a},{b}) both colored {color[a]}")
    for a, b in ((u, v), (v, u)):
        hit = (color[a] < 0) & (color[b] >= 0)
        hit[hit] = state.palettes[a[hit], color[b[hit]]]
        for x, y in zip(a[hit][:5], b[hit][:5]):
            problems.append(f"palette of {x} holds color {color[y]} of neighbour {y}")
    return problems


def cleanup_violations(before: ColoringState, after: ColoringState, report: CleanupReport) -> list[str]:
    """Check one cleanup phase: survivors sit below the threshold (on the
    post-cleanup counts) and the removed fraction obeys the removal-average
    bound computed on the actual multiset."""
    problems = []
    post = np.where(after.active_palettes(), conflict_degrees(after), -1)
    over = np.flatnonzero(post.max(axis=1, initial=-1) >= report.threshold)
    for u in over[:5]:
        problems.append(f"vertex {u}: surviving color at or above threshold {report.threshold[u]:.4g}")

    for u in np.flatnonzero(after.uncolored_mask & (report.removed > 0)):
        mu = report.mu_before[u]
        q = report.threshold[u] / mu
        frac = int(report.removed[u]) / int(report.size_before[u])
        if frac > 1.0 / q + 1e-12:
            problems.append(f"vertex {u}: removed fraction {frac:.4g} > 1/q = {1.0 / q:.4g}")
            continue
        bound = removal_average_bound(mu, frac, q)
        if report.mu_after[u] > bound * (1 + 1e-9) + 1e-12:
            problems.append(f"vertex {u}: post-removal mean {report.mu_after[u]:.6g} above bound {bound:.6g}")
    return problems


def _check(problems: list[str], where: str) -> None:
    if problems:
        raise InvariantViolation(f"{where}: " + "; ".join(problems[:5]))


# ---------------------------------------------------------------------------
# driving the rounds

def measure(state: ColoringState) -> dict:
    degrees = conflict_degrees(state)
    live = state.uncolored_mask
    sizes, avg = vertex_averages(state, degrees)
    sizes, avg = sizes[live], avg[live]
    active = state.active_palettes()
    nonempty = sizes > 0
    return {
        "uncolored": int(live.sum()),
        "s_min": int(sizes.min()) if len(sizes) else 0,
        "s_max": int(sizes.max()) if len(sizes) else 0,
        "s_mean": float(sizes.mean()) if len(sizes) else 0.0,
        "d_mean": float(avg[nonempty].mean()) if nonempty.any() else 0.0,
        "dc_max": int(degrees[active].max()) if active.any() else 0,
    }


def run_round(
    state: ColoringState, schedule: Schedule, rng: rngmod.StreamRNG, check: bool = False
) -> tuple[ColoringState, RoundOutcome, CleanupReport]:
    had_colors = state.active_palettes().any(axis=1)
    tentative = phase1_assign(state, schedule, rng)
    mid, outcome = phase2_resolve(state, tentative, schedule, rng)
    if check:
        _check(proper_violations(mid), f"round {state.round} phase II")
        if (mid.palettes & ~state.palettes).any():
            raise InvariantViolation(f"round {state.round}: a palette grew in phase II")
    after, report = phase3_cleanup(mid, schedule)
    outcome.removed_cleanup = int(report.removed.sum())
    live = after.uncolored_mask
    outcome.palette_emptied = np.flatnonzero(live & had_colors & ~after.palettes.any(axis=1)).tolist()
    if check:
        _check(proper_violations(after), f"round {state.round} phase III")
        _check(cleanup_violations(mid, after, report), f"round {state.round} cleanup")
    return after, outcome, report


def run_rounds(
    g: Graph,
    params: ScheduleParams,
    seed: int,
    *,
    num_colors: int | None = None,
    stop_on_empty: bool = True,
    check: bool = False,
    observer: Callable[[ColoringState, Schedule], dict] | None = None,
) -> tuple[ColoringState, list[RoundTrace]]:
    """Run the ``t1`` nibble rounds from full palettes.

    ``observer`` is called on the state at the start of every round and its
    result is stored under ``checks`` in that round's trace. With ``check``
    set, partial-coloring propriety and cleanup soundness are asserted after
    every phase.
    """
    if not is_triangle_free(g):
        raise NotTriangleFree("input graph contains a triangle")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSchedule)
        schedule = build_schedule(params)
    state = init_state(g, num_colors if num_colors is not None else params.colors)
    rng = rngmod.StreamRNG(seed)
    traces: list[RoundTrace] = []
    for t in range(schedule.t1):
        trace = RoundTrace(
            t=t,
            predicted={"d": schedule.d_seq[t], "s": schedule.s_seq[t], "e": schedule.e_seq[t]},
            measured=measure(state),
        )
        if observer is not None:
            trace.checks = observer(state, schedule)
        state, outcome, _ = run_round(state, schedule, rng, check=check)
        trace.counters = outcome.counters()
        traces.append(trace)
        if stop_on_empty and outcome.palette_emptied:
            raise EmptyPalette(outcome.palette_emptied[0], t, state, traces)
        if not state.uncolored_mask.any():
            break
    return state, traces


# ---------------------------------------------------------------------------
# completion

class _Completion:
    def __init__(self, g: Graph, state: ColoringState, rng: rngmod.StreamRNG):
        self.g = g
        self.rng = rng
        self.base = state.color.copy()
        self.free = np.flatnonzero(state.color < 0)
        self.palettes = {int(u): np.flatnonzero(state.palettes[u]) for u in self.free}
        self.eu, self.ev = g.edge_array[:, 0], g.edge_array[:, 1]

    def shot(self, attempt: int) -> np.ndarray:
        colors = self.base.copy()
        draws = self.rng.uniform_vector((rngmod.PHASE_COMPLETE, attempt), self.free)
        for u, x in zip(self.free.tolist(), draws):
            pal = self.palettes[u]
            if len(pal):
                colors[u] = pal[int(x * len(pal))]
        return colors

    def conflicted(self, colors: np.ndarray) -> np.ndarray:
        bad = colors < 0
        mono = (colors[self.eu] == colors[self.ev]) & (colors[self.eu] >= 0)
        bad[self.eu[mono]] = True
        bad[self.ev[mono]] = True
        return bad

    def is_conflicted(self, colors: np.ndarray, u: int) -> bool:
        c = colors[u]
        return c < 0 or any(colors[v] == c for v in self.g.adjacency[u])

    def resample(self, colors: np.ndarray, attempt: int, budget: int) -> int:
        heap = [int(u) for u in np.flatnonzero(self.conflicted(colors)) if u in self.palettes]
        heapq.heapify(heap)
        redraws = 0
        while heap and redraws < budget:
            u = heapq.heappop(heap)
            if not self.is_conflicted(colors, u):
                continue
            pal = self.palettes[u]
            if len(pal) == 0:
                break
            x = self.rng.uniform(rngmod.PHASE_RESAMPLE, attempt, redraws)
            colors[u] = pal[int(x * len(pal))]
            redraws += 1
            if self.is_conflicted(colors, u):
                heapq.heappush(heap, u)
            for v in self.g.adjacency[u]:
                if v in self.palettes and colors[v] == colors[u]:
                    heapq.heappush(heap, v)
        return redraws

    def greedy_repair(self, colors: np.ndarray, num_colors: int) -> bool:
        for u in np.flatnonzero(self.conflicted(colors)).tolist():
            if u not in self.palettes or not self.is_conflicted(colors, u):
                continue
            taken = {int(colors[v]) for v in self.g.adjacency[u]}
            free = next((c for c in range(num_colors) if c not in taken), None)
            if free is None:
                return False
            colors[u] = free
        return True


def complete_coloring(
    g: Graph, state: ColoringState, policy: CompletionPolicy, rng: rngmod.StreamRNG
) -> tuple[Coloring, int]:
    """Color every vertex still uncolored; returns ``(coloring, attempts_used)``.

    Raises :class:`CompletionFailure` when the policy's budget runs out.
    """
    if not (state.color < 0).any():
        return Coloring(tuple(state.color.tolist())), 0
    job = _Completion(g, state, rng)
    attempts = 1 if policy.strategy in ("single_shot", "greedy_fallback") else policy.max_attempts
    remaining = 0
    for attempt in range(attempts):
        colors = job.shot(attempt)
        if policy.strategy == "local_resample":
            job.resample(colors, attempt, policy.resample_rounds * g.vertex_count)
        elif policy.strategy == "greedy_fallback":
            if not job.greedy_repair(colors, state.num_colors):
                remaining = int(job.conflicted(colors).sum())
                break
        bad = job.conflicted(colors)
        if not bad.any():
            coloring = Coloring(tuple(colors.tolist()))
            assert verify_proper(g, coloring)
            return coloring, attempt + 1
        remaining = int(bad.sum())
    raise CompletionFailure(remaining, attempts)


def default_params(g: Graph, *, k: float | None = None, num_colors: int | None = None,
                   psi: float | None = None, beta: float = 1.0) -> ScheduleParams:
    """Schedule parameters for ``g`` with Δ its true maximum degree.

    Exactly one of ``k`` and ``num_colors`` is given; the palette size is
    ``max(1, floor(Δ/k))`` and ``s_0`` equals it exactly. Edgeless graphs use
    Δ = 1 for the schedule.
    """
    if (k is None) == (num_colors is None):
        raise ValueError("give exactly one of k and num_colors")
    delta = max(g.max_degree, 1)
    if num_colors is None:
        num_colors = max(1, math.floor(delta / k))
    return ScheduleParams.from_colors(delta, num_colors, psi=psi, beta=beta)
