"""Per-round invariant checks and Monte Carlo estimators for single rounds."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import engine
from .averaging import DomainError, addition_average, error_compose, removal_average_bound
from .graph import Graph
from .rng import StreamRNG
from .schedule import EXP_HALF, Schedule, ScheduleParams, build_schedule

__all__ = [
    "DomainError",
    "EstimatorReport",
    "InvariantWitness",
    "RoundZeroStats",
    "addition_average",
    "admissible_alpha",
    "assumption_summary",
    "check_assumption",
    "coloring_probability_report",
    "equalization_check",
    "error_compose",
    "estimate_coloring_probability",
    "estimate_palette_survival",
    "palette_survival_report",
    "removal_average_bound",
    "round_zero_statistics",
    "survival_probabilities",
]

MIN_TRIALS = 30


# ---------------------------------------------------------------------------
# invariant witnesses

@dataclass
class InvariantWitness:
    vertex: int
    alpha: float | None
    palette_ok: bool
    avg_ok: bool
    max_ok: bool
    measured: dict
    bounds: dict

    @property
    def ok(self) -> bool:
        return self.alpha is not None

    def to_dict(self) -> dict:
        return asdict(self)


def admissible_alpha(
    s_u: float, d_u: float, dmax_u: float, s_t: float, d_t: float, e_t: float
) -> tuple[float, float] | None:
    """Interval of alpha in [0, 1/2] satisfying all three per-vertex bounds.

    The bounds are ``s_u >= (1-a) s_t (1-e_t)``, which holds exactly for
    ``a >= 1 - s_u / (s_t (1-e_t))``; ``d_u <= (1-2a)/(1-a) d_t (1+e_t)``,
    whose right side decreases in ``a`` and holds exactly for
    ``a <= (1-r)/(2-r)`` with ``r = d_u / (d_t (1+e_t))``; and the
    alpha-free ``dmax_u <= 2 d_t (1+e_t)``.  Returns ``None`` if empty.
    """
    floor = s_t * (1.0 - e_t)
    lo = 1.0 - s_u / floor if floor > 0 else 0.0
    cap = d_t * (1.0 + e_t)
    if dmax_u > 2.0 * cap:
        return None
    r = d_u / cap
    if r > 1.0:
        return None
    hi = (1.0 - r) / (2.0 - r)
    lo, hi = max(lo, 0.0), min(hi, 0.5)
    if lo > hi:
        return None
    return lo, hi


def check_assumption(state: engine.ColoringState, schedule: Schedule, t: int | None = None) -> list[InvariantWitness]:
    """Witness (or refute) the per-vertex invariants at a round boundary.

    For every uncolored vertex the smallest admissible alpha is reported.
    When none exists the three comparisons are evaluated at the alpha that
    best serves the palette bound.
    """
    t = state.round if t is None else t
    s_t, d_t, e_t = schedule.s_seq[t], schedule.d_seq[t], schedule.e_seq[t]
    degrees = engine.conflict_degrees(state)
    sizes, avg = engine.vertex_averages(state, degrees)
    active = state.active_palettes()
    dmax = np.where(active, degrees, 0).max(axis=1, initial=0)

    out = []
    for u in np.flatnonzero(state.uncolored_mask).tolist():
        s_u, d_u, m_u = float(sizes[u]), float(avg[u]), float(dmax[u])
        interval = admissible_alpha(s_u, d_u, m_u, s_t, d_t, e_t)
        if interval is not None:
            a = interval[0]
        else:
            floor = s_t * (1.0 - e_t)
            a = min(0.5, max(0.0, 1.0 - s_u / floor)) if floor > 0 else 0.0
        bounds = {
            "palette": (1.0 - a) * s_t * (1.0 - e_t),
            "average": (1.0 - 2.0 * a) / (1.0 - a) * d_t * (1.0 + e_t),
            "max": 2.0 * d_t * (1.0 + e_t),
        }
        out.append(
            InvariantWitness(
                vertex=u,
                alpha=None if interval is None else a,
                palette_ok=s_u >= bounds["palette"],
                avg_ok=d_u <= bounds["average"],
                max_ok=m_u <= bounds["max"],
                measured={"s": s_u, "d": d_u, "dc_max": m_u},
                bounds=bounds,
            )
        )
    return out


def assumption_summary(state: engine.ColoringState, schedule: Schedule) -> dict:
    witnesses = check_assumption(state, schedule)
    failed = [w for w in witnesses if not w.ok]
    alphas = [w.alpha for w in witnesses if w.ok]
    return {
        "checked": len(witnesses),
        "invariant_failures": len(failed),
        "alpha_max": max(alphas) if alphas else None,
    }


# ---------------------------------------------------------------------------
# round-zero Monte Carlo

@dataclass
class EstimatorReport:
    name: str
    trials: int
    empirical_mean: float
    predicted: float
    tolerance_sigmas: float
    passed: bool
    std_error: float = 0.0
    detail: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["pass"] = out.pop("passed")
        return out


@dataclass
class RoundZeroStats:
    """Counts collected over independent executions of round 0."""

    trials: int
    survived: np.ndarray  # (n, C) times c stayed in S(u) through Phase II
    colored: np.ndarray  # (n,) times u was colored
    vertex_mean_palette: np.ndarray  # (trials,) mean post-Phase-II palette size over vertices
    pr_free: np.ndarray  # (n, C) exact Pr[no neighbour assigned c]
    palettes: np.ndarray  # (n, C) round-0 palettes
    activation: float


def _round_zero_chunk(g: Graph, params: ScheduleParams, num_colors: int, seed: int, start: int, stop: int):
    schedule = build_schedule(params)
    base = engine.init_state(g, num_colors)
    survived = np.zeros(base.palettes.shape, dtype=np.int64)
    colored = np.zeros(g.vertex_count, dtype=np.int64)
    means = np.empty(stop - start)
    root = StreamRNG(seed)
    for i, trial in enumerate(range(start, stop)):
        rng = root.spawn(trial)
        tentative = engine.phase1_assign(base, schedule, rng)
        mid, outcome = engine.phase2_resolve(base, tentative, schedule, rng)
        survived += mid.palettes
        colored[outcome.newly_colored] += 1
        means[i] = mid.palettes.sum() / max(g.vertex_count, 1)
    return survived, colored, means


def round_zero_statistics(
    g: Graph,
    params: ScheduleParams,
    trials: int,
    seed: int,
    *,
    num_colors: int | None = None,
    workers: int = 1,
) -> RoundZeroStats:
    """Run ``trials`` independent round-0 executions (Phases I and II).

    Trial ``i`` draws from ``StreamRNG(seed).spawn(i)``, so results do not
    depend on ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    num_colors = params.colors if num_colors is None else num_colors
    schedule = build_schedule(params)
    if schedule.t1 < 1:
        raise ValueError("schedule runs no rounds; round-0 statistics are undefined")
    p0 = schedule.activation_p[0]
    if not p0 > 0:
        raise ValueError("activation probability must be positive")
    base = engine.init_state(g, num_colors)

    bounds = np.linspace(0, trials, max(1, workers) + 1).astype(int)
    chunks = [(g, params, num_colors, seed, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_round_zero_chunk, *zip(*chunks)))
    else:
        results = [_round_zero_chunk(*c) for c in chunks]

    return RoundZeroStats(
        trials=trials,
        survived=sum(r[0] for r in results),
        colored=sum(r[1] for r in results),
        vertex_mean_palette=np.concatenate([r[2] for r in results]),
        pr_free=engine.free_probabilities(base, schedule),
        palettes=base.palettes,
        activation=p0,
    )


def survival_probabilities(stats: RoundZeroStats) -> np.ndarray:
    """Exact Phase-II survival probability ``min(exp(-1/2), Pr[free])`` per (u, c)."""
    return np.where(stats.palettes, np.minimum(EXP_HALF, stats.pr_free), 0.0)


def equalization_check(stats: RoundZeroStats, tolerance_sigmas: float = 3.0) -> EstimatorReport:
    """Every (u, c) whose free probability reaches exp(-1/2) must survive
    with empirical frequency within ``tolerance_sigmas`` binomial sigmas of
    exp(-1/2)."""
    eligible = stats.palettes & (stats.pr_free >= EXP_HALF)
    freq = stats.survived / stats.trials
    sigma = math.sqrt(EXP_HALF * (1.0 - EXP_HALF) / stats.trials)
    z = np.abs(freq - EXP_HALF) / sigma
    worst = float(z[eligible].max()) if eligible.any() else 0.0
    return EstimatorReport(
        name="equalization",
        trials=stats.trials,
        empirical_mean=float(freq[eligible].mean()) if eligible.any() else float("nan"),
        predicted=EXP_HALF,
        tolerance_sigmas=tolerance_sigmas,
        passed=bool(eligible.any()) and worst <= tolerance_sigmas,
        std_error=sigma,
        detail={
            "pairs_checked": int(eligible.sum()),
            "pairs_outside": int((z[eligible] > tolerance_sigmas).sum()),
            "max_sigma": worst,
            "min_frequency": float(freq[eligible].min()) if eligible.any() else None,
            "max_frequency": float(freq[eligible].max()) if eligible.any() else None,
        },
    )


def palette_survival_report(stats: RoundZeroStats, tolerance_sigmas: float = 3.0) -> EstimatorReport:
    if stats.trials < MIN_TRIALS:
        raise ValueError(f"need at least {MIN_TRIALS} trials for a sigma estimate")
    n = max(stats.palettes.shape[0], 1)
    # exact expectation; equals s_0 exp(-1/2) whenever every Pr[free] >= exp(-1/2)
    predicted = float(survival_probabilities(stats).sum() / n)
    s0_mean = float(stats.palettes.sum() / n)
    empirical = float(stats.vertex_mean_palette.mean())
    se = float(stats.vertex_mean_palette.std(ddof=1) / math.sqrt(stats.trials))
    passed = abs(empirical - predicted) <= tolerance_sigmas * se if se > 0 else empirical == predicted
    return EstimatorReport(
        name="palette_survival",
        trials=stats.trials,
        empirical_mean=empirical,
        predicted=predicted,
        tolerance_sigmas=tolerance_sigmas,
        passed=bool(passed),
        std_error=se,
        detail={"s0_times_exp_half": s0_mean * EXP_HALF},
    )


def coloring_probability_report(
    stats: RoundZeroStats, params: ScheduleParams, slack: float = 0.05
) -> EstimatorReport:
    """One-sided check ``Pr[colored] >= (1/16)(s_0/d_0) exp(-1/2) (1 - slack)``."""
    schedule = build_schedule(params)
    n = max(stats.palettes.shape[0], 1)
    bound = schedule.s_seq[0] / schedule.d_seq[0] * EXP_HALF / 16.0 * (1.0 - 1.5 * schedule.e_seq[0])
    empirical = float(stats.colored.sum() / (stats.trials * n))
    per_color = stats.activation * survival_probabilities(stats)
    exact = 1.0 - np.prod(1.0 - per_color, axis=1)
    se = math.sqrt(max(empirical * (1 - empirical), 0.0) / (stats.trials * n))
    return EstimatorReport(
        name="coloring_probability",
        trials=stats.trials,
        empirical_mean=empirical,
        predicted=bound,
        tolerance_sigmas=0.0,
        passed=empirical >= bound * (1.0 - slack),
        std_error=se,
        detail={"slack": slack, "exact_mean": float(exact.mean())},
    )


def estimate_palette_survival(
    g: Graph, params: ScheduleParams, trials: int, seed: int, *,
    num_colors: int | None = None, tolerance_sigmas: float = 3.0, workers: int = 1,
) -> EstimatorReport:
    if trials < MIN_TRIALS:
        raise ValueError(f"need at least {MIN_TRIALS} trials for a sigma estimate")
    stats = round_zero_statistics(g, params, trials, seed, num_colors=num_colors, workers=workers)
    return palette_survival_report(stats, tolerance_sigmas)


def estimate_coloring_probability(
    g: Graph, params: ScheduleParams, trials: int, seed: int, *,
    num_colors: int | None = None, slack: float = 0.05, workers: int = 1,
) -> EstimatorReport:
    stats = round_zero_statistics(g, params, trials, seed, num_colors=num_colors, workers=workers)
    return coloring_probability_report(stats, params, slack)
