"""Deterministic trajectories for the nibble: d_t, s_t, the error budget e_t,
activation probabilities and the round horizon t1.

All logarithms are natural. The loop runs while ``d_t / s_t >= 1/8``; every
round lowers that ratio by exactly ``exp(-1/2) / 16``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

EXP_HALF = math.exp(-0.5)
RATIO_STEP = EXP_HALF / 16.0
STOP_RATIO = 1.0 / 8.0


class DegenerateSchedule(UserWarning):
    """The stopping test already holds at t=0, so no nibble round runs."""


@dataclass(frozen=True)
class ScheduleParams:
    """Parameters of the schedule.

    ``k`` sets the number of colors to ``delta / k``. Passing ``num_colors``
    instead (see :meth:`from_colors`) pins ``s_0`` to that integer exactly.
    """

    delta: float
    k: float
    psi: float | None = None
    beta: float = 1.0
    num_colors: int | None = None

    def __post_init__(self) -> None:
        if not self.delta >= 1:
            raise ValueError(f"delta must be >= 1, got {self.delta}")
        if not self.k > 0:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.psi is None:
            object.__setattr__(self, "psi", 3.0 * math.log(self.delta) if self.delta > 1 else 1.0)
        if not self.psi > 0:
            raise ValueError("psi must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.colors < 1:
            raise ValueError(f"delta/k = {self.delta / self.k} gives no colors")

    @classmethod
    def from_colors(cls, delta: float, num_colors: int, psi: float | None = None, beta: float = 1.0):
        return cls(delta=delta, k=delta / num_colors, psi=psi, beta=beta, num_colors=int(num_colors))

    @property
    def colors(self) -> int:
        if self.num_colors is not None:
            return self.num_colors
        return math.floor(self.delta / self.k)

    @property
    def s0(self) -> float:
        return float(self.num_colors) if self.num_colors is not None else self.delta / self.k


@dataclass(frozen=True)
class Schedule:
    params: ScheduleParams
    d_seq: tuple[float, ...]
    s_seq: tuple[float, ...]
    e_seq: tuple[float, ...]
    activation_p: tuple[float, ...]
    t1: int
    degenerate: bool = field(default=False)
    ratio_seq: tuple[float, ...] = ()

    def ratio(self, t: int) -> float:
        return self.ratio_seq[t]

    def to_dict(self) -> dict:
        return {
            "d": list(self.d_seq),
            "s": list(self.s_seq),
            "e": list(self.e_seq),
            "p": list(self.activation_p),
            "t1": self.t1,
            "params": asdict(self.params),
        }


def round_bound(k: float) -> int:
    """Upper bound ``ceil(16 e^{1/2} k)`` on the number of rounds."""
    return math.ceil(16.0 * math.exp(0.5) * k)


def build_schedule(params: ScheduleParams) -> Schedule:
    """Iterate the recurrences until ``d_t / s_t < 1/8``.

    The recurrence for d is carried as the ratio ``r_t = d_t / s_t``, which
    drops by exactly ``exp(-1/2)/16`` per round, with ``s_t = s_0 exp(-t/2)``
    and ``d_t = r_t s_t``. This is the same recurrence rearranged, and it keeps
    the ratio exact even when ``s_t`` underflows at very large k. The error
    budget may overflow to ``inf`` in that regime.
    """
    s0 = params.s0
    r = float(params.delta) / s0
    e = 0.0
    r_seq, s_seq, e_seq = [r], [s0], [e]
    # safety net only; the ratio law guarantees termination well before this
    limit = round_bound(r) + 2
    while r >= STOP_RATIO:
        if len(r_seq) > limit:
            raise RuntimeError("schedule failed to terminate")
        with np.errstate(divide="ignore", over="ignore"):
            e = float(3.0 * np.float64(e) + params.beta * np.sqrt(params.psi / np.float64(s_seq[-1])))
        r = r - RATIO_STEP
        r_seq.append(r)
        s_seq.append(s0 * math.exp(-0.5 * (len(r_seq) - 1)))
        e_seq.append(e)
    d_seq = [params.delta] + [x * y for x, y in zip(r_seq[1:], s_seq[1:])]
    t1 = len(r_seq) - 1
    degenerate = t1 == 0
    if degenerate:
        warnings.warn(
            f"d_0/s_0 = {r_seq[0]:.4g} < 1/8: no rounds will run",
            DegenerateSchedule,
            stacklevel=2,
        )
    return Schedule(
        params=params,
        d_seq=tuple(float(x) for x in d_seq),
        s_seq=tuple(s_seq),
        e_seq=tuple(e_seq),
        activation_p=tuple(min(1.0, 1.0 / (4.0 * x)) if x > 0 else 1.0 for x in d_seq),
        t1=t1,
        degenerate=degenerate,
        ratio_seq=tuple(r_seq),
    )


def error_budget(schedule: Schedule, t: int) -> float:
    if not 0 <= t <= schedule.t1:
        raise IndexError(f"t={t} outside 0..{schedule.t1}")
    return schedule.e_seq[t]


def closed_form_palette(params: ScheduleParams, t: float) -> float:
    """``s_t = s_0 exp(-t/2)``; also valid at non-integer t."""
    return params.s0 * math.exp(-0.5 * t)


def coarse_final_palette(delta: float, k: float) -> float:
    """Final palette size at the real-valued horizon ``t = 16 e^{1/2} k``."""
    return delta / k * math.exp(-8.0 * math.exp(0.5) * k)


def coarse_error_curve(params: ScheduleParams, t: int) -> float:
    """Comparison curve ``3^t sqrt(k psi exp(8 e^{1/2} k) / delta)``, unit constant."""
    k = params.delta / params.s0
    inner = k * math.exp(8.0 * math.exp(0.5) * k) * params.psi / params.delta
    return 3.0**t * math.sqrt(inner)


@dataclass(frozen=True)
class FeasibilityReport:
    delta: float
    k: float
    psi: float
    beta: float
    t1: int
    s_t1: float
    e_t1: float
    s_margin: float
    e_margin: float
    palette_ok: bool
    error_ok: bool
    degenerate: bool
    coarse_error: float

    @property
    def feasible(self) -> bool:
        return self.palette_ok and self.error_ok

    def to_dict(self) -> dict:
        out = asdict(self)
        out["feasible"] = self.feasible
        return out


def feasibility_report(params: ScheduleParams, s_margin: float = 10.0, e_margin: float = 0.1) -> FeasibilityReport:
    """Check ``s_t1 >= s_margin * psi`` and ``e_t1 <= e_margin`` at the horizon.

    With no rounds (``k < 1/8``) the conditions are vacuous and the report is
    feasible by definition.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSchedule)
        sched = build_schedule(params)
    s_t1 = sched.s_seq[-1]
    e_t1 = sched.e_seq[-1]
    degenerate = sched.degenerate
    return FeasibilityReport(
        delta=float(params.delta),
        k=params.delta / params.s0,
        psi=float(params.psi),
        beta=params.beta,
        t1=sched.t1,
        s_t1=s_t1,
        e_t1=e_t1,
        s_margin=s_margin,
        e_margin=e_margin,
        palette_ok=degenerate or s_t1 >= s_margin * params.psi,
        error_ok=degenerate or e_t1 <= e_margin,
        degenerate=degenerate,
        coarse_error=coarse_error_curve(params, sched.t1),
    )


def log_delta_k(delta: float, constant: float = 67.0) -> float:
    """The k used by the headline color count: ``ln(delta) / constant``."""
    return math.log(delta) / constant


def feasibility_frontier(
    constant: float = 67.0,
    s_margin: float = 10.0,
    e_margin: float = 0.1,
    beta: float = 1.0,
    integer_limit: int = 100_000,
    log10_max: float = 300.0,
    log10_step: float = 0.01,
) -> dict:
    """Scan delta for ``k = ln(delta)/constant`` and locate where the regime holds.

    Integers ``2..integer_limit`` are scanned exhaustively, then a log-spaced
    grid up to ``10**log10_max``. ``threshold`` is the smallest scanned delta
    with a non-degenerate schedule from which every larger scanned delta is
    feasible; ``None`` when the last scanned point is infeasible.
    """
    points: list[float] = [float(x) for x in range(2, integer_limit + 1)]
    x = math.log10(integer_limit) + log10_step
    while x <= log10_max:
        points.append(10.0**x)
        x += log10_step

    first_nondegenerate = None
    first_feasible = None
    last_infeasible = None
    samples = []
    for i, delta in enumerate(points):
        k = log_delta_k(delta, constant)
        if math.floor(delta / k) < 1:
            continue
        rep = feasibility_report(ScheduleParams(delta=delta, k=k, beta=beta), s_margin, e_margin)
        if rep.degenerate:
            continue
        if first_nondegenerate is None:
            first_nondegenerate = delta
        if rep.feasible and first_feasible is None:
            first_feasible = delta
        if not rep.feasible:
            last_infeasible = i
        if delta >= integer_limit and (len(samples) == 0 or math.log10(delta) >= math.log10(samples[-1]["delta"]) + 10):
            samples.append(rep.to_dict())

    threshold = None
    if first_nondegenerate is not None:
        if last_infeasible is None:
            threshold = first_nondegenerate
        elif last_infeasible + 1 < len(points):
            threshold = points[last_infeasible + 1]
    return {
        "constant": constant,
        "s_margin": s_margin,
        "e_margin": e_margin,
        "beta": beta,
        "first_nondegenerate_delta": first_nondegenerate,
        "first_feasible_delta": first_feasible,
        "threshold_delta": threshold,
        "scan_max_delta": points[-1],
        "samples": samples,
    }
