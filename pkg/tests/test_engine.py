from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nibblecolor.analysis import round_zero_statistics
from nibblecolor.baselines import verify_proper
from nibblecolor.engine import (
    ColoringState,
    CompletionFailure,
    CompletionPolicy,
    EmptyPalette,
    NotTriangleFree,
    cleanup_violations,
    complete_coloring,
    conflict_degrees,
    default_params,
    exact_free_probability,
    init_state,
    phase1_assign,
    phase2_resolve,
    phase3_cleanup,
    proper_violations,
    run_round,
    run_rounds,
)
from nibblecolor.graph import build_graph, complete_bipartite, cycle_graph, generate, GraphFamilySpec
from nibblecolor.rng import StreamRNG
from nibblecolor.schedule import EXP_HALF, ScheduleParams, build_schedule

QUARTER = build_schedule(ScheduleParams.from_colors(1, 4))  # d_0 = 1 so p_0 = 1/4
PATH3 = build_graph([(0, 1), (1, 2)], 3)


def test_init_state_k44():
    state = init_state(complete_bipartite(4), 4)
    assert state.uncolored == set(range(8))
    assert all(state.palette(u) == {0, 1, 2, 3} for u in range(8))
    assert state.round == 0 and state.num_colors == 4


def test_init_state_empty_graph():
    state = init_state(build_graph([], 3), 1)
    assert all(state.palette(u) == {0} for u in range(3))


def test_initial_conflict_degree_is_vertex_degree(family_graph):
    state = init_state(family_graph, 3)
    degrees = conflict_degrees(state)
    for u in range(family_graph.vertex_count):
        assert (degrees[u] == family_graph.degree(u)).all()


def test_init_state_needs_a_color():
    with pytest.raises(ValueError):
        init_state(PATH3, 0)


# ---------------------------------------------------------------- phase I

def test_empty_palette_gets_no_assignment():
    state = init_state(PATH3, 4)
    state.palettes[1] = False
    for seed in range(20):
        assert not phase1_assign(state, QUARTER, StreamRNG(seed))[1].any()


def test_colored_vertex_gets_no_assignment():
    state = init_state(PATH3, 4)
    state.color[0] = 2
    state.palettes[1, 2] = False
    for seed in range(20):
        assert not phase1_assign(state, QUARTER, StreamRNG(seed))[0].any()


def test_phase1_deterministic():
    state = init_state(complete_bipartite(8), 4)
    sched = build_schedule(ScheduleParams.from_colors(8, 4))
    a = phase1_assign(state, sched, StreamRNG(3))
    assert np.array_equal(a, phase1_assign(state, sched, StreamRNG(3)))


def test_phase1_assignment_rate_k88():
    g = complete_bipartite(8)
    sched = build_schedule(ScheduleParams.from_colors(8, 4))
    p0 = sched.activation_p[0]
    state = init_state(g, 4)
    root = StreamRNG(0)
    trials = 100_000
    hits = sum(int(phase1_assign(state, sched, root.spawn(i)).sum()) for i in range(trials))
    pairs = trials * 64
    sigma = math.sqrt(p0 * (1 - p0) / pairs)
    assert abs(hits / pairs - p0) <= 3 * sigma


# ---------------------------------------------------------------- free probability

def test_exact_free_probability_values():
    state = init_state(PATH3, 4)
    assert exact_free_probability(state, 1, 0, QUARTER) == pytest.approx(0.5625)
    assert exact_free_probability(state, 0, 0, QUARTER) == pytest.approx(0.75)
    state.palettes[1, 3] = False
    assert exact_free_probability(state, 0, 3, QUARTER) == 1.0
    with pytest.raises(ValueError):
        exact_free_probability(state, 1, 3, QUARTER)


def test_exact_free_probability_isolated_vertices():
    state = init_state(build_graph([], 4), 3)
    assert all(exact_free_probability(state, u, c, QUARTER) == 1.0 for u in range(4) for c in range(3))


# ---------------------------------------------------------------- phase II

def test_adjacent_vertices_sharing_an_assignment_both_lose_it():
    state = init_state(PATH3, 4)
    tentative = np.zeros((3, 4), dtype=bool)
    tentative[0, 2] = tentative[1, 2] = True
    for seed in range(20):
        mid, outcome = phase2_resolve(state, tentative, QUARTER, StreamRNG(seed))
        assert not mid.palettes[0, 2] and not mid.palettes[1, 2]
        assert mid.color[0] != 2 and mid.color[1] != 2
        assert outcome.removed_conflict >= 3  # vertex 2 also loses color 2


def test_unopposed_assignment_colors_vertex():
    # the middle of the path has free probability 0.5625 < exp(-1/2), so II.2 always keeps
    state = init_state(PATH3, 4)
    tentative = np.zeros((3, 4), dtype=bool)
    tentative[1, 3] = tentative[1, 1] = True
    for seed in range(20):
        mid, outcome = phase2_resolve(state, tentative, QUARTER, StreamRNG(seed))
        assert mid.color[1] == 1  # smallest surviving assigned color
        assert 1 in outcome.newly_colored
        assert not mid.palettes[0, 1] and not mid.palettes[0, 3]
        assert proper_violations(mid) == []


def test_newly_colored_had_surviving_assignment():
    g = generate(GraphFamilySpec("random_triangle_free", n=200, degree_target=8, seed=2))
    params = default_params(g, k=0.5)
    sched = build_schedule(params)
    state = init_state(g, params.colors)
    for seed in range(10):
        rng = StreamRNG(seed)
        tentative = phase1_assign(state, sched, rng)
        mid, outcome = phase2_resolve(state, tentative, sched, rng)
        for u in outcome.newly_colored:
            c = mid.color[u]
            assert tentative[u, c] and mid.palettes[u, c]
            assert not (mid.palettes[u] & tentative[u])[:c].any()
        assert (mid.palettes <= state.palettes).all()


def test_survival_law_k88():
    g = complete_bipartite(8)
    params = ScheduleParams.from_colors(8, 4)
    stats = round_zero_statistics(g, params, 100_000, seed=0)
    assert (stats.pr_free >= EXP_HALF).all()
    freq = stats.survived / stats.trials
    sigma = math.sqrt(EXP_HALF * (1 - EXP_HALF) / stats.trials)
    assert np.abs(freq - EXP_HALF).max() <= 3 * sigma


# ---------------------------------------------------------------- phase III

def test_cleanup_uniform_case_uses_gamma_one():
    params = ScheduleParams.from_colors(16, 4)
    sched = build_schedule(params)
    state = init_state(complete_bipartite(4), 4)
    after, report = phase3_cleanup(state, sched)
    assert (report.alpha == 0).all() and (report.gamma == 1).all()
    d_next = sched.d_seq[1]
    assert np.array_equal(~after.palettes, report.d_next >= 2 * d_next)
    assert after.round == 1


def test_cleanup_hand_example():
    # vertex 0 joined to 1..6; only color 0 is held by the neighbours
    g = build_graph([(0, v) for v in range(1, 7)], 7)
    state = init_state(g, 4)
    state.palettes[1:] = False
    state.palettes[1:, 0] = True
    sched = build_schedule(ScheduleParams.from_colors(2, 4))
    d1, s1 = sched.d_seq[1], sched.s_seq[1]
    after, report = phase3_cleanup(state, sched)

    # vertex 0: palette of 4 > s1, so alpha clamps to 0; mean degree 6/4
    assert report.alpha[0] == 0
    gamma = max(1.0, 1.5 / d1)
    assert report.gamma[0] == pytest.approx(gamma)
    assert 6 >= 2 * gamma * d1
    assert after.palette(0) == {1, 2, 3}
    # neighbours: singleton palette gives alpha = 1/2 after clamping, so no cleanup
    assert 1 - 1 / s1 > 0.5
    assert (report.alpha[1:] == 0.5).all() and np.isinf(report.gamma[1:]).all()
    assert all(after.palette(v) == {0} for v in range(1, 7))
    assert report.mu_after[0] == 0
    assert cleanup_violations(state, after, report) == []


def test_cleanup_average_bound_on_actual_multiset():
    g = generate(GraphFamilySpec("random_bipartite", n=120, degree_target=12, seed=8))
    params = default_params(g, k=1)
    sched = build_schedule(params)
    state = init_state(g, params.colors)
    rng = StreamRNG(4)
    for _ in range(min(4, sched.t1)):
        tentative = phase1_assign(state, sched, rng)
        mid, _ = phase2_resolve(state, tentative, sched, rng)
        after, report = phase3_cleanup(mid, sched)
        nbrs = g.neighbor_sets
        for u in mid.uncolored:
            pal = sorted(mid.palette(u))
            if not pal:
                continue
            # recount d_{t+1}(u, c) by hand
            dc = {c: sum(1 for v in nbrs[u] if mid.color[v] < 0 and mid.palettes[v, c]) for c in pal}
            mu = sum(dc.values()) / len(pal)
            removed = [c for c in pal if dc[c] >= report.threshold[u]]
            assert set(removed) == set(pal) - after.palette(u)
            if removed and mu > 0:
                q = report.threshold[u] / mu
                alpha = len(removed) / len(pal)
                assert alpha <= 1 / q + 1e-12
                kept = [dc[c] for c in pal if c not in removed]
                actual = sum(kept) / len(kept) if kept else 0.0
                assert actual <= mu * (1 - q * alpha) / (1 - alpha) + 1e-9
        state = after


# ---------------------------------------------------------------- rounds

def test_tiny_k_runs_no_rounds():
    g = complete_bipartite(4)
    state, traces = run_rounds(g, default_params(g, num_colors=40), seed=1)
    assert traces == [] and state.uncolored == set(range(8))


def test_edgeless_round_zero_colors_every_surviving_assignment():
    g = build_graph([], 30)
    params = ScheduleParams.from_colors(1, 3)
    sched = build_schedule(params)
    state, traces = run_rounds(g, params, seed=5, stop_on_empty=False)
    assert all(t.counters["removed_conflict"] == 0 for t in traces)
    # replay round 0 by hand with the same stream
    rng = StreamRNG(5)
    start = init_state(g, 3)
    tentative = phase1_assign(start, sched, rng)
    mid, outcome = phase2_resolve(start, tentative, sched, rng)
    expected = np.flatnonzero((tentative & mid.palettes).any(axis=1)).tolist()
    assert outcome.newly_colored == expected
    assert traces[0].counters["newly_colored"] == len(expected)


def test_run_rounds_deterministic():
    g = generate(GraphFamilySpec("random_triangle_free", n=300, degree_target=10, seed=3))
    params = default_params(g, k=0.5)
    a = run_rounds(g, params, seed=11, check=True, stop_on_empty=False)
    b = run_rounds(g, params, seed=11, check=True, stop_on_empty=False)
    assert [t.to_dict() for t in a[1]] == [t.to_dict() for t in b[1]]
    assert np.array_equal(a[0].color, b[0].color) and np.array_equal(a[0].palettes, b[0].palettes)
    c = run_rounds(g, params, seed=12, stop_on_empty=False)
    assert [t.to_dict() for t in c[1]] != [t.to_dict() for t in a[1]]


def test_triangle_rejected():
    g = build_graph([(0, 1), (1, 2), (0, 2)], 3)
    with pytest.raises(NotTriangleFree):
        run_rounds(g, default_params(g, k=1), seed=0)


def test_empty_palette_reported_with_partial_run():
    g = complete_bipartite(16)
    with pytest.raises(EmptyPalette) as info:
        run_rounds(g, default_params(g, num_colors=8), seed=0)
    exc = info.value
    assert exc.state is not None and len(exc.traces) == exc.round + 1
    assert not exc.state.palettes[exc.vertex].any() and exc.state.color[exc.vertex] < 0


def test_rounds_are_monotone_and_proper():
    g = generate(GraphFamilySpec("random_bipartite", n=200, degree_target=10, seed=6))
    params = default_params(g, k=0.5)
    sched = build_schedule(params)
    state = init_state(g, params.colors)
    rng = StreamRNG(2)
    for _ in range(sched.t1):
        nxt, _, _ = run_round(state, sched, rng, check=True)
        assert (nxt.palettes[nxt.uncolored_mask] <= state.palettes[nxt.uncolored_mask]).all()
        assert nxt.uncolored <= state.uncolored
        assert (nxt.color[state.color >= 0] == state.color[state.color >= 0]).all()
        state = nxt


# ---------------------------------------------------------------- completion

def brute_force_completable(g, palettes) -> bool:
    for choice in itertools.product(*palettes):
        if all(choice[u] != choice[v] for u, v in g.edges()):
            return True
    return False


@st.composite
def path_palettes(draw):
    n = draw(st.integers(2, 6))
    g = build_graph([(i, i + 1) for i in range(n - 1)], n)
    num_colors = 7
    pals = []
    for u in range(n):
        size = draw(st.integers(2 * g.degree(u) + 1, num_colors))
        pals.append(sorted(draw(st.permutations(range(num_colors)))[:size]))
    return g, num_colors, pals


@given(path_palettes(), st.integers(0, 2**32))
def test_local_resample_completes_roomy_paths(case, seed):
    g, num_colors, pals = case
    assert brute_force_completable(g, pals)
    state = init_state(g, num_colors)
    state.palettes[:] = False
    for u, pal in enumerate(pals):
        state.palettes[u, pal] = True
    coloring, attempts = complete_coloring(g, state, CompletionPolicy("local_resample", max_attempts=5), StreamRNG(seed))
    assert verify_proper(g, coloring)
    assert all(coloring.colors[u] in pals[u] for u in range(g.vertex_count))


def test_fully_colored_state_is_returned_unchanged():
    g = cycle_graph(4)
    state = init_state(g, 2)
    state.color[:] = [0, 1, 0, 1]
    for strategy in CompletionPolicy.STRATEGIES:
        coloring, attempts = complete_coloring(g, state, CompletionPolicy(strategy), StreamRNG(0))
        assert coloring.colors == (0, 1, 0, 1) and attempts == 0


@pytest.mark.parametrize("strategy", ["single_shot", "retry", "local_resample"])
def test_identical_singleton_palettes_fail(strategy):
    g = build_graph([(0, 1)], 2)
    state = init_state(g, 3)
    state.palettes[:] = False
    state.palettes[:, 1] = True
    with pytest.raises(CompletionFailure) as info:
        complete_coloring(g, state, CompletionPolicy(strategy, max_attempts=4), StreamRNG(0))
    assert info.value.conflicts_remaining == 2


def test_greedy_fallback_escapes_palettes_when_colors_exceed_degree():
    g = build_graph([(0, 1)], 2)
    state = init_state(g, 3)
    state.palettes[:] = False
    state.palettes[:, 1] = True
    coloring, _ = complete_coloring(g, state, CompletionPolicy("greedy_fallback"), StreamRNG(0))
    assert verify_proper(g, coloring)


def test_greedy_fallback_can_fail_with_few_colors():
    g = complete_bipartite(2)
    state = init_state(g, 1)
    with pytest.raises(CompletionFailure):
        complete_coloring(g, state, CompletionPolicy("greedy_fallback"), StreamRNG(0))


@given(st.integers(0, 2**32), st.sampled_from(CompletionPolicy.STRATEGIES))
def test_returned_completions_are_proper(seed, strategy):
    g = generate(GraphFamilySpec("random_triangle_free", n=40, degree_target=4, seed=seed % 97))
    params = default_params(g, k=0.25)
    state, _ = run_rounds(g, params, seed, stop_on_empty=False)
    try:
        coloring, _ = complete_coloring(g, state, CompletionPolicy(strategy, max_attempts=3), StreamRNG(seed))
    except CompletionFailure:
        return
    assert verify_proper(g, coloring)
    colored = state.color >= 0
    assert (np.array(coloring.colors)[colored] == state.color[colored]).all()


def test_policy_validation():
    with pytest.raises(ValueError):
        CompletionPolicy("magic")
    with pytest.raises(ValueError):
        CompletionPolicy("retry", max_attempts=0)


def test_default_params():
    g = complete_bipartite(10)
    assert default_params(g, k=2).colors == 5
    assert default_params(g, num_colors=7).s0 == 7
    assert default_params(build_graph([], 3), k=2).colors == 1
    with pytest.raises(ValueError):
        default_params(g)
    with pytest.raises(ValueError):
        default_params(g, k=1, num_colors=3)


def test_state_accessors():
    state = init_state(PATH3, 2)
    state.color[1] = 0
    assert state.permanent_color(1) == 0 and state.permanent_color(0) is None
    assert not state.active_palettes()[1].any()
    clone = state.copy()
    clone.palettes[0] = False
    assert state.palettes[0].all()
    assert isinstance(clone, ColoringState)
