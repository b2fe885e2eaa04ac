from __future__ import annotations

import pytest
from hypothesis import settings

from nibblecolor.graph import GraphFamilySpec, generate

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

from _acceptance_log import LINES as ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


SMALL_FAMILIES = [
    GraphFamilySpec("cycle", n=9),
    GraphFamilySpec("complete_bipartite", degree_target=8),
    GraphFamilySpec("random_bipartite", n=60, edge_probability=0.2, seed=3),
    GraphFamilySpec("random_triangle_free", n=80, degree_target=6, seed=4),
    GraphFamilySpec("regular_high_girth_attempt", n=60, degree_target=4, seed=5),
]


@pytest.fixture(params=SMALL_FAMILIES, ids=lambda s: s.family)
def family_graph(request):
    return generate(request.param)
