import pytest

from perfmatch.graph import CompatibilityGraph, complete_graph, paw, path_graph


@pytest.fixture
def g_paw():
    return paw()


@pytest.fixture
def k2():
    return complete_graph(2)


@pytest.fixture
def p3():
    return path_graph(3)


def edge_graph(n, *edges):
    return CompatibilityGraph(n, edges)


def pytest_terminal_summary(terminalreporter):
    import sys

    lines = []
    for name, mod in list(sys.modules.items()):
        if name.endswith("test_acceptance") and hasattr(mod, "ACCEPTANCE"):
            lines = mod.ACCEPTANCE
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
