"""Shared builders for synthetic repositories and signatures."""

from __future__ import annotations

import pytest

from forkscope.fixtures import CommitSpec, build_history
from forkscope.history import RepoHistory

T0 = 1_600_000_000
DAY = 86_400

_acceptance_results: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        _acceptance_results.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_results:
        terminalreporter.section("acceptance criteria")
        for name, outcome in _acceptance_results:
            mark = "PASS" if outcome == "passed" else "FAIL"
            terminalreporter.write_line(f"{mark}  {name}")


def linear_history(repo_id: str, trees: list[dict[str, str]], start: int = T0,
                   step: int = DAY, author: str = "dev") -> RepoHistory:
    """One commit per tree state, a day apart by default."""
    steps = [
        CommitSpec(
            commit_id=f"{repo_id}-c{i}",
            author_time=start + i * step,
            tree=tree,
            author_id=author,
        )
        for i, tree in enumerate(trees)
    ]
    return build_history(repo_id, steps)


@pytest.fixture
def simple_history() -> RepoHistory:
    return linear_history(
        "simple",
        [
            {"a.c": "int main() {\n  return 0;\n}"},
            {"a.c": "int main() {\n  return 1;\n}", "b.c": "int x = 2;"},
            {"b.c": "int x = 3;"},
        ],
    )
