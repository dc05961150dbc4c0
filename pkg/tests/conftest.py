"""Shared fixtures: the single-edge reference instance and its variants."""

from __future__ import annotations

import dataclasses

import pytest

from pipesched.batches import enumerate_batches
from pipesched.generator import PathExperimentParams, generate_path_instance
from pipesched.solver import SolverConfig


def single_edge_instance(horizon: int = 24, batches: int = 10, cmax: int | None = None):
    """Refinery feeding one storage site over one pipe: flush batches of
    volume 100 (6 slots), stain batches of volume 44 (3 slots), stock 120,
    tank size 600 unless overridden, nomination `batches` per product."""
    inst = generate_path_instance(
        PathExperimentParams(vertices=2, setting="A", horizon=horizon, nomination_batches=batches)
    )
    if cmax is not None:
        inst = with_capacity(inst, maximum=cmax)
    return inst


def with_capacity(inst, maximum):
    sites = []
    for s in inst.sites:
        if s.kind != "storage" or not s.capacity:
            sites.append(s)
            continue
        caps = {pid: dataclasses.replace(prof, maximum=maximum) for pid, prof in s.capacity.items()}
        sites.append(dataclasses.replace(s, capacity=caps))
    return dataclasses.replace(inst, sites=tuple(sites), name=f"{inst.name}-cmax{maximum}")


@pytest.fixture(scope="session")
def ref1():
    """Horizon 24 base variant; 19 flush + 22 stain placements fit."""
    return single_edge_instance()


@pytest.fixture(scope="session")
def ref1_small():
    """Horizon 12, one nominated batch per product; optimum known by hand."""
    return single_edge_instance(horizon=12, batches=1)


@pytest.fixture(scope="session")
def ref1_long():
    """Horizon 120 with a tank large enough to admit the full nomination."""
    return single_edge_instance(horizon=120, cmax=1200)


@pytest.fixture(scope="session")
def ref1_catalog(ref1):
    return enumerate_batches(ref1)


@pytest.fixture(scope="session")
def quick_cfg():
    """Exact solves for the small fixtures."""
    return SolverConfig(time_limit=120, gap=0.0)


ACCEPTANCE_LINES: list[str] = []
"""Verdict lines collected by the acceptance tests, echoed after the run."""


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance checks")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
