from __future__ import annotations

import json
from pathlib import Path

import pytest

from osmagnav.model import parse_osmag
from osmagnav.passage_graph import build_base_graph, build_caches
from osmagnav.synthetic import generate_synthetic_campus

FIXTURES = Path(__file__).parent / "fixtures"
CAMPUS_SEED = 1


@pytest.fixture(scope="session")
def campus_xml() -> str:
    return (FIXTURES / "campus_seed1.osm").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def campus_manifest() -> dict:
    return json.loads((FIXTURES / "campus_seed1.manifest.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def campus(campus_xml):
    return parse_osmag(campus_xml)


@pytest.fixture(scope="session")
def campus_planning(campus):
    """(pg, cache, build_report) for the campus; the base build is the slow part of the suite."""
    pg, report = build_base_graph(campus)
    cache = build_caches(pg, campus)
    return pg, cache, report


@pytest.fixture(scope="session")
def regenerate_campus():
    def _gen(seed=CAMPUS_SEED, spec=None):
        return generate_synthetic_campus(seed, spec)

    return _gen


# -- acceptance reporting ---------------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
