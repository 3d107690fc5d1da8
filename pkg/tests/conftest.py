from pathlib import Path

import pytest

from nedstats.corpus import load_corpus
from nedstats.kb import load_kb

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def kb_small():
    return load_kb(FIXTURES / "kb_small")


@pytest.fixture(scope="session")
def kb_jaguar():
    return load_kb(FIXTURES / "kb_jaguar")


@pytest.fixture(scope="session")
def corpus5():
    return load_corpus(FIXTURES / "corpus5.jsonl")


@pytest.fixture(scope="session")
def name_groups():
    groups = {}
    for line in (FIXTURES / "groups.tsv").read_text().splitlines():
        g, e = line.split("\t")
        groups.setdefault(g, []).append(int(e))
    return groups


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
