import time

import pytest

from pisot_measure.algebraic import build_context, default_polynomial
from pisot_measure.construction import build_paper_ifs
from pisot_measure.fourier import lower_bound_details, make_evaluator
from pisot_measure.measure import sample_measure

BIG_SAMPLE = 10**7
BIG_DEPTH = 40
BIG_SEED = 20240611

_criterion_lines = []


def record_criterion(line: str) -> None:
    _criterion_lines.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ctx():
    return build_context(default_polynomial(), 50)


@pytest.fixture(scope="session")
def ifs(ctx):
    return build_paper_ifs(ctx)


@pytest.fixture(scope="session")
def ev(ifs):
    return make_evaluator(ifs)


@pytest.fixture(scope="session")
def bound(ev):
    return lower_bound_details(ev)


@pytest.fixture(scope="session")
def big_sample(ifs):
    start = time.perf_counter()
    em = sample_measure(ifs, BIG_DEPTH, BIG_SAMPLE, BIG_SEED, threads=4)
    em.meta["elapsed"] = time.perf_counter() - start
    return em
