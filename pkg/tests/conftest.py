import random

import pytest

from zkti.truth_inference import AnswerMatrix
from zkti.zkti_protocol import Drbg, make_randomness, setup


def random_matrix(n, m, l, seed, density=0.8):
    """Random answers where every task and every worker has at least one entry."""
    rng = random.Random(seed)
    entries = {}
    for i in range(n):
        for j in range(m):
            if rng.random() < density:
                entries[(i, j)] = rng.randrange(l)
        if not any((i, j) in entries for j in range(m)):
            entries[(i, rng.randrange(m))] = rng.randrange(l)
    for j in range(m):
        if not any((i, j) in entries for i in range(n)):
            entries[(rng.randrange(n), j)] = rng.randrange(l)
    return AnswerMatrix(n, m, l, entries)


def planted_matrix(n, m, l, seed, adversarial_frac=0.3, quality=0.8):
    from zkti.cli import generate

    entries, truth, _ = generate(n, m, l, adversarial_frac, quality, seed)
    return AnswerMatrix(n, m, l, entries), truth


def by_task(V):
    return [V.task(i) for i in range(V.n)]


def by_worker(V):
    return [V.worker(j) for j in range(V.m)]


@pytest.fixture(scope="session")
def pp():
    return setup()


@pytest.fixture
def randomness(pp):
    def make(m, seed=1):
        return make_randomness(pp, m, Drbg(seed))

    return make


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
