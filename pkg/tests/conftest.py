import numpy as np
import pytest

from smpsolver import Exponential, Weibull, validate
from smpsolver.cli import DATA_DIR
from smpsolver.modelfile import parse_model

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def kao():
    return parse_model(DATA_DIR / "kao.model")


RATE = 0.8


def two_state(rate=RATE):
    """A -> B after Exponential(rate); B absorbing."""
    return validate(["A", "B"], [[0, 1], [0, 0]], [[None, Exponential(rate)], [None, None]])


def chain3(r1=1.5, r2=0.6):
    return validate(
        ["1", "2", "3"],
        [[0, 1, 0], [0, 0, 1], [0, 0, 0]],
        {("1", "2"): Exponential(r1), ("2", "3"): Exponential(r2)},
    )


def cycle2(lam=1.0, mu=2.0):
    return validate(["A", "B"], [[0, 1], [1, 0]], {("A", "B"): Exponential(lam), ("B", "A"): Exponential(mu)})


def weibull_cycle():
    return validate(["up", "down"], [[0, 1], [1, 0]], {("up", "down"): Weibull(2.0, 1.0), ("down", "up"): Weibull(0.8, 2.0)})


def reliability():
    """Working / under repair / unrepairable, state 3 absorbing (illustrative parameters)."""
    return validate(
        ["working", "repair", "unrepairable"],
        [[0, 0.85, 0.15], [0.9, 0, 0.1], [0, 0, 0]],
        {
            ("working", "repair"): Weibull(2.0, 25.0),
            ("working", "unrepairable"): Weibull(1.5, 10.0),
            ("repair", "working"): Weibull(0.8, 1.0),
            ("repair", "unrepairable"): Exponential(0.5),
        },
    )


# name -> (model factory, start state, time grid)
CORPUS = {
    "two_state": (two_state, "A", np.array([0.25, 0.8, 1.5, 3.0, 6.0])),
    "chain3": (chain3, "1", np.array([0.3, 1.0, 2.0, 4.0, 8.0])),
    "cycle2": (cycle2, "A", np.array([0.2, 0.6, 1.2, 2.0, 3.0])),
    "weibull_cycle": (weibull_cycle, "up", np.array([0.3, 1.0, 2.0, 3.5, 5.0])),
    "reliability": (reliability, "working", np.array([1.0, 3.0, 8.0, 15.0, 30.0])),
}


@pytest.fixture(params=sorted(CORPUS))
def corpus_case(request, kao):
    factory, start, times = CORPUS[request.param]
    return request.param, factory(), start, times


@pytest.fixture(params=sorted(CORPUS) + ["kao"])
def any_case(request, kao):
    if request.param == "kao":
        return "kao", kao, "CCU", np.array([24.0, 120.0, 360.0, 720.0, 1440.0])
    factory, start, times = CORPUS[request.param]
    return request.param, factory(), start, times


@pytest.fixture(scope="session")
def kao_solver(kao):
    from smpsolver import SmpSolver

    return SmpSolver(kao)
