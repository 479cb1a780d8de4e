import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from jacobivar.variational import LagrangianSystem, derive  # noqa: E402

SYSTEMS_DIR = Path(__file__).resolve().parent.parent / "systems"

OSCILLATOR = ("q1",), "qd1^2/2 - w^2*q1^2/2", {"w": 1.0}
PENDULUM = ("q1",), "qd1^2/2 + cos(q1)", {}
DOUBLE_PENDULUM = (("q1", "q2"),
                   "qd1^2 + qd2^2/2 + qd1*qd2*cos(q1 - q2) + 2*g*cos(q1) + g*cos(q2)",
                   {"g": 9.81})
MAGNETIC = ("x", "y"), "(dx^2 + dy^2)/2 + B*(x*dy - y*dx)", {"B": 0.7}
MAGNETIC_TRAP = (("x", "y"), "(dx^2 + dy^2)/2 + B*(x*dy - y*dx) - k*(x^2 + y^4/4)",
                 {"B": 0.7, "k": 1.3})
HENON_HEILES = ("x", "y"), "(dx^2 + dy^2)/2 - (x^2 + y^2)/2 - x^2*y + y^3/3", {}
SADDLE = ("q1",), "qd1^2/2 + q1^2/2", {}
FREE = ("q1",), "qd1^2/2", {}
DRIVEN = ("q1",), "qd1^2/2 - t*q1", {}
# velocity- and time-dependent mass, exercises every term of C and K
RHEONOMIC = (("q1", "q2"),
             "(1 + q2^2/2)*qd1^2/2 + qd2^2/2 + sin(t)*q1*qd2 + qd1*qd2*q1/3 - q1^2/2 - q2^2",
             {})


def system(sysdef):
    coords, text, params = sysdef
    return LagrangianSystem.from_text(list(coords), text, params)


@pytest.fixture(scope="session")
def derived():
    cache = {}

    def get(sysdef):
        key = (sysdef[0], sysdef[1], tuple(sorted(sysdef[2].items())))
        if key not in cache:
            cache[key] = derive(system(sysdef))
        return cache[key]
    return get


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
