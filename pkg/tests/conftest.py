import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from rabistark.model import ModelParams, PhasePoint

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# reference parameter sets and their section points
RESONANT_RABI = ModelParams(omega=1.0, omega0=1.0, g=0.4, U=0.0)
STARK_UP = ModelParams(omega=1.0, omega0=1.0, g=0.6, U=0.999)
STARK_DOWN = ModelParams(omega=1.0, omega0=1.0, g=0.2, U=-0.999)
C1 = PhasePoint(0.0, -0.9, 0.0, 1.67033)
C2 = PhasePoint(0.0, -0.9, 0.0, 0.77769)
C3 = PhasePoint(0.0, -0.9, 0.0, 1.08086)


def large_ratio(U):
    return ModelParams(omega=14.0, omega0=1.0, g=5.0, U=U)


finite = dict(allow_nan=False, allow_infinity=False)


@st.composite
def params(draw, g_max=2.0, U_max=0.99):
    return ModelParams(
        omega=draw(st.floats(0.1, 20.0, **finite)),
        omega0=draw(st.floats(0.1, 5.0, **finite)),
        g=draw(st.floats(0.0, g_max, **finite)),
        U=draw(st.floats(-U_max, U_max, **finite)),
    )


@st.composite
def points(draw, r_max=1.9, field=2.0):
    rad = math.sqrt(draw(st.floats(0.0, r_max, **finite)))
    ang = draw(st.floats(0.0, 2 * math.pi, **finite))
    q2 = draw(st.floats(-field, field, **finite))
    p2 = draw(st.floats(-field, field, **finite))
    return PhasePoint(rad * math.cos(ang), rad * math.sin(ang), q2, p2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance bookkeeping: each criterion may be checked by several tests; the
# terminal summary prints one line per criterion, passing only if all parts did
_CRITERIA: dict[int, list[tuple[bool, str]]] = {}


class CriterionLog:
    def __init__(self, number, title):
        self.number, self.title = number, title

    def record(self, ok: bool, detail: str) -> bool:
        _CRITERIA.setdefault(self.number, []).append((bool(ok), detail))
        _CRITERIA_TITLES[self.number] = self.title
        return ok


_CRITERIA_TITLES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        parts = _CRITERIA[k]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {k} {'PASS' if ok else 'FAIL'} ({_CRITERIA_TITLES[k]}): {detail}")
