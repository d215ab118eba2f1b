import cmath
import math

import numpy as np
import pytest
from hypothesis import settings, strategies as st

from skinlab.model import ModelParams

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def complex_draw(rng: np.random.Generator, L: int) -> ModelParams:
    """Couplings with random magnitudes and phases, random finite alpha."""
    a, b = rng.uniform(0.5, 1.5, 2)
    pa, pb = rng.uniform(0, 2 * math.pi, 2)
    return ModelParams(a * cmath.exp(1j * pa), b * cmath.exp(1j * pb), rng.uniform(0, 4), L)


def real_draw(rng: np.random.Generator, L: int) -> ModelParams:
    alpha = rng.choice([rng.uniform(0, 4), math.inf])
    return ModelParams.from_g(rng.uniform(-1, 1), float(alpha), L, J=rng.uniform(0.5, 2))


alphas = st.one_of(st.floats(0, 5), st.just(math.inf))
couplings = st.floats(0.2, 3.0)
phases = st.floats(0, 2 * math.pi)


@st.composite
def model_params(draw, min_L=2, max_L=24, real=False):
    a, b = draw(couplings), draw(couplings)
    if not real:
        a *= cmath.exp(1j * draw(phases))
        b *= cmath.exp(1j * draw(phases))
    return ModelParams(a, b, draw(alphas), draw(st.integers(min_L, max_L)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def match_multisets(a, b):
    """Largest distance after greedy minimal-distance pairing."""
    b = list(b)
    worst = 0.0
    for x in a:
        d = [abs(x - y) for y in b]
        k = int(np.argmin(d))
        worst = max(worst, d[k])
        b.pop(k)
    return worst


# acceptance lines are collected here and printed after the run, so they show
# up even with pytest's output capture on
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
