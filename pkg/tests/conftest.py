import math

import numpy as np
import pytest

from ergomourre.torusdyn import FrequencyVector, FurstenbergSpec, SkewProductSpec, TimeChangeSpec
from ergomourre.trigfun import TrigPoly, exp_poly

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
TWO_PI = 2.0 * math.pi


def skew_sin(amplitude: float = 0.5) -> SkewProductSpec:
    """d = d' = 1, N = m = 1, eta = (amplitude / 2 pi) sin(2 pi x), so g = (2 pi y)^2 (1 + amplitude cos 2 pi x)."""
    eta = TrigPoly.sin([1], amplitude / TWO_PI) if amplitude else TrigPoly.zero(1)
    return SkewProductSpec(FrequencyVector((GOLDEN,)), [[1]], (eta,), (1,))


def furstenberg_d2(amplitude: float = 1.5) -> FurstenbergSpec:
    return FurstenbergSpec(2, GOLDEN, {(2, 1): 1}, (TrigPoly.sin([1], amplitude / TWO_PI),))


def furstenberg_d3() -> FurstenbergSpec:
    h1 = TrigPoly.sin([1], 1.5 / TWO_PI)
    h2 = TrigPoly.sin([0, 1], 1.5 / TWO_PI)
    return FurstenbergSpec(3, GOLDEN, {(2, 1): 1, (3, 2): 1}, (h1, h2))


def timechange_d1() -> TimeChangeSpec:
    return TimeChangeSpec(1, FrequencyVector((1.0,), kind="flow"), TrigPoly.from_harmonics(1, 1.0, [([1], 0.3, 0.0)]))


def timechange_d2() -> TimeChangeSpec:
    f, _ = exp_poly(TrigPoly.cos([0, 1], 0.2))
    return TimeChangeSpec(2, FrequencyVector((1.0, GOLDEN), kind="flow"), f, (0.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# One line per acceptance criterion, repeated in the terminal summary so it
# survives output capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
