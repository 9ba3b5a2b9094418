import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cbplab.fourier import FtConfig
from cbplab.geometry import Density, Direction, StarBody
from cbplab.quadrature import make_moduli_rule, make_sphere_rule, make_subsphere_rule
from cbplab.sections import (body_measure, elementary_inequality_gap,
                             parallel_section_function, section_measure_direct,
                             section_measure_fourier)

XI = Direction.from_vector(np.array([0.3, -0.5, 0.6, 0.2, 0.1, 0.5]))


def test_ball_sections():
    d2 = Direction.from_vector(np.array([1.0, 2.0, -0.5, 0.3]))
    assert section_measure_direct(StarBody.ball(2), Density.constant(2), d2,
                                  count=256).value == pytest.approx(math.pi, rel=1e-12)
    assert section_measure_direct(StarBody.ball(3), Density.constant(3), XI,
                                  count=256).value == pytest.approx(math.pi ** 2 / 2, rel=1e-12)
    g = section_measure_direct(StarBody.ball(2), Density.gaussian(2), d2, count=256)
    assert g.value == pytest.approx(math.pi * (1 - math.exp(-1)), rel=1e-12)


def test_body_measures():
    mr = make_moduli_rule(2, 16)
    assert body_measure(StarBody.ball(2), Density.constant(2), mr).value == pytest.approx(
        math.pi ** 2 / 2, rel=1e-12)
    assert body_measure(StarBody.ball(2), Density.gaussian(2), mr).value == pytest.approx(
        math.pi ** 2 * (1 - 2 / math.e), rel=1e-12)
    # the two rule types agree on a non-trivial body
    sr = make_sphere_rule(4, 1 << 14)
    body, f = StarBody.lq(2, 4.0), Density.gaussian(2, 0.8)
    a, b = body_measure(body, f, mr), body_measure(body, f, sr)
    assert abs(a.value - b.value) <= 4 * b.error + 1e-9
    with pytest.raises(ValueError):
        body_measure(body, Density.from_points(2, lambda x: np.ones(x.shape[:-1])), mr)


def test_mismatched_rule_is_rejected():
    other = Direction.from_vector(np.array([1.0, 0, 0, 0, 0, 0]))
    rule = make_subsphere_rule(other, 256)
    with pytest.raises(ValueError):
        section_measure_direct(StarBody.ball(3), Density.constant(3), XI, rule)


def test_parallel_section_function():
    d = Direction.from_vector(np.array([0.0, 0, 1.0, 0]))
    ball, one = StarBody.ball(2), Density.constant(2)
    assert parallel_section_function(ball, one, d, (0.6, 0.0), count=256).value == \
        pytest.approx(0.64 * math.pi, rel=1e-8)
    assert parallel_section_function(ball, one, d, (0.3, 0.4), count=256).value == \
        pytest.approx(0.75 * math.pi, rel=1e-8)
    assert parallel_section_function(ball, one, d, (0.9, 0.9), count=256).value == 0.0
    # at the origin it is the central section
    assert parallel_section_function(ball, one, d, (0.0, 0.0), count=256).value == \
        pytest.approx(math.pi)


@pytest.mark.parametrize("body,density", [
    (StarBody.lq(2, 4.0), Density.gaussian(2)),
    (StarBody.ball(3), Density.gaussian(3, 0.7)),
    (StarBody.lq(3, 3.0), Density.constant(3)),
])
def test_fourier_and_direct_sections_agree(body, density):
    d = Direction.from_vector(np.arange(1.0, 2 * body.n + 1))
    direct = section_measure_direct(body, density, d, count=1 << 14)
    four = section_measure_fourier(body, density, d, FtConfig(count=1 << 14))
    assert four.value == pytest.approx(direct.value, rel=1e-2)


def test_elementary_inequality_exact():
    lhs, rhs = elementary_inequality_gap(Fraction(1), Fraction(2), [0, Fraction(3, 2), 2],
                                         [Fraction(1), Fraction(2)], 2)
    assert isinstance(lhs, Fraction) and lhs <= rhs
    # alpha = 1, n = 2: lhs = a^4/4 - a^2 a^2/2, rhs with upper limit b
    assert lhs == Fraction(1, 4) - Fraction(1, 2)
    # alpha = 1 on (0, 3/2], 2 on (3/2, 2]: int t^3 alpha - int t alpha
    assert rhs == (Fraction(81, 64) + 2 * (16 - Fraction(81, 16)) / 4
                   - (Fraction(9, 8) + 2 * (4 - Fraction(9, 4)) / 2))
    lhs, rhs = elementary_inequality_gap(Fraction(1), Fraction(1), [0, 1], [Fraction(3)], 3)
    assert lhs == rhs


@pytest.mark.parametrize("args", [
    (0, 1, [0, 1], [1]), (1, 1, [0, 1], [-1]), (1, 1, [1, 2], [1]),
    (1, 1, [0, 1, 1], [1, 1]), (1, 2, [0, 1], [1]),
])
def test_elementary_inequality_validation(args):
    with pytest.raises(ValueError):
        elementary_inequality_gap(*args, n=2)


@settings(max_examples=200)
@given(st.floats(0.01, 4), st.floats(0.01, 4), st.integers(2, 6),
       st.lists(st.floats(0, 10), min_size=1, max_size=6))
def test_elementary_inequality_floats(a, b, n, values):
    top = max(a, b)
    edges = list(np.linspace(0, top, len(values) + 1))
    lhs, rhs = elementary_inequality_gap(a, b, edges, values, n)
    assert lhs <= rhs + 1e-12 * (1 + abs(lhs) + abs(rhs))
