import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cbplab.geometry import (ComplexDimension, Density, Direction, ModuliTable, StarBody,
                             angles_to_moduli, circle_average, from_moduli, moduli,
                             moduli_to_angles, quarter_turn, radial_moment, ray_moment,
                             rotate, shell_moment)

vectors = st.lists(st.floats(-3, 3, allow_nan=False), min_size=4, max_size=8).filter(
    lambda v: len(v) % 2 == 0 and np.linalg.norm(v) > 1e-3)
angles = st.floats(-10, 10, allow_nan=False)


def test_dimension_validation():
    with pytest.raises(ValueError):
        ComplexDimension(0)
    with pytest.raises(ValueError):
        moduli(np.ones(3))


@given(vectors, angles, angles)
def test_rotation_group_law_and_moduli(v, a, b):
    x = np.array(v)
    np.testing.assert_allclose(rotate(rotate(x, a), b), rotate(x, a + b), atol=1e-12)
    np.testing.assert_allclose(moduli(rotate(x, a)), moduli(x), atol=1e-12)
    np.testing.assert_allclose(rotate(x, np.pi / 2), quarter_turn(x), atol=1e-12)


@given(vectors)
def test_quarter_turn(v):
    x = np.array(v)
    assert abs(x @ quarter_turn(x)) < 1e-12
    np.testing.assert_allclose(quarter_turn(quarter_turn(x)), -x)


def test_moduli_roundtrips():
    rng = np.random.default_rng(0)
    r = np.abs(rng.standard_normal((50, 4)))
    r /= np.linalg.norm(r, axis=1, keepdims=True)
    np.testing.assert_allclose(angles_to_moduli(moduli_to_angles(r)), r, atol=1e-12)
    ph = rng.uniform(0, 2 * np.pi, r.shape)
    np.testing.assert_allclose(moduli(from_moduli(r, ph)), r, atol=1e-12)


@settings(max_examples=30)
@given(vectors)
def test_direction_frame(v):
    d = Direction.from_vector(np.array(v))
    B = d.h_basis
    assert B.shape == (len(v) - 2, len(v))
    np.testing.assert_allclose(B @ B.T, np.eye(len(B)), atol=1e-10)
    assert np.max(np.abs(B @ d.xi)) < 1e-10 and np.max(np.abs(B @ d.xi_perp)) < 1e-10
    # H_xi is a complex subspace: closed under the quarter turn
    JB = quarter_turn(B)
    np.testing.assert_allclose(JB @ B.T @ B, JB, atol=1e-10)


def test_direction_rejects_zero():
    with pytest.raises(ValueError):
        Direction.from_vector(np.zeros(4))


@pytest.mark.parametrize("body", [StarBody.ball(3, 1.5), StarBody.lq(3, 4.0),
                                  StarBody.lq(3, 1.0), StarBody.lq(2, 8.0, delta=0.1)])
def test_gauge_radial_consistency(body):
    rng = np.random.default_rng(1)
    th = rng.standard_normal((100, 2 * body.n))
    th /= np.linalg.norm(th, axis=1, keepdims=True)
    rho = body.radial(th)
    np.testing.assert_allclose(body.gauge(rho[:, None] * th), 1.0, rtol=1e-12)
    np.testing.assert_allclose(body.gauge(3 * th), 3 * body.gauge(th), rtol=1e-12)
    assert body.gauge(np.zeros(2 * body.n)) == 0
    assert np.all(rho <= body.max_radius() * (1 + 1e-12))
    np.testing.assert_allclose(body.scaled(2.0).radial(th), 2 * rho)


def test_l2_ball_is_euclidean():
    th = np.random.default_rng(2).standard_normal((20, 6))
    np.testing.assert_allclose(StarBody.lq(3, 2.0).gauge(th), StarBody.ball(3).gauge(th))


def test_moduli_table_interpolates_smooth_function():
    fn = lambda r: 1 + 0.3 * r[..., 0] ** 2 * r[..., 1] ** 2 + 0.1 * r[..., 2] ** 4
    tab = ModuliTable.from_function(fn, 3, 33)
    rng = np.random.default_rng(3)
    r = np.abs(rng.standard_normal((200, 3)))
    r /= np.linalg.norm(r, axis=1, keepdims=True)
    assert np.max(np.abs(tab(r) - fn(r))) < 1e-5
    body = StarBody.tabulated(tab)
    np.testing.assert_allclose(body.radial(from_moduli(r)), tab(r))


def test_densities():
    x = np.random.default_rng(4).standard_normal((10, 4))
    np.testing.assert_allclose(Density.constant(2)(x), 1.0)
    np.testing.assert_allclose(Density.gaussian(2, 2.0)(x), np.exp(-np.sum(x * x, 1) / 4))
    assert Density.gaussian(2).moduli_only
    assert not Density.from_points(2, lambda p: np.ones(p.shape[:-1])).moduli_only
    with pytest.raises(ValueError):
        Density.gaussian(2, -1.0)


@pytest.mark.parametrize("power", [1, 3, 5])
def test_ray_moment_closed_forms_match_quadrature(power):
    """The closed forms at the origin against the generic adaptive rule."""
    rng = np.random.default_rng(5)
    dirs = rng.standard_normal((30, 4))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    L = rng.uniform(0.2, 2.0, 30)
    g = Density.gaussian(2, 0.8)
    generic = Density.from_points(2, g)  # same function, no shortcut
    np.testing.assert_allclose(ray_moment(g, None, dirs, L, power),
                               ray_moment(generic, None, dirs, L, power), rtol=1e-9)
    one = Density.constant(2)
    np.testing.assert_allclose(ray_moment(one, None, dirs, L, power),
                               L ** (power + 1) / (power + 1))


def test_shell_moment_matches_difference():
    f = Density.gaussian(2, 1.0)
    th = np.random.default_rng(6).standard_normal((20, 4))
    th /= np.linalg.norm(th, axis=1, keepdims=True)
    body = StarBody.lq(2, 4.0)
    rho = body.radial(th)
    diff = (radial_moment(body.scaled(1.1), f, 3, th) - radial_moment(body, f, 3, th))
    np.testing.assert_allclose(shell_moment(f, th, rho, 0.1 * rho, 3), diff, rtol=1e-10)
    # tiny shells keep their relative accuracy: first-order term p r^p f(r)
    dr = 1e-13 * rho
    expect = dr * rho ** 3 * f(rho[:, None] * th)
    np.testing.assert_allclose(shell_moment(f, th, rho, dr, 3), expect, rtol=1e-10)


def test_circle_average_is_invariant():
    a = np.array([0.7, -0.2, 0.4, 0.1])
    f = Density.from_points(2, lambda x: np.exp(x @ a - np.sum(x * x, -1)))
    avg = circle_average(f, 2)
    rng = np.random.default_rng(7)
    x = rng.standard_normal((40, 4))
    for t in rng.uniform(0, 2 * np.pi, 5):
        np.testing.assert_allclose(avg(rotate(x, t)), avg(x), rtol=1e-12)
    # an invariant density is left unchanged
    g = Density.gaussian(2)
    np.testing.assert_allclose(circle_average(g, 2)(x), g(x), rtol=1e-13)
    with pytest.raises(ValueError):
        circle_average(f, 2, m=4)
