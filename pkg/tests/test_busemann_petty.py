import math

import numpy as np
import pytest

from cbplab.busemann_petty import (AffirmativeConfig, BpConfig, BumpFunction, GapRule,
                                   NegativeRegion, PerturbedBody, build_bump, bump_transform,
                                   convexity_check, find_negative_region, measure_gap,
                                   run_affirmative_scan, run_counterexample, sample_directions,
                                   section_gap, select_epsilon, spectral_zonal_transform)
from cbplab.fourier import FtConfig, HomogeneousFunction, PdConfig, ft_homogeneous, pd_test
from cbplab.geometry import (Density, Direction, ModuliTable, StarBody, from_moduli,
                             moduli_to_angles, quarter_turn, rotate, shell_moment)
from cbplab.quadrature import make_subsphere_rule, sphere_area


def _bump(n=4, width=0.5):
    c = np.zeros(n)
    c[:2] = [0.8, 0.6]
    return BumpFunction(c, width)


def test_bump_shape_and_invariance():
    h = _bump()
    assert h(h.axis[None, :])[0] == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((200, 8))
    np.testing.assert_allclose(h(rotate(x, 0.7)), h(x), atol=1e-14)
    vals = h(x)
    assert np.all(vals >= 0) and np.all(vals <= 1)
    # zero once sin(d)^2 = 1 - t reaches sin(width)^2
    far = h.t_of(x) <= 1 - h.s0
    assert np.all(vals[far] == 0)


@pytest.mark.parametrize("kw", [dict(center=[0.5, 0.5], width=0.3),
                                dict(center=[1.0, 0.0], width=2.0),
                                dict(center=[1.0, 0.0], width=0.3, amplitude=-1)])
def test_bump_validation(kw):
    with pytest.raises(ValueError):
        BumpFunction(np.array(kw.pop("center")), **kw)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_closed_form_transform_matches_jacobi_series(n):
    c = np.zeros(n)
    c[0] = 1.0
    g = bump_transform(BumpFunction(c, 0.7))
    t = np.linspace(0.0, 0.9, 19)
    spectral = spectral_zonal_transform(g.bump.profile, n, 320, t)
    scale = np.max(np.abs(g.at_t(t)))
    assert np.max(np.abs(spectral - g.at_t(t))) <= 1e-3 * scale
    assert g.at_t(np.array([0.0]))[0] == pytest.approx(
        (2 * math.pi) ** (2 * n - 1) / sphere_area(2 * n - 2), rel=1e-12)
    assert np.all(g.at_t(np.linspace(g.support, 1, 10)) == 0)


@pytest.mark.parametrize("profile", [lambda t: t, lambda t: t ** 2, lambda t: np.exp(-3 * t)])
def test_bochner_multipliers_against_direct_transform(profile):
    """Zonal profiles whose transform the circle method resolves well."""
    n = 4
    v = from_moduli(np.array([0.8, 0.6, 0, 0.0])).reshape(-1)
    jv = quarter_turn(v).reshape(-1)
    tof = lambda th: (th @ v) ** 2 + (th @ jv) ** 2
    H = HomogeneousFunction(8, -2, lambda th: profile(tof(th)), False)
    rng = np.random.default_rng(2)
    xis = rng.standard_normal((3, 8))
    xis /= np.linalg.norm(xis, axis=1, keepdims=True)
    series = np.array([spectral_zonal_transform(profile, n, 30, [tof(x)])[0] for x in xis])
    scale = np.max(np.abs(series))
    for x, s in zip(xis, series):
        val = ft_homogeneous(H, x)
        assert abs(val.value - s) <= 0.02 * scale + 5 * val.error


def test_funk_identity():
    """int_{S cap H_xi} g = (2 pi)^{2n-1} h(xi)."""
    h = _bump(width=0.6)
    g = bump_transform(h)
    n = h.n
    for xi in (h.axis, from_moduli(np.array([0.7, 0.7, 0.1, math.sqrt(0.01)]))):
        d = Direction.from_vector(xi)
        rule = make_subsphere_rule(d, 1 << 16)
        v, e = rule.integrate(g(rule.nodes))
        expect = (2 * math.pi) ** (2 * n - 1) * h(xi[None, :])[0]
        assert abs(v - expect) <= 5 * e + 1e-6 * expect


@pytest.mark.parametrize("density", [Density.constant(4), Density.gaussian(4, 1.0)])
def test_perturbed_body_solves_radial_equation(density):
    h = _bump()
    g = bump_transform(h)
    L = StarBody.lq(4, 4.0, 0.02)
    K = PerturbedBody(L, density, g, 1e-9)
    rng = np.random.default_rng(3)
    th = rng.standard_normal((300, 8))
    th /= np.linalg.norm(th, axis=1, keepdims=True)
    rho, delta = K.radial_shift(th)
    np.testing.assert_allclose(shell_moment(density, th, rho, delta, 5), -1e-9 * g(th),
                               rtol=1e-8, atol=1e-30)
    assert np.all((delta == 0) == (g(th) == 0))
    np.testing.assert_allclose(K.gauge(K.radial(th)[:, None] * th), 1.0, rtol=1e-12)


def test_section_gap_identity_and_measure_gap():
    """Exact per-direction identity, checked on a cheap n = 3 instance."""
    n = 3
    c = np.array([1.0, 0.0, 0.0])
    h = BumpFunction(c, 0.5)
    g = bump_transform(h)
    K = PerturbedBody(StarBody.ball(n), Density.gaussian(n), g, 1e-6)
    for xi in (h.axis, from_moduli(np.array([0.95, math.sqrt(1 - 0.95 ** 2 - 0.01), 0.1]))):
        gap, err = section_gap(K, Direction.from_vector(xi), GapRule())
        expect = (2 * math.pi) ** (2 * n - 1) * 1e-6 * h(xi[None, :])[0]
        assert gap == pytest.approx(expect, rel=0.02)
        assert err < 0.02 * expect
    mgap, merr, mabs = measure_gap(K)
    assert merr < abs(mgap) and mabs > 0


def test_convexity_check_positive_and_negative_controls():
    assert convexity_check(StarBody.ball(2), planes=16).passed
    assert convexity_check(StarBody.lq(3, 4.0, 0.02), planes=16).passed
    # profile 1 + 0.8 oscillation in the moduli angle: a star body, not convex
    fn = lambda r: 1 + 0.8 * np.cos(8 * moduli_to_angles(r)[..., 0])
    wavy = StarBody.tabulated(ModuliTable.from_function(fn, 2, 129))
    rep = convexity_check(wavy, planes=16)
    assert not rep.passed and rep.min_margin < -0.1


def test_zero_bump_accepts_first_epsilon():
    L = StarBody.lq(4, 4.0, 0.02)
    h = BumpFunction(np.array([1.0, 0, 0, 0]), 0.3, amplitude=0.0)
    res, trials = select_epsilon(L, Density.constant(4), bump_transform(h), eps0=1e-8)
    assert len(trials) == 1 and trials[0].accepted and res.epsilon == 1e-8
    th = np.random.default_rng(4).standard_normal((50, 8))
    np.testing.assert_allclose(res.K.radial(th), L.radial(th), rtol=1e-14)


def test_build_bump_respects_region():
    region = NegativeRegion(np.array([[0.6, 0.8]]), np.array([-1.0]), np.array([0.01]),
                            np.array([[1.0, 0.0], [0.0, 1.0]]))
    h = build_bump(region, max_width=0.8)
    # every outside point must have <center, r> <= cos(width)
    assert np.all(region.outside @ h.center <= math.cos(h.width) + 1e-15)
    tight = NegativeRegion(np.array([[0.6, 0.8]]), np.array([-1.0]), np.array([0.01]),
                           np.array([[0.62, 0.78]] / np.linalg.norm([0.62, 0.78])))
    with pytest.raises(RuntimeError):
        build_bump(tight)


def test_negative_region_needs_negative_report():
    rep = pd_test(StarBody.ball(2), PdConfig(grid=4))
    with pytest.raises(ValueError):
        find_negative_region(StarBody.ball(2), report=rep)


def test_sample_directions():
    h = _bump(width=0.3)
    d = sample_directions(h, 16, 0)
    assert d.shape == (16, 8)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0)
    assert np.sum(h(d) > 0) >= 8
    np.testing.assert_array_equal(d, sample_directions(h, 16, 0))


def test_counterexample_guards_and_failure_report():
    with pytest.raises(ValueError):
        run_counterexample(3, 4.0)
    with pytest.raises(ValueError):
        run_counterexample(4, 2.0)
    # a scan too coarse to resolve anything fails at a named stage
    low = FtConfig(count=100, replicates=2, circle_points=8)
    rep = run_counterexample(4, 4.0, cfg=BpConfig(pd=PdConfig(grid=2, scan=low, refine=low)))
    assert rep.verdict == "inconclusive"
    assert rep.diagnostics["failed_stage"] == "negative_region"


def test_affirmative_scan_small():
    cfg = AffirmativeConfig(pd=PdConfig(grid=8), lattice=4, section_count=512)
    rep = run_affirmative_scan(2, [StarBody.ball(2), StarBody.lq(2, 4.0)],
                               [Density.constant(2), Density.gaussian(2)], pairs=2, cfg=cfg)
    assert rep.verdict == "affirmative_consistent" and not rep.engine_bug
    assert len(rep.pairs) == 2 and all(p["holds"] for p in rep.pairs)
    with pytest.raises(ValueError):
        run_affirmative_scan(4, [StarBody.ball(4)], [Density.constant(4)])
