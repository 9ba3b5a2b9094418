"""Measures of bodies and of their complex-hyperplane sections."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import optimize

from .fourier import FtConfig, FtValue, HomogeneousFunction, ft_homogeneous
from .geometry import Density, Direction, StarBody, radial_moment, ray_moment
from .quadrature import (ModuliRule, SphereRule, SubsphereRule, make_subsphere_rule)


@dataclass(frozen=True)
class Estimate:
    value: float
    error: float


def _check_rule(rule: SubsphereRule, xi: Direction):
    B = rule.nodes
    if np.max(np.abs(B @ xi.xi)) > 1e-10 or np.max(np.abs(B @ xi.xi_perp)) > 1e-10:
        raise ValueError("subsphere rule does not lie in H_xi")


def section_measure_direct(body: StarBody, density: Density, xi: Direction,
                           rule: SubsphereRule | None = None, count: int = 1 << 14,
                           seed: int = 0) -> Estimate:
    """mu(K cap H_xi) in polar coordinates on H_xi."""
    n = body.n
    if rule is None:
        rule = make_subsphere_rule(xi, count, seed)
    else:
        _check_rule(rule, xi)
    vals = radial_moment(body, density, 2 * n - 3, rule.nodes)
    v, e = rule.integrate(vals)
    return Estimate(float(v), float(e))


def body_measure(body: StarBody, density: Density, rule) -> Estimate:
    """mu(K) = int_S int_0^rho r^{2n-1} f(r theta) dr dtheta.

    A ModuliRule needs a density depending on the moduli only; a SphereRule
    works for any density and also returns a replicate error.
    """
    n = body.n
    if isinstance(rule, ModuliRule):
        if not density.moduli_only:
            raise ValueError("moduli rules need a density that depends on the moduli only")
        pts = np.zeros((len(rule.nodes), 2 * n))
        pts[:, 0::2] = rule.nodes
        return Estimate(float(rule.integrate(radial_moment(body, density, 2 * n - 1, pts))), 0.0)
    vals = radial_moment(body, density, 2 * n - 1, rule.nodes)
    v, e = rule.integrate(vals)
    return Estimate(float(v), float(e))


def _slice_center(body: StarBody, foot: np.ndarray, B: np.ndarray):
    """A point of (foot + H) strictly inside the body, or None if the slice misses it."""
    if body.gauge(foot) < 1 - 1e-12:
        return foot
    # the gauge is convex, so its minimum over the affine slice is well posed
    res = optimize.minimize(lambda y: float(body.gauge(foot + y @ B)), np.zeros(len(B)),
                            method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12,
                                                           "maxiter": 20000})
    if res.fun >= 1 - 1e-9:
        return None
    return foot + res.x @ B


def _chord(body: StarBody, center, dirs, tol: float = 1e-10) -> np.ndarray:
    """Distance from `center` to the boundary along each unit direction (bisection)."""
    g0 = float(body.gauge(center))
    # gauge(c + t u) >= t gauge(u) - gauge(c) bounds the exit time
    hi = (1.0 + g0) / body.gauge(dirs) * (1 + 1e-9)
    lo = np.zeros(len(dirs))
    while np.any(hi - lo > tol * np.maximum(hi, 1.0)):
        mid = 0.5 * (lo + hi)
        inside = body.gauge(center + mid[:, None] * dirs) <= 1.0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


def parallel_section_function(body: StarBody, density: Density, xi: Direction, u,
                              rule: SubsphereRule | None = None, count: int = 1 << 14,
                              seed: int = 0) -> Estimate:
    """A(u): f-weighted measure of K cap {<x, xi> = u_1, <x, xi_perp> = u_2}.

    Integrates in polar coordinates about an interior point of the slice.
    This is valid because slices of convex bodies are convex.
    """
    n = body.n
    u = np.asarray(u, dtype=float)
    if rule is None:
        rule = make_subsphere_rule(xi, count, seed)
    foot = u[0] * xi.xi + u[1] * xi.xi_perp
    if not np.any(u):
        return section_measure_direct(body, density, xi, rule)
    center = _slice_center(body, foot, xi.h_basis)
    if center is None:
        return Estimate(0.0, 0.0)
    lengths = _chord(body, center, rule.nodes)
    vals = ray_moment(density, center, rule.nodes, lengths, 2 * n - 3)
    v, e = rule.integrate(vals)
    return Estimate(float(v), float(e))


def section_spherical_part(body: StarBody, density: Density) -> HomogeneousFunction:
    """x -> |x|^{-2n+2} int_0^{|x|/||x||_K} r^{2n-3} f(r x/|x|) dr, as a homogeneous function."""
    n = body.n
    if not density.moduli_only:
        # invariance of the transform along the circle through xi and xi_perp
        # relies on the radial moment being a function of the moduli
        invariant = False
    else:
        invariant = True
    return HomogeneousFunction(2 * n, -(2 * n - 2),
                               lambda th: radial_moment(body, density, 2 * n - 3, th),
                               invariant, "section-moment")


def section_measure_fourier(body: StarBody, density: Density, xi: Direction,
                            cfg: FtConfig = FtConfig()) -> FtValue:
    """mu(K cap H_xi) = (1/2 pi) (radial-moment function)^(xi)."""
    v = ft_homogeneous(section_spherical_part(body, density), xi, cfg)
    return FtValue(v.value / (2 * math.pi), v.error / (2 * math.pi),
                   v.stat_error / (2 * math.pi), v.truncation / (2 * math.pi))


# -- elementary inequality ------------------------------------------------------

def _piece_integral(edges, values, upper, power):
    """int_0^upper t^power alpha(t) dt for piecewise-constant alpha."""
    total = []
    for lo, hi, a in zip(edges[:-1], edges[1:], values):
        if lo >= upper:
            break
        hi = min(hi, upper)
        total.append(a * (hi ** (power + 1) - lo ** (power + 1)) / (power + 1))
    if isinstance(upper, Fraction):
        return sum(total, Fraction(0))
    return math.fsum(total)


def elementary_inequality_gap(a, b, edges: Sequence, values: Sequence, n: int):
    """Both sides of the moment comparison for a piecewise-constant weight alpha.

    alpha equals values[i] on (edges[i], edges[i+1]], with edges[0] = 0 and
    edges[-1] >= max(a, b).  Returns (lhs, rhs) with

        lhs = int_0^a t^{2n-1} alpha - a^2 int_0^a t^{2n-3} alpha,
        rhs = int_0^b t^{2n-1} alpha - a^2 int_0^b t^{2n-3} alpha,

    and lhs <= rhs always.  Fraction inputs give exact rational results.
    """
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if any(v < 0 for v in values):
        raise ValueError("alpha must be non-negative")
    if len(edges) != len(values) + 1 or edges[0] != 0:
        raise ValueError("edges must start at 0 and bracket every piece")
    if any(e1 <= e0 for e0, e1 in zip(edges[:-1], edges[1:])):
        raise ValueError("edges must be increasing")
    if edges[-1] < max(a, b):
        raise ValueError("alpha must be defined on (0, max(a, b)]")
    hi, lo = 2 * n - 1, 2 * n - 3
    lhs = _piece_integral(edges, values, a, hi) - a * a * _piece_integral(edges, values, a, lo)
    rhs = _piece_integral(edges, values, b, hi) - a * a * _piece_integral(edges, values, b, lo)
    return lhs, rhs
