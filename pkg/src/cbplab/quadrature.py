"""Quadrature rules on spheres and the damped oscillatory radial kernel.

Sphere rules are randomized quasi-Monte Carlo: scrambled Sobol points pushed
through the inverse normal CDF and normalized.  Each rule is built from
several independent scramblings (replicates) so that every integral comes
with an error estimate.  Sums go through numpy's pairwise summation, which
is deterministic for a fixed array layout.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special
from scipy.stats import norm, qmc

from .geometry import Direction, angles_to_moduli

MIN_SPHERE_COUNT = 100


def sphere_area(N: int) -> float:
    """|S^{N-1}| = 2 pi^{N/2} / Gamma(N/2)."""
    return 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)


@dataclass(frozen=True)
class SphereRule:
    N: int
    nodes: np.ndarray        # (count, N) unit vectors
    weights: np.ndarray      # (count,)
    replicate: np.ndarray    # (count,) replicate index of each node
    replicates: int
    seed: int

    def integrate(self, values) -> tuple[float, float]:
        """Weighted sum and its standard error from the replicate spread.

        `values` may carry extra leading axes; the node axis is last.
        """
        values = np.asarray(values, dtype=float)
        total = np.sum(values * self.weights, axis=-1)
        if self.replicates < 2:
            return total, np.zeros_like(total)
        per = values.reshape(values.shape[:-1] + (self.replicates, -1))
        w = self.weights.reshape(self.replicates, -1)
        reps = np.sum(per * w, axis=-1) * self.replicates
        err = np.std(reps, axis=-1, ddof=1) / math.sqrt(self.replicates)
        return total, err


@dataclass(frozen=True)
class SubsphereRule(SphereRule):
    direction: Direction = None


@dataclass(frozen=True)
class ModuliRule:
    """Rule for invariant integrands: sum w_i Phi(r_i) ~ int_{S^{2n-1}} Phi(moduli(theta))."""

    n: int
    nodes: np.ndarray    # (count, n) unit moduli vectors
    weights: np.ndarray

    def integrate(self, values) -> float:
        return np.sum(np.asarray(values, dtype=float) * self.weights, axis=-1)


def _sobol_sphere(N: int, m: int, seed) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # non power-of-two sizes
        u = qmc.Sobol(N, scramble=True, seed=seed).random(m)
    z = norm.ppf(np.clip(u, 1e-15, 1 - 1e-15))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def make_sphere_rule(N: int, count: int, seed: int = 0, replicates: int = 8) -> SphereRule:
    """Equal-weight randomized QMC rule on S^{N-1} with `count` nodes in total."""
    if N < 2:
        raise ValueError("sphere dimension N must be >= 2")
    if count < MIN_SPHERE_COUNT:
        raise ValueError(f"count must be >= {MIN_SPHERE_COUNT}, got {count}")
    replicates = max(1, int(replicates))
    m = count // replicates
    if m < 2:
        raise ValueError("too few nodes per replicate")
    streams = np.random.SeedSequence(seed).spawn(replicates)
    nodes = np.concatenate([_sobol_sphere(N, m, np.random.default_rng(s)) for s in streams])
    total = m * replicates
    weights = np.full(total, sphere_area(N) / total)
    rep = np.repeat(np.arange(replicates), m)
    return SphereRule(N, nodes, weights, rep, replicates, seed)


def make_subsphere_rule(d: Direction, count: int, seed: int = 0,
                        replicates: int = 8) -> SubsphereRule:
    """Rule on the unit sphere of the complex hyperplane H_xi (an S^{2n-3})."""
    B = np.asarray(d.h_basis)
    gram = B @ B.T
    if np.max(np.abs(gram - np.eye(len(B)))) > 1e-8:
        raise ValueError("h_basis is not orthonormal")
    if np.max(np.abs(B @ d.xi)) > 1e-8 or np.max(np.abs(B @ d.xi_perp)) > 1e-8:
        raise ValueError("h_basis is not orthogonal to xi and xi_perp")
    base = make_sphere_rule(B.shape[0], count, seed, replicates)
    return SubsphereRule(B.shape[1], base.nodes @ B, base.weights, base.replicate,
                         base.replicates, seed, direction=d)


def make_moduli_rule(n: int, count: int = 24) -> ModuliRule:
    """Gauss-Legendre product rule in hyperspherical angles on the moduli orthant.

    `count` nodes per angle.  Weights carry the torus factor (2 pi)^n prod r_j
    and the surface element of S^{n-1}.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    x, w = np.polynomial.legendre.leggauss(count)
    a1 = (x + 1) * np.pi / 4
    w1 = w * np.pi / 4
    grids = np.meshgrid(*([a1] * (n - 1)), indexing="ij")
    ang = np.stack(grids, axis=-1).reshape(-1, n - 1)
    wts = np.prod(np.stack(np.meshgrid(*([w1] * (n - 1)), indexing="ij"), -1)
                  .reshape(-1, n - 1), axis=1)
    # surface element of S^{n-1}: prod_i sin(a_i)^{n-1-i}
    for i in range(n - 1):
        wts = wts * np.sin(ang[:, i]) ** (n - 2 - i)
    r = angles_to_moduli(ang)
    wts = wts * (2 * np.pi) ** n * np.prod(r, axis=1)
    return ModuliRule(n, r, wts)


# -- oscillatory radial kernel and Abel limits -------------------------------

def oscillatory_radial(s: float, a: float, eps: float, rtol: float = 1e-11) -> float:
    """I_s(a; eps) = int_0^inf r^{s-1} cos(a r) exp(-eps r^2) dr."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if s < 1:
        raise ValueError("s must be >= 1")
    # beyond R the Gaussian factor is below 1e-30 of the peak moment
    R = math.sqrt((70.0 + max(s, 1) * abs(math.log(eps)) + s * 5) / eps)
    if a == 0:
        val, _ = integrate.quad(lambda r: r ** (s - 1) * math.exp(-eps * r * r), 0, R,
                                epsabs=0, epsrel=rtol, limit=400)
        return val
    val, _ = integrate.quad(lambda r: r ** (s - 1) * math.exp(-eps * r * r), 0, R,
                            weight="cos", wvar=abs(a), epsabs=0, epsrel=rtol, limit=2000)
    return val


def eps_schedule(eps0: float = 0.5, levels: int = 6, ratio: float = 4.0) -> np.ndarray:
    return eps0 * ratio ** -np.arange(levels, dtype=float)


@dataclass(frozen=True)
class AbelLimit:
    value: float
    residual: float
    converged: bool
    iterates: tuple


def richardson_zero(eps: Sequence[float], values: Sequence[float], tol: float = 1e-4,
                    max_order: int = 3) -> AbelLimit:
    """Extrapolate values(eps) to eps = 0 assuming a power series in eps.

    Polynomial (Neville) extrapolation on the smallest eps values, raising the
    order until two successive extrapolants agree to `tol` relative.
    """
    eps = np.asarray(eps, dtype=float)
    vals = np.asarray(values, dtype=float)
    order = np.argsort(eps)
    eps, vals = eps[order], vals[order]
    iterates = []
    for k in range(1, min(max_order + 1, len(eps)) + 1):
        e, v = eps[:k], vals[:k]
        # Lagrange interpolant at zero
        est = 0.0
        for i in range(k):
            li = 1.0
            for j in range(k):
                if j != i:
                    li *= e[j] / (e[j] - e[i])
            est += v[i] * li
        iterates.append(est)
    if len(iterates) < 2:
        return AbelLimit(iterates[-1], math.inf, False, tuple(iterates))
    # keep the iterate that moved least: higher orders eventually feel the
    # non-polynomial (exponentially small) terms carried by the larger eps
    diffs = [abs(iterates[i] - iterates[i - 1]) for i in range(1, len(iterates))]
    best = int(np.argmin(diffs))
    value, res = iterates[best + 1], diffs[best]
    scale = max(abs(value), 1e-9 * float(np.max(np.abs(vals))), 1e-300)
    return AbelLimit(float(value), float(res), bool(res <= tol * scale), tuple(iterates))


def abel_limit(fn: Callable[[float], float], schedule=None, tol: float = 1e-4) -> AbelLimit:
    """lim_{eps -> 0} fn(eps) over a geometric eps schedule."""
    schedule = eps_schedule() if schedule is None else np.asarray(schedule)
    vals = [fn(float(e)) for e in schedule]
    return richardson_zero(schedule, vals, tol=tol)


def damped_bessel_moment(s: float, k: int, eps: float) -> float:
    """2 pi int_0^inf r^{s-1} J_k(r) exp(-eps r^2) dr.

    This is the circle-Fourier coefficient of the Gaussian-damped kernel:
    2 int_0^pi I_s(sin phi; eps) cos(k phi) dphi for even k.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    R = math.sqrt((60.0 + s * abs(math.log(eps))) / eps)
    f = lambda r: r ** (s - 1) * special.jv(k, r) * math.exp(-eps * r * r)
    # integrate between successive multiples of pi to tame the oscillation
    edges = np.arange(0.0, R + math.pi, math.pi)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        total = math.fsum(integrate.quad(f, lo, hi, epsabs=0, epsrel=1e-12, limit=200)[0]
                          for lo, hi in zip(edges[:-1], edges[1:]))
    return 2 * math.pi * total


@dataclass(frozen=True)
class AxialRule:
    """Rule on the unit sphere of a complex subspace, adapted to a complex axis u.

    Nodes are sqrt(t) e^{i phi} u + sqrt(1 - t) omega with omega on the unit
    sphere of the complex complement of u, so the integrand's dependence on
    t = |<u, theta>_C|^2 is resolved by Gauss nodes in t.  Two t-rules of
    different order share the (phi, omega) nodes; their difference is the
    t-part of the error estimate.  Nodes are assembled lazily per t-node.
    """

    axis: np.ndarray        # (N,) unit vector u
    t: np.ndarray           # (nt,) nodes of both t-rules
    t_weights: np.ndarray   # (2, nt): fine and coarse weights, with (1 - t)^{m-2} / 2
    phi: np.ndarray         # (nphi,)
    omega: SphereRule       # rule on the complement, embedded in R^N

    @property
    def count(self) -> int:
        return len(self.t) * len(self.phi) * len(self.omega.nodes)

    def slab(self, i: int) -> np.ndarray:
        """All nodes at t-node i, shape (nphi, nomega, N)."""
        u = self.axis
        ring = np.cos(self.phi)[:, None] * u + np.sin(self.phi)[:, None] * _quarter(u)
        ti = self.t[i]
        return (math.sqrt(ti) * ring[:, None, :]
                + math.sqrt(1.0 - ti) * self.omega.nodes[None, :, :])

    def integrate(self, fn: Callable[[int, np.ndarray], np.ndarray]) -> tuple[float, float]:
        """Integrate fn(i, nodes_at_t_i) -> values of shape (nphi, nomega).

        Returns (value, error); the error adds the replicate spread of the
        omega rule and the fine/coarse t-rule difference in quadrature.
        """
        reps = np.zeros((2, self.omega.replicates))
        wo = self.omega.weights.reshape(self.omega.replicates, -1)
        for i in range(len(self.t)):
            vals = np.asarray(fn(i, self.slab(i)), dtype=float).mean(axis=0) * (2 * math.pi)
            per = np.sum(vals.reshape(self.omega.replicates, -1) * wo, axis=-1)
            reps += self.t_weights[:, i, None] * per
        reps *= self.omega.replicates
        fine, coarse = reps.mean(axis=1)
        stat = 0.0
        if self.omega.replicates > 1:
            stat = float(np.std(reps[0], ddof=1) / math.sqrt(self.omega.replicates))
        return float(fine), float(math.hypot(stat, fine - coarse))


def _quarter(x):
    out = np.empty_like(x)
    out[..., 0::2] = -x[..., 1::2]
    out[..., 1::2] = x[..., 0::2]
    return out


def make_axial_rule(basis, axis, nt: int = 256, nphi: int = 16, count: int = 2048,
                    seed: int = 0, replicates: int = 8, t_range=(0.0, 1.0)) -> AxialRule:
    """AxialRule on the unit sphere of span(basis), a complex subspace.

    `basis` has orthonormal rows spanning a subspace closed under the
    quarter-turn; `axis` is a unit vector in it (any unit vector of the
    subspace is used when `axis` is None or zero).  Only t in `t_range` is
    covered: use it when the integrand vanishes outside that interval.
    """
    B = np.asarray(basis, dtype=float)
    m2 = B.shape[0]
    if m2 % 2 or m2 < 4:
        raise ValueError("subspace must have even real dimension >= 4")
    if axis is None or np.linalg.norm(axis) < 1e-12:
        axis = B[0]
    u = np.asarray(axis, dtype=float)
    u = u / np.linalg.norm(u)
    if np.linalg.norm(B @ u) < 1 - 1e-8:
        raise ValueError("axis does not lie in the subspace")
    # complex complement of u inside the subspace
    Q = B - np.outer(B @ u, u) - np.outer(B @ _quarter(u), _quarter(u))
    U, sv, Vt = np.linalg.svd(Q, full_matrices=False)
    W = Vt[: m2 - 2]
    if sv[m2 - 3] < 1e-8:
        raise ValueError("subspace is not closed under the quarter-turn")
    m = m2 // 2
    t0, t1 = map(float, t_range)
    if not 0 <= t0 < t1 <= 1:
        raise ValueError("t_range must satisfy 0 <= t0 < t1 <= 1")
    ts, tws = [], []
    for k in (nt, max(nt * 3 // 4, 2)):
        x, w = np.polynomial.legendre.leggauss(k)
        tk = t0 + (t1 - t0) * (x + 1) / 2
        ts.append(tk)
        tws.append(w * (t1 - t0) / 2 * (1 - tk) ** (m - 2) / 2)
    t = np.concatenate(ts)
    tw = np.zeros((2, len(t)))
    tw[0, :nt] = tws[0]
    tw[1, nt:] = tws[1]
    phi = 2 * math.pi * np.arange(nphi) / nphi
    base = make_sphere_rule(m2 - 2, count, seed, replicates)
    omega = SphereRule(B.shape[1], base.nodes @ W, base.weights, base.replicate,
                       base.replicates, seed)
    return AxialRule(u, t, tw, phi, omega)
