"""Fourier transforms of even homogeneous functions on R^N.

Convention: f^(xi) = int f(x) exp(-i <x, xi>) dx.

For g(x) = G(x/|x|) |x|^{-p} with 0 < p < N and s = N - p, polar coordinates
give  g^(xi) = int_{S^{N-1}} G(theta) Phi_s(<theta, xi>) dtheta  with the
distribution Phi_s(a) = int_0^inf r^{s-1} cos(a r) dr.  Slicing the sphere
into great circles through xi,

    theta(phi) = sin(phi) xi + cos(phi) eta,    eta in S^{N-1} orthogonal to xi,

turns this into  (1/2) int_{S^{N-2}} C_eta deta  where C_eta pairs
|cos phi|^{N-2} G(theta(phi)) with Phi_s(sin phi) around the circle.  In the
Fourier basis of the circle that pairing is diagonal,

    int_0^{2 pi} Phi_s(sin phi) e^{i k phi} dphi = 2 pi int_0^inf r^{s-1} J_k(r) dr
                                                = pi 2^s Gamma((k+s)/2) / Gamma((k-s)/2 + 1),

(Weber's integral, analytically continued), so each circle costs one dot
product with a fixed weight vector.  The same coefficients are obtainable as
Abel limits of the Gaussian-damped integrals; `kernel="abel"` builds them
that way and caches them on disk.
"""
from __future__ import annotations

import hashlib
import logging
import math
import os
from dataclasses import dataclass, field, replace
from itertools import combinations_with_replacement
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import special

from .geometry import Direction, StarBody, from_moduli, moduli, rotate
from .quadrature import (SphereRule, abel_limit, damped_bessel_moment, eps_schedule,
                         make_moduli_rule, make_sphere_rule, sphere_area)

LOGGER = logging.getLogger(__name__)

NEGATIVE_SIGMAS = 5.0


@dataclass(frozen=True)
class HomogeneousFunction:
    """G(x/|x|) |x|^degree, degree = -p with 0 < p < N; G even."""

    N: int
    degree: float
    spherical: Callable = field(compare=False)
    invariant: bool = True
    name: str = ""

    def __post_init__(self):
        if not 0 < -self.degree < self.N:
            raise ValueError(f"degree must lie in (-N, 0), got {self.degree}")

    @classmethod
    def from_moduli(cls, N: int, degree: float, fn, name: str = "") -> "HomogeneousFunction":
        """Spherical part given as a function of unit moduli vectors."""
        return cls(N, degree, lambda th: fn(moduli(th)), True, name)

    @classmethod
    def euclidean_power(cls, N: int, p: float, coef: float = 1.0) -> "HomogeneousFunction":
        return cls(N, -p, lambda th: np.full(th.shape[:-1], coef), True, f"|x|^-{p:g}")

    @classmethod
    def body_power(cls, body: StarBody, k: int = 2) -> "HomogeneousFunction":
        """||x||_K^{-k}."""
        return cls(2 * body.n, -k, lambda th: body.radial(th) ** k, True, f"||x||^-{k}")

    @property
    def p(self) -> float:
        return -self.degree

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        return self.spherical(x / r[..., None]) * r ** self.degree

    def scaled(self, c: float) -> "HomogeneousFunction":
        G = self.spherical
        return HomogeneousFunction(self.N, self.degree, lambda th: c * G(th), self.invariant,
                                   self.name)

    def __add__(self, other: "HomogeneousFunction") -> "HomogeneousFunction":
        if (other.N, other.degree) != (self.N, self.degree):
            raise ValueError("can only add functions of equal dimension and degree")
        A, B = self.spherical, other.spherical
        return HomogeneousFunction(self.N, self.degree, lambda th: A(th) + B(th),
                                   self.invariant and other.invariant)


# -- circle kernel --------------------------------------------------------------

def kernel_weight(s: float, k) -> np.ndarray:
    """pi 2^s Gamma((k+s)/2) / Gamma((k-s)/2 + 1); zero where the denominator has a pole."""
    k = np.abs(np.asarray(k, dtype=float))
    d = (k - s) / 2 + 1
    lognum = math.log(math.pi) + s * math.log(2.0) + special.gammaln((k + s) / 2)
    pos = d > 0
    out = np.empty_like(k)
    out[pos] = np.exp(lognum[pos] - special.gammaln(d[pos]))
    out[~pos] = np.exp(lognum[~pos]) * special.rgamma(d[~pos])
    return out


def damped_kernel_weight(s: float, k, eps: float) -> np.ndarray:
    """2 pi int_0^inf r^{s-1} J_k(r) exp(-eps r^2) dr in closed form (Kummer function)."""
    import mpmath

    out = []
    with mpmath.workdps(30):
        for kk in map(int, np.abs(np.asarray(k, dtype=int)).ravel()):
            a = mpmath.mpf(kk + s) / 2
            val = (mpmath.gamma(a) / (2 ** (kk + 1) * mpmath.mpf(eps) ** a * mpmath.factorial(kk))
                   * mpmath.hyp1f1(a, kk + 1, -1 / (4 * mpmath.mpf(eps))))
            out.append(float(2 * mpmath.pi * val))
    return np.array(out).reshape(np.shape(k))


def cache_dir() -> Path:
    return Path(os.environ.get("CBP_CACHE_DIR", Path.home() / ".cache" / "cbplab"))


def abel_kernel_weights(s: float, kmax: int, schedule=None, tol: float = 1e-6) -> np.ndarray:
    """Kernel weights W_0..W_kmax (even k only) as Abel limits of damped integrals.

    Results are cached under CBP_CACHE_DIR; an unreadable or mismatched cache
    file is rebuilt.
    """
    schedule = eps_schedule() if schedule is None else np.asarray(schedule, dtype=float)
    key = hashlib.sha256(f"{s!r}|{kmax}|{schedule.tolist()!r}".encode()).hexdigest()[:16]
    path = cache_dir() / f"abel_kernel_{key}.npz"
    ks = np.arange(0, kmax + 1, 2)
    try:
        with np.load(path) as data:
            if np.array_equal(data["k"], ks) and float(data["s"]) == s:
                return data["w"]
    except Exception:  # absent or corrupt: derived data, rebuild it
        pass
    w = np.empty(len(ks))
    for i, k in enumerate(ks):
        lim = abel_limit(lambda e: damped_bessel_moment(s, int(k), e), schedule, tol=tol)
        if not lim.converged and abs(lim.value) > 1e-6 * abs(kernel_weight(s, k) + 1):
            LOGGER.warning("Abel limit for s=%g k=%d not converged: %s", s, k, lim.iterates[-2:])
        w[i] = lim.value
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + f".{os.getpid()}.tmp.npz")
        np.savez(tmp, k=ks, s=s, w=w)
        os.replace(tmp, path)
    except OSError as exc:
        LOGGER.warning("could not write kernel cache %s: %s", path, exc)
    return w


_WEIGHTS: dict = {}


def circle_weights(s: float, K: int, kernel: str = "analytic", damping: float = 0.0) -> np.ndarray:
    """Weights w_j with  C = sum_j h(pi j / K) w_j  for pi-periodic h.

    Exact for h band-limited to |frequency| < K (even frequencies only).
    A positive `damping` eps uses the kernel of g(x) exp(-eps |x|^2) instead.
    """
    key = (s, K, kernel, damping)
    if key not in _WEIGHTS:
        _WEIGHTS[key] = _circle_weights(s, K, kernel, damping)
    return _WEIGHTS[key]


def _circle_weights(s, K, kernel, damping):
    if K % 2:
        raise ValueError("K must be even")
    kp = np.arange(-(K // 2 - 1), K // 2)
    k = 2 * np.abs(kp)
    if damping > 0:
        W = damped_kernel_weight(s, k, damping)
    elif kernel == "analytic":
        W = kernel_weight(s, k)
    elif kernel == "abel":
        table = abel_kernel_weights(s, int(k.max()))
        W = table[k // 2]
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    phi = np.pi * np.arange(K) / K
    return (np.cos(np.outer(phi, 2 * kp)) @ W) / K


# -- the transform --------------------------------------------------------------

@dataclass(frozen=True)
class FtConfig:
    count: int = 8192          # nodes on S^{N-2}, all replicates together
    replicates: int = 8
    circle_points: int = 64    # samples per half circle
    seed: int = 0
    kernel: str = "analytic"
    damping: float = 0.0       # eps > 0 transforms g(x) exp(-eps |x|^2) instead
    chunk: int = 1 << 21       # max points evaluated per batch


@dataclass(frozen=True)
class FtValue:
    value: float
    error: float
    stat_error: float
    truncation: float

    @property
    def converged(self) -> bool:
        return bool(np.isfinite(self.value) and np.isfinite(self.error))


_RULES: dict = {}


def _rule(N: int, cfg: FtConfig) -> SphereRule:
    key = (N - 1, cfg.count, cfg.seed, cfg.replicates)
    if key not in _RULES:
        _RULES[key] = make_sphere_rule(N - 1, cfg.count, cfg.seed, cfg.replicates)
    return _RULES[key]


def _frame(xi: np.ndarray) -> np.ndarray:
    """Orthogonal map sending e_ref to xi; it maps e_ref^perp onto xi^perp.

    e_ref is the first odd-index basis vector not too close to +-xi, so
    directions with zero phases (the scan grids) all share e_ref = e_1 and
    the map depends smoothly on xi there.
    """
    N = xi.size
    ref = next((i for i in list(range(1, N, 2)) + list(range(0, N, 2)) if abs(xi[i]) < 0.7))
    e = np.zeros(N)
    e[ref] = 1.0
    v = e - xi
    H = np.eye(N) - 2 * np.outer(v, v) / (v @ v)
    keep = [i for i in range(N) if i != ref]
    return H[:, keep]  # columns: images of the remaining basis vectors


def ft_homogeneous(g: HomogeneousFunction, xi, cfg: FtConfig = FtConfig(),
                   rule: Optional[SphereRule] = None) -> FtValue:
    """Evaluate g^ at xi (any nonzero vector) with an error estimate.

    The error combines the replicate spread of the S^{N-2} integral with the
    change observed when the circle resolution is halved.
    """
    xi = np.asarray(xi.xi if isinstance(xi, Direction) else xi, dtype=float)
    N = g.N
    if xi.shape != (N,):
        raise ValueError(f"xi must have shape ({N},)")
    scale = np.linalg.norm(xi)
    u = xi / scale
    s = N - g.p
    K = cfg.circle_points
    rule = rule or _rule(N, cfg)
    w_full = circle_weights(s, K, cfg.kernel, cfg.damping)
    w_half = circle_weights(s, K // 2, cfg.kernel, cfg.damping)
    phi = np.pi * np.arange(K) / K
    sin, cos = np.sin(phi), np.cos(phi)
    cosp = cos ** (N - 2)
    eta = rule.nodes @ _frame(u).T
    per = max(1, cfg.chunk // (K * N))
    full = np.empty(len(eta))
    half = np.empty(len(eta))
    for lo in range(0, len(eta), per):
        e = eta[lo:lo + per]
        pts = sin[None, :, None] * u + cos[None, :, None] * e[:, None, :]
        h = cosp * g.spherical(pts)
        full[lo:lo + per] = h @ w_full
        half[lo:lo + per] = h[:, ::2] @ w_half
    # (1/2): every great circle is swept twice as eta runs over S^{N-2}
    val, stat = rule.integrate(0.5 * full)
    val_half, _ = rule.integrate(0.5 * half)
    trunc = abs(val - val_half)
    # the damped transform is not homogeneous: only unit xi is meaningful
    if cfg.damping > 0 and abs(scale - 1) > 1e-12:
        raise ValueError("damped transforms are evaluated on the unit sphere only")
    fac = scale ** (g.p - N)
    return FtValue(float(val * fac), float(math.hypot(stat, trunc) * fac),
                   float(stat * fac), float(trunc * fac))


def ft_many(g: HomogeneousFunction, xis, cfg: FtConfig = FtConfig(), threads: int = 1):
    """ft_homogeneous over a batch of directions; returns (values, errors)."""
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    rule = _rule(g.N, cfg)
    run = lambda x: ft_homogeneous(g, x, cfg, rule)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as ex:
            res = list(ex.map(run, xis))
    else:
        res = [run(x) for x in xis]
    return np.array([r.value for r in res]), np.array([r.error for r in res])


def classical_transform(N: int, alpha: float) -> float:
    """(|x|^{-alpha})^ on the unit sphere: 2^{N-alpha} pi^{N/2} Gamma((N-alpha)/2) / Gamma(alpha/2)."""
    return 2 ** (N - alpha) * math.pi ** (N / 2) * math.gamma((N - alpha) / 2) / math.gamma(alpha / 2)


# -- positive definiteness of ||x||^{-2} ------------------------------------------

def moduli_lattice(n: int, D: int, symmetric: bool = False) -> np.ndarray:
    """Unit moduli r with r_j^2 = k_j / D, k a composition of D into n parts.

    With `symmetric` only non-increasing k are kept (one representative per
    permutation orbit).
    """
    pts = []
    if symmetric:
        for c in combinations_with_replacement(range(D + 1), n - 1):
            k = np.diff((0,) + c + (D,))
            if np.all(np.diff(k) <= 0):
                pts.append(k)
    else:
        for c in combinations_with_replacement(range(D + 1), n - 1):
            pts.append(np.diff((0,) + c + (D,)))
    k = np.array(pts, dtype=float)
    return np.sqrt(k / D)


@dataclass(frozen=True)
class PdConfig:
    grid: int = 40
    scan: FtConfig = FtConfig(count=2048, replicates=8, circle_points=64)
    refine: FtConfig = FtConfig(count=16384, replicates=16, circle_points=128, seed=1)
    n_refine: int = 4
    max_refine: int = 48
    max_rel_error: float = 0.05
    nonsmooth_damping: float = 0.02
    threads: int = 1


@dataclass
class PdReport:
    min_value: float
    witness: Direction
    margin: float           # -min_value / error_estimate
    error_estimate: float
    classification: str     # "nonnegative" | "negative" | "inconclusive"
    scan_points: int
    scale: float            # max |value| over the scan
    damping: float = 0.0
    grid: np.ndarray = field(repr=False, default=None)       # scanned moduli
    values: np.ndarray = field(repr=False, default=None)
    errors: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "min_value": self.min_value,
            "witness_moduli": moduli(self.witness.xi).tolist(),
            "margin_sigmas": self.margin,
            "error_estimate": self.error_estimate,
            "classification": self.classification,
            "scan_points": self.scan_points,
            "scale": self.scale,
            "damping": self.damping,
        }


def is_permutation_symmetric(body: StarBody) -> bool:
    return body.kind in ("euclidean_ball", "complex_lq")


def pd_test(body: StarBody, cfg: PdConfig = PdConfig()) -> PdReport:
    """Sign scan of (||x||_K^{-2})^ over moduli directions.

    A direction's transform depends only on its moduli, so the scan runs
    over the moduli lattice (zero phases).  Points that look negative or
    sit within noise of zero are re-evaluated with the finer configuration,
    and the classification is made on those refined values.

    For non-smooth bodies the transform of ||x||^{-2} exp(-eps |x|^2) is
    scanned instead: it is the transform convolved with a positive Gaussian,
    so its sign pattern certifies (non)negativity just the same.
    """
    n = body.n
    damping = 0.0 if body.smooth else cfg.nonsmooth_damping
    if damping:
        cfg = replace(cfg, scan=replace(cfg.scan, damping=damping),
                      refine=replace(cfg.refine, damping=damping))
    g = HomogeneousFunction.body_power(body, 2)
    grid = moduli_lattice(n, cfg.grid, symmetric=is_permutation_symmetric(body))
    xis = from_moduli(grid)
    vals, errs = ft_many(g, xis, cfg.scan, cfg.threads)
    scale = float(np.max(np.abs(vals)))
    suspicious = np.flatnonzero(vals < NEGATIVE_SIGMAS * errs)
    lowest = np.argsort(vals)[:cfg.n_refine]
    idx = np.unique(np.concatenate([lowest, suspicious[np.argsort(vals[suspicious])]
                                    [:cfg.max_refine]]))
    rvals, rerrs = ft_many(g, xis[idx], cfg.refine, cfg.threads)
    vals, errs = vals.copy(), errs.copy()
    vals[idx], errs[idx] = rvals, rerrs
    # witness: the most significant negative value, else the smallest value
    score = vals / np.maximum(errs, 1e-300)
    i = int(np.argmin(score)) if np.any(vals < 0) else int(np.argmin(vals))
    mv, me = float(vals[i]), float(errs[i])
    complete = bool(np.all(np.isfinite(vals)) and np.all(np.isfinite(errs)))
    unresolved = set(suspicious.tolist()) - set(idx.tolist())
    if not complete or me > cfg.max_rel_error * scale:
        cls = "inconclusive"
    elif mv < -NEGATIVE_SIGMAS * me:
        cls = "negative"
    elif np.all(vals >= -NEGATIVE_SIGMAS * errs) and not unresolved:
        cls = "nonnegative"
    else:
        cls = "inconclusive"
    return PdReport(mv, Direction.from_moduli(grid[i]), -mv / me if me > 0 else math.inf,
                    me, cls, len(grid), scale, damping, grid, vals, errs)


# -- symmetry and Parseval checks -----------------------------------------------

@dataclass(frozen=True)
class ConstancyReport:
    deviation: float
    error: float
    values: tuple


def ft_constancy_check(g: HomogeneousFunction, xi, m: int = 16,
                       cfg: FtConfig = FtConfig()) -> ConstancyReport:
    """max_j |g^(R_{theta_j} xi) - g^(xi)| over m angles on the circle through xi and xi_perp."""
    xi = np.asarray(xi.xi if isinstance(xi, Direction) else xi, dtype=float)
    thetas = 2 * np.pi * np.arange(m) / m
    pts = rotate(xi[None, :], thetas)
    vals, errs = ft_many(g, pts, cfg)
    dev = float(np.max(np.abs(vals - vals[0])))
    err = float(np.max(np.hypot(errs, errs[0])))
    return ConstancyReport(dev, err, tuple(vals.tolist()))


@dataclass(frozen=True)
class ParsevalResult:
    lhs: float
    rhs: float
    ratio: float
    rhs_error: float


def parseval_check(g: HomogeneousFunction, body: StarBody, k: int = 2,
                   cfg: FtConfig = FtConfig(), moduli_count: int = 16) -> ParsevalResult:
    """Both sides of the spherical Parseval pairing for ||x||_K^{-k} and g.

    lhs = int_S g(theta) ||theta||^{-k},  rhs = int_S g^(xi) (||.||^{-k})^(xi);
    `ratio` = lhs / rhs is the normalisation constant of the pairing, which
    must not depend on the body.
    """
    if k != 2:
        raise ValueError("only k = 2 is supported")
    n = body.n
    if g.N != 2 * n or g.p != 2 * n - k:
        raise ValueError("g must be homogeneous of degree -(2n-k) on R^{2n}")
    if not g.invariant:
        raise ValueError("parseval_check integrates in moduli coordinates; g must be invariant")
    mr = make_moduli_rule(n, moduli_count)
    pts = from_moduli(mr.nodes)
    lhs = float(mr.integrate(g.spherical(pts) * body.radial(pts) ** k))
    bp = HomogeneousFunction.body_power(body, k)
    gv, ge = ft_many(g, pts, cfg)
    bv, be = ft_many(bp, pts, cfg)
    rhs = float(mr.integrate(gv * bv))
    rerr = float(np.sqrt(mr.integrate((ge * np.abs(bv)) ** 2 + (be * np.abs(gv)) ** 2)
                         * mr.integrate(np.ones_like(gv))) if len(gv) else 0.0)
    return ParsevalResult(lhs, rhs, lhs / rhs, rerr)
