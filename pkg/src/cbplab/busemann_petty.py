"""Perturbation experiments for the complex Busemann-Petty problem.

Starting from a body L whose ||x||_L^{-2} has a Fourier transform that is
negative somewhere, the pipeline builds a smooth non-negative R_theta-invariant
bump h supported where the transform is negative, computes the transform
g |x|^{-2n+2} of h |x|^{-2}, and defines K by

    int_0^{rho_K} t^{2n-3} f(t theta) dt = int_0^{rho_L} t^{2n-3} f(t theta) dt - eps g(theta).

Every complex section of K then has smaller measure than the matching section
of L, by (2 pi)^{2n-1} eps h(xi), while mu(K) > mu(L).

The bump depends on theta through t = |<v, theta>_C|^2 for a fixed unit
vector v.  Such zonal functions expand in the Jacobi polynomials
P_j^{(n-2, 0)}(2t - 1), which are spherical harmonics of degree 2j, so the
transform is diagonal with the classical Bochner multipliers.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .fourier import (NEGATIVE_SIGMAS, HomogeneousFunction, PdConfig, PdReport,
                      is_permutation_symmetric, moduli_lattice, pd_test)
from .geometry import (Density, Direction, StarBody, from_moduli, quarter_turn, radial_moment,
                       shell_moment)
from .quadrature import make_axial_rule, make_moduli_rule, make_subsphere_rule, sphere_area
from .sections import body_measure, section_measure_direct

def _complex_inner_sq(v, theta) -> np.ndarray:
    """|<v, theta>_C|^2 for pair-layout vectors."""
    re = theta[..., 0::2] @ v[0::2] + theta[..., 1::2] @ v[1::2]
    im = theta[..., 1::2] @ v[0::2] - theta[..., 0::2] @ v[1::2]
    return re * re + im * im


def _bump_derivatives(x, order: int) -> list:
    """B, B', ..., B^(order) for B(x) = exp(1 - 1/(1 - x)) on x < 1, zero beyond.

    Uses B' = phi' B with phi(x) = 1 - 1/(1 - x), phi^(m) = -m!/(1 - x)^(m+1).
    """
    x = np.asarray(x, dtype=float)
    inside = x < 1
    y = np.where(inside, 1 - x, 1.0)
    B = [np.where(inside, np.exp(1 - 1 / y), 0.0)]
    dphi = [-math.factorial(m) / y ** (m + 1) for m in range(1, order + 1)]
    for k in range(order):
        B.append(sum(math.comb(k, i) * dphi[i] * B[k - i] for i in range(k + 1)))
    return B


@dataclass(frozen=True)
class BumpFunction:
    """Exponential bump around the phase circle of v = from_moduli(center).

    With d the angle between theta and the circle {e^{i phi} v}, so that
    sin(d)^2 = 1 - |<v, theta>_C|^2,

        h(theta) = amplitude * B(sin(d)^2 / sin(width)^2),  B(x) = exp(1 - 1/(1 - x)),

    which is smooth, R_theta-invariant, equal to `amplitude` on the circle and
    zero for d >= width.
    """

    center: np.ndarray
    width: float
    amplitude: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        if c.ndim != 1 or np.any(c < 0) or abs(np.linalg.norm(c) - 1) > 1e-9:
            raise ValueError("center must be a unit vector of moduli")
        if not 0 < self.width < math.pi / 2:
            raise ValueError("width must lie in (0, pi/2)")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def axis(self) -> np.ndarray:
        return from_moduli(self.center).reshape(-1)

    @property
    def s0(self) -> float:
        return math.sin(self.width) ** 2

    def profile(self, t) -> np.ndarray:
        """h as a function of t = |<v, theta>_C|^2."""
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        return self.amplitude * _bump_derivatives((1 - t) / self.s0, 0)[0]

    def t_of(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return _complex_inner_sq(self.axis, theta / np.linalg.norm(theta, axis=-1, keepdims=True))

    def __call__(self, theta) -> np.ndarray:
        return self.profile(self.t_of(theta))

    def moduli_support_cosine(self) -> float:
        """h(theta) > 0 forces <center, moduli(theta)> > cos(width)."""
        return math.cos(self.width)


@dataclass(frozen=True)
class ZonalTransform:
    """g on S^{2n-1} with (h |x|^{-2})^ = g(xi/|xi|) |xi|^{-2n+2}, h a BumpFunction.

    g depends on t = |<v, theta>_C|^2 only.  Restricted to a complex
    hyperplane H_xi, t = a s with a = 1 - t(xi) and s Beta(1, n-2)
    distributed, so the identity int_{S cap H_xi} g = (2 pi)^{2n-1} h(xi)
    becomes an Abel equation in a whose solution is

        G(t) = (2 pi)^{2n-1} / ((n-2)! |S^{2n-3}|) * D^{n-2} [t^{n-2} B(t / s0)] * amplitude.

    g is therefore supported on t < sin(width)^2, near the complex hyperplane
    orthogonal to v.
    """

    bump: BumpFunction

    @property
    def n(self) -> int:
        return self.bump.n

    @property
    def axis(self) -> np.ndarray:
        return self.bump.axis

    @property
    def support(self) -> float:
        """g vanishes for t >= support."""
        return self.bump.s0

    @property
    def constant(self) -> float:
        n = self.n
        return ((2 * math.pi) ** (2 * n - 1) / (math.factorial(n - 2) * sphere_area(2 * n - 2))
                * self.bump.amplitude)

    def at_t(self, t) -> np.ndarray:
        n, s0 = self.n, self.bump.s0
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        m = n - 2
        B = _bump_derivatives(t / s0, m)
        # Leibniz rule for D^m [t^m B(t/s0)]
        total = sum(math.comb(m, i) * math.factorial(m) / math.factorial(m - i)
                    * t ** (m - i) * B[m - i] / s0 ** (m - i) for i in range(m + 1))
        return self.constant * total

    def __call__(self, theta) -> np.ndarray:
        return self.at_t(self.bump.t_of(theta))

    def homogeneous(self) -> HomogeneousFunction:
        return HomogeneousFunction(2 * self.n, -(2 * self.n - 2), self, True, "bump-transform")

    def extremes(self, samples: int = 20001) -> tuple[float, float]:
        vals = self.at_t(np.linspace(0.0, self.support, samples))
        return float(min(vals.min(), 0.0)), float(max(vals.max(), 0.0))


def bump_transform(h: BumpFunction) -> ZonalTransform:
    """Transform of h |x|^{-2}; see ZonalTransform for the closed form."""
    return ZonalTransform(h)


# -- spectral cross-check -------------------------------------------------------

def bochner_multipliers(n: int, J: int) -> np.ndarray:
    """Multipliers of Y_{2j}(x/|x|) |x|^{-2} -> Y_{2j}(xi/|xi|) |xi|^{-2n+2} in R^{2n}."""
    j = np.arange(J + 1)
    return ((-1.0) ** j * 4.0 ** (n - 1) * math.pi ** n
            * np.exp(special.gammaln(n - 1 + j) - special.gammaln(1 + j)))


def _jacobi_table(J: int, a: float, x) -> np.ndarray:
    """P_j^{(a, 0)}(x) for j = 0..J via the three-term recurrence, shape (J+1, len(x))."""
    x = np.asarray(x, dtype=float)
    P = np.empty((J + 1,) + x.shape)
    P[0] = 1.0
    if J >= 1:
        P[1] = (a + 1) + (a + 2) * (x - 1) / 2
    for j in range(1, J):
        k = j + 1
        c1 = 2 * k * (k + a) * (2 * k + a - 2)
        c2 = (2 * k + a - 1) * (a * a)
        c3 = (2 * k + a - 1) * (2 * k + a) * (2 * k + a - 2)
        c4 = 2 * (k + a - 1) * (k - 1) * (2 * k + a)
        P[k] = ((c2 + c3 * x) * P[j] - c4 * P[j - 1]) / c1
    return P


def spectral_zonal_transform(profile, n: int, degree: int, t, nodes: int | None = None):
    """Transform of profile(t) |x|^{-2} by Jacobi expansion and Bochner multipliers.

    P_j^{(n-2, 0)}(2t - 1) is a degree-2j spherical harmonic, so the transform is
    diagonal.  Independent of the closed form; converges slowly near t = 1.
    """
    a = n - 2
    x, w = special.roots_jacobi(nodes or 2 * degree + 64, a, 0)
    norms = 2.0 ** (a + 1) / (2 * np.arange(degree + 1) + a + 1)
    coef = (_jacobi_table(degree, a, x) @ (w * profile((x + 1) / 2))) / norms
    mc = bochner_multipliers(n, degree) * coef
    t = np.asarray(t, dtype=float)
    return mc @ _jacobi_table(degree, a, 2 * t.reshape(-1) - 1)


# -- the perturbed body ---------------------------------------------------------

@dataclass(frozen=True)
class PerturbedBody:
    """K with radial moment M_K = M_L - eps g, solved per direction.

    Duck-types the StarBody interface used by the measurement code
    (n, radial, gauge, max_radius).
    """

    base: StarBody
    density: Density
    g: ZonalTransform
    epsilon: float
    rtol: float = 1e-10
    smooth: bool = True
    kind: str = "perturbed"

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def dim(self):
        return self.base.dim

    def radial_shift(self, theta):
        """(rho_L, rho_K - rho_L) without cancellation."""
        theta = np.asarray(theta, dtype=float)
        theta = theta / np.linalg.norm(theta, axis=-1, keepdims=True)
        rho = self.base.radial(theta)
        rhs = self.epsilon * self.g(theta)
        return rho, self._solve(theta, rho, rhs)

    def _solve(self, theta, rho, rhs):
        """Delta with int_rho^{rho+Delta} t^p f(t theta) dt = -rhs, by safeguarded Newton."""
        p = 2 * self.n - 3
        f = self.density
        if f.kind == "constant_one":
            x = (p + 1) * rhs / rho ** (p + 1)
            if np.any(x >= 1):
                raise ValueError("right-hand side of the radial equation is not positive")
            return rho * np.expm1(np.log1p(-x) / (p + 1))
        slope = lambda r: r ** p * f(r[..., None] * theta)
        delta = -rhs / slope(rho)
        for _ in range(50):
            F = shell_moment(f, theta, rho, delta, p) + rhs
            if np.any(rho + delta <= 0):
                raise ValueError("right-hand side of the radial equation is not positive")
            step = F / slope(rho + delta)
            # keep the root bracketed by the origin
            delta = np.maximum(delta - step, 0.5 * (delta - rho))
            if np.all(np.abs(step) <= self.rtol * np.maximum(np.abs(delta), 1e-300) + 1e-300):
                return delta
        raise RuntimeError("radial equation did not converge")

    def radial(self, theta) -> np.ndarray:
        rho, delta = self.radial_shift(theta)
        return rho + delta

    def gauge(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        norm = np.linalg.norm(x, axis=-1)
        safe = np.where(norm > 0, norm, 1.0)
        return np.where(norm > 0, norm / self.radial(x / safe[..., None]), 0.0)

    def max_radius(self, samples: int = 1 << 14, seed: int = 0) -> float:
        """Sampled bound: the base bound plus twice the largest sampled outward shift.

        Half of the samples lie where g is non-zero, since only there does K
        differ from the base body.
        """
        rng = np.random.default_rng(seed)
        pts = np.concatenate([rng.standard_normal((samples // 2, 2 * self.n)),
                              _support_points(self.g, samples // 2, rng)])
        _, delta = self.radial_shift(pts)
        return self.base.max_radius() + 2 * max(float(delta.max()), 0.0)


def _support_points(g: "ZonalTransform", count: int, rng) -> np.ndarray:
    """Random unit vectors with t = |<v, theta>_C|^2 uniform on [0, support)."""
    N = 2 * g.n
    u, ju = g.axis, quarter_turn(g.axis).reshape(-1)
    w = rng.standard_normal((count, N))
    w -= np.outer(w @ u, u) + np.outer(w @ ju, ju)
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    t = rng.uniform(0, g.support, count)[:, None]
    phi = rng.uniform(0, 2 * math.pi, count)[:, None]
    return np.sqrt(t) * (np.cos(phi) * u + np.sin(phi) * ju) + np.sqrt(1 - t) * w


# -- convexity ------------------------------------------------------------------

@dataclass(frozen=True)
class ConvexityReport:
    min_margin: float       # min over planes and angles of r^2 + 2 r'^2 - r r''
    worst_plane: np.ndarray = field(repr=False)
    passed: bool
    planes: int
    points: int
    tol: float

    def to_dict(self) -> dict:
        return {"min_margin": self.min_margin, "passed": self.passed, "planes": self.planes,
                "points": self.points, "tol": self.tol}


def _random_planes(N: int, count: int, rng) -> np.ndarray:
    out = np.empty((count, 2, N))
    for k in range(count):
        q, _ = np.linalg.qr(rng.standard_normal((N, 2)))
        out[k] = q.T
    return out


def focused_planes(g: ZonalTransform, count: int, rng) -> np.ndarray:
    """Planes through random points where g is non-zero (t < support)."""
    pts = _support_points(g, count, rng)
    d = rng.standard_normal(pts.shape)
    d -= np.sum(d * pts, axis=1, keepdims=True) * pts
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return np.stack([pts, d], axis=1)


def coordinate_planes(n: int) -> np.ndarray:
    """Planes spanned by pairs of standard basis vectors from different coordinates."""
    N = 2 * n
    E = np.eye(N)
    return np.array([[E[i], E[j]] for i in range(N) for j in range(i + 1, N)
                     if i // 2 != j // 2])


def convexity_check(body, planes: int = 64, seed: int = 0, points: int = 512,
                    tol: float = 1e-9, extra_planes=None) -> ConvexityReport:
    """Polar convexity test on central planar sections.

    A planar star-shaped curve r(phi) bounds a convex region iff
    r^2 + 2 r'^2 - r r'' >= 0; derivatives are spectral (the radial function
    of a smooth body is smooth and periodic along every great circle).
    """
    rng = np.random.default_rng(seed)
    P = _random_planes(2 * body.n, planes, rng)
    if extra_planes is not None and len(extra_planes):
        P = np.concatenate([P, np.asarray(extra_planes, dtype=float)])
    phi = 2 * math.pi * np.arange(points) / points
    k = np.fft.rfftfreq(points, 1.0 / points)
    worst, worst_plane = math.inf, None
    for a, b in P:
        r = body.radial(np.cos(phi)[:, None] * a + np.sin(phi)[:, None] * b)
        R = np.fft.rfft(r)
        r1 = np.fft.irfft(1j * k * R, points)
        r2 = np.fft.irfft(-(k ** 2) * R, points)
        m = float(np.min(r * r + 2 * r1 * r1 - r * r2))
        if m < worst:
            worst, worst_plane = m, np.array([a, b])
    return ConvexityReport(worst, worst_plane, worst >= -tol, len(P), points, tol)


# -- negative region and bump ---------------------------------------------------

@dataclass(frozen=True)
class NegativeRegion:
    """Scanned moduli points where the transform is significantly negative.

    Iterating yields (moduli point, transform value) pairs, most negative first.
    `outside` holds every other scanned point, expanded over coordinate
    permutations when the scan used one representative per orbit.
    """

    points: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    outside: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter(zip(self.points, self.values))

    def __len__(self) -> int:
        return len(self.points)


def _permutation_orbit(pts: np.ndarray) -> np.ndarray:
    n = pts.shape[1]
    out = np.concatenate([pts[:, list(p)] for p in itertools.permutations(range(n))])
    return np.unique(np.round(out, 14), axis=0)


def find_negative_region(body: StarBody, cfg: PdConfig = PdConfig(),
                         report: PdReport | None = None) -> NegativeRegion:
    """Lattice moduli points with transform below -5 sigma, from a pd_test scan."""
    report = report if report is not None else pd_test(body, cfg)
    if report.classification != "negative":
        raise ValueError(f"pd_test classified the body as {report.classification!r}, "
                         "a negative region needs a negative classification")
    mask = report.values < -NEGATIVE_SIGMAS * report.errors
    if not mask.any():
        raise RuntimeError("grid-resolution failure: negative pd_test but empty region")
    order = np.argsort(report.values[mask])
    outside = report.grid[~mask]
    if is_permutation_symmetric(body) and len(outside):
        outside = _permutation_orbit(outside)
    return NegativeRegion(report.grid[mask][order], report.values[mask][order],
                          report.errors[mask][order], outside)


def build_bump(region: NegativeRegion, max_width: float = 0.3, min_width: float = 0.05,
               shrink: float = 0.8) -> BumpFunction:
    """Bump at the most negative region point, as wide as the region allows.

    At a zero-phase point with moduli r, t = <center, r>^2, so the bump
    vanishes there exactly when <center, r> <= cos(width).
    """
    if len(region) == 0:
        raise ValueError("empty region")
    c = np.asarray(region.points[0], dtype=float)
    c = c / np.linalg.norm(c)
    cos_out = region.outside @ c if len(region.outside) else np.zeros(1)
    w = max_width
    while w >= min_width:
        if np.all(cos_out <= math.cos(w)):
            return BumpFunction(c, w)
        w *= shrink
    raise RuntimeError("no bump width fits inside the negative region")


# -- perturbation ---------------------------------------------------------------

@dataclass(frozen=True)
class PerturbationResult:
    K: PerturbedBody
    epsilon: float
    g: ZonalTransform
    convexity: ConvexityReport
    rhs_min: float


@dataclass(frozen=True)
class ConvexityConfig:
    planes: int = 64
    focused: int = 64
    points: int = 1024
    tol: float = 1e-9
    seed: int = 0


def rhs_minimum(L, f: Density, g: ZonalTransform, epsilon: float, samples: int = 1 << 14,
                seed: int = 0) -> float:
    """min over sampled directions of M_L(theta) - eps g(theta); must stay positive."""
    rng = np.random.default_rng(seed)
    pts = np.concatenate([rng.standard_normal((samples // 2, 2 * L.n)),
                          _support_points(g, samples // 2, rng)])
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return float(np.min(radial_moment(L, f, 2 * L.n - 3, pts) - epsilon * g(pts)))


def perturb_body(L: StarBody, f: Density, g: ZonalTransform, epsilon: float,
                 convexity: ConvexityConfig = ConvexityConfig()) -> PerturbationResult:
    """K from M_K = M_L - eps g, with its positivity and convexity diagnostics."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    rmin = rhs_minimum(L, f, g, epsilon)
    if rmin <= 0:
        raise ValueError(f"epsilon {epsilon:g} too large: radial equation has rhs {rmin:g}")
    K = PerturbedBody(L, f, g, epsilon)
    rng = np.random.default_rng(convexity.seed + 1)
    extra = np.concatenate([coordinate_planes(L.n), focused_planes(g, convexity.focused, rng)])
    rep = convexity_check(K, convexity.planes, convexity.seed, convexity.points,
                          convexity.tol, extra)
    return PerturbationResult(K, epsilon, g, rep, rmin)


@dataclass(frozen=True)
class EpsilonTrial:
    epsilon: float
    rhs_min: float
    margin: float
    accepted: bool

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "rhs_min": self.rhs_min, "margin": self.margin,
                "accepted": self.accepted}


def select_epsilon(L: StarBody, f: Density, g: ZonalTransform, eps0: float = 1e-8,
                   floor: float = 1e-14, convexity: ConvexityConfig = ConvexityConfig()):
    """Halve eps from eps0 until the rhs stays positive and K passes the convexity
    check, then try 1.5 eps (one bisection level back toward the last failure).

    Returns (PerturbationResult, trials).
    """
    trials = []

    def attempt(eps):
        try:
            res = perturb_body(L, f, g, eps, convexity)
        except ValueError:
            trials.append(EpsilonTrial(eps, rhs_minimum(L, f, g, eps), -math.inf, False))
            return None
        ok = res.convexity.passed
        trials.append(EpsilonTrial(eps, res.rhs_min, res.convexity.min_margin, ok))
        return res if ok else None

    eps = eps0
    while eps >= floor:
        res = attempt(eps)
        if res is not None:
            if eps < eps0:
                better = attempt(1.5 * eps)
                if better is not None:
                    res = better
            return res, trials
        eps /= 2
    raise RuntimeError(f"no epsilon above {floor:g} passes the positivity and convexity gates")


# -- measured gaps --------------------------------------------------------------

@dataclass(frozen=True)
class GapRule:
    nt: int = 96
    nphi: int = 8
    count: int = 512
    replicates: int = 8
    seed: int = 0


def section_gap(K: PerturbedBody, xi: Direction, rule: GapRule = GapRule()) -> tuple[float, float]:
    """mu(L cap H_xi) - mu(K cap H_xi) with a common rule on S cap H_xi.

    The per-node difference of the two radial moments is taken as a shell
    integral between rho_K and rho_L, so no cancellation occurs.
    """
    n = K.n
    B = xi.h_basis
    ax = B.T @ (B @ K.g.axis)
    a = float(ax @ ax)
    if a < 1e-12:
        ax, t_range = None, (0.0, 1.0)
    else:
        t_range = (0.0, min(1.0, K.g.support / a))
    R = make_axial_rule(B, ax, rule.nt, rule.nphi, rule.count, rule.seed, rule.replicates,
                        t_range)

    def integrand(i, x):
        pts = x.reshape(-1, 2 * n)
        rho, d = K.radial_shift(pts)
        return -shell_moment(K.density, pts, rho, d, 2 * n - 3).reshape(x.shape[:2])

    return R.integrate(integrand)


def measure_gap(K: PerturbedBody, rule: GapRule = GapRule(nt=128, nphi=16, count=1024)):
    """mu(K) - mu(L) on a rule adapted to the support of g (K = L elsewhere).

    Returns (gap, error, integral of |integrand|).
    """
    n = K.n
    R = make_axial_rule(np.eye(2 * n), K.g.axis, rule.nt, rule.nphi, rule.count, rule.seed,
                        rule.replicates, (0.0, K.g.support))
    absolute = []

    def integrand(i, x):
        pts = x.reshape(-1, 2 * n)
        rho, d = K.radial_shift(pts)
        v = shell_moment(K.density, pts, rho, d, 2 * n - 1).reshape(x.shape[:2])
        absolute.append((i, np.abs(v)))
        return v

    gap, err = R.integrate(integrand)
    # same rule applied to |integrand|, fine t-weights only
    wo = R.omega.weights
    tot = sum(R.t_weights[0, i] * 2 * math.pi * np.sum(v.mean(axis=0) * wo)
              for i, v in absolute)
    return gap, err, float(tot)


# -- end-to-end runs ------------------------------------------------------------

VERDICTS = ("counterexample_confirmed", "affirmative_consistent", "inconclusive")


@dataclass(frozen=True)
class BpConfig:
    delta: float = 0.02             # Euclidean term making L strictly convex
    pd: PdConfig = PdConfig()
    max_width: float = 0.3
    min_width: float = 0.05
    eps0: float = 1e-8
    eps_floor: float = 1e-14
    convexity: ConvexityConfig = ConvexityConfig()
    directions: int = 16            # sampled section directions
    section_rule: GapRule = GapRule()
    measure_rule: GapRule = GapRule(nt=128, nphi=16, count=1024)
    identity_rtol: float = 0.02
    identity_floor: float = 0.1     # identity checked where h >= floor * max h
    seed: int = 0


@dataclass
class BpReport:
    section_gaps: np.ndarray        # mu(L cap H) - mu(K cap H) per sampled direction
    section_errors: np.ndarray
    measure_gap: float              # mu(K) - mu(L)
    measure_error: float
    error_budget: float
    verdict: str
    epsilon: float = 0.0
    budget_terms: dict = field(default_factory=dict)
    directions: np.ndarray = field(repr=False, default=None)
    bump_values: np.ndarray = field(repr=False, default=None)
    identity_worst: float = math.nan    # worst relative miss of the section-gap identity
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "epsilon": self.epsilon,
            "measure_gap": self.measure_gap,
            "measure_error": self.measure_error,
            "error_budget": self.error_budget,
            "budget_terms": self.budget_terms,
            "min_section_gap": float(np.min(self.section_gaps)) if len(self.section_gaps) else None,
            "section_gaps": [float(x) for x in self.section_gaps],
            "section_errors": [float(x) for x in self.section_errors],
            "bump_values": [float(x) for x in self.bump_values] if self.bump_values is not None else [],
            "directions": self.directions.tolist() if self.directions is not None else [],
            "identity_worst": self.identity_worst,
            "diagnostics": self.diagnostics,
        }


def sample_directions(h: BumpFunction, count: int, seed: int) -> np.ndarray:
    """Half uniform on the sphere, half inside the bump's support (plus its axis)."""
    rng = np.random.default_rng(seed)
    N = 2 * h.n
    u = h.axis
    ju = quarter_turn(u).reshape(-1)
    k = count // 2
    out = [rng.standard_normal((count - k, N))]
    w = rng.standard_normal((k, N))
    w -= np.outer(w @ u, u) + np.outer(w @ ju, ju)
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    # sin(d)^2 uniform on [0, 0.9 s0): well inside the support
    a = rng.uniform(0, 0.9 * h.s0, k)
    a[0] = 0.0
    phi = rng.uniform(0, 2 * math.pi, k)[:, None]
    out.append(np.sqrt(1 - a)[:, None] * (np.cos(phi) * u + np.sin(phi) * ju)
               + np.sqrt(a)[:, None] * w)
    pts = np.concatenate(out)
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def _rss(values) -> float:
    return float(math.sqrt(sum(v * v for v in values)))


def run_counterexample(n: int = 4, q: float = 4.0, density: Density | None = None,
                       cfg: BpConfig = BpConfig()) -> BpReport:
    """Chain pd_test, region, bump, transform, epsilon selection and measurements.

    L is the complex l_q ball with a small Euclidean term (cfg.delta) so that
    its boundary curvature is strictly positive, as the perturbation argument
    requires.  Any stage failure yields an inconclusive report naming the stage.
    """
    if n < 4:
        raise ValueError("the counterexample regime needs n >= 4")
    if q <= 2:
        raise ValueError("the counterexample regime needs q > 2")
    f = density if density is not None else Density.constant(n)
    if f.n != n:
        raise ValueError("density dimension does not match n")
    L = StarBody.lq(n, q, cfg.delta)
    diag: dict = {"n": n, "q": q, "delta": cfg.delta, "density": f.name or f.kind}

    def fail(stage, exc):
        diag["failed_stage"] = stage
        diag["failure"] = str(exc)
        return BpReport(np.zeros(0), np.zeros(0), math.nan, math.nan, math.nan, "inconclusive",
                        diagnostics=diag)

    try:
        rep = pd_test(L, cfg.pd)
        diag["pd_test"] = rep.to_dict()
        region = find_negative_region(L, cfg.pd, rep)
        diag["region_points"] = len(region)
    except (ValueError, RuntimeError) as exc:
        return fail("negative_region", exc)
    try:
        h = build_bump(region, cfg.max_width, cfg.min_width)
        diag["bump"] = {"center": h.center.tolist(), "width": h.width, "amplitude": h.amplitude}
        g = bump_transform(h)
        lo, hi = g.extremes()
        diag["transform"] = {"min": lo, "max": hi, "support_t": g.support}
    except (ValueError, RuntimeError) as exc:
        return fail("bump", exc)
    try:
        res, trials = select_epsilon(L, f, g, cfg.eps0, cfg.eps_floor, cfg.convexity)
        diag["epsilon_trials"] = [t.to_dict() for t in trials]
        diag["convexity"] = res.convexity.to_dict()
        diag["rhs_min"] = res.rhs_min
    except (ValueError, RuntimeError) as exc:
        return fail("select_epsilon", exc)
    K, eps = res.K, res.epsilon

    dirs = sample_directions(h, cfg.directions, cfg.seed)
    gaps, gerrs = [], []
    for k, xi in enumerate(dirs):
        rule = GapRule(cfg.section_rule.nt, cfg.section_rule.nphi, cfg.section_rule.count,
                       cfg.section_rule.replicates, cfg.section_rule.seed + k)
        v, e = section_gap(K, Direction.from_vector(xi), rule)
        gaps.append(v)
        gerrs.append(e)
    gaps, gerrs = np.array(gaps), np.array(gerrs)
    mgap, merr, mabs = measure_gap(K, cfg.measure_rule)

    hv = h(dirs)
    expected = (2 * math.pi) ** (2 * n - 1) * eps * hv
    big = hv >= cfg.identity_floor * h.amplitude
    worst = float(np.max(np.abs(gaps[big] - expected[big]) / expected[big])) if big.any() else math.nan

    terms = {
        "section_quadrature": float(gerrs.max()),
        "measure_quadrature": merr,
        "radial_root": K.rtol * (mabs + float(np.max(np.abs(gaps)))),
        "transform_roundoff": 64 * np.finfo(float).eps * eps * max(abs(lo), hi)
                              * sphere_area(2 * n),
    }
    budget = _rss(terms.values())
    diag["identity_directions"] = int(big.sum())
    ok = (bool(np.all(gaps >= -budget)) and mgap >= 3 * budget
          and (not big.any() or worst <= cfg.identity_rtol))
    verdict = "counterexample_confirmed" if ok else "inconclusive"
    return BpReport(gaps, gerrs, float(mgap), float(merr), budget, verdict, eps, terms,
                    dirs, hv, worst, diag)


@dataclass(frozen=True)
class AffirmativeConfig:
    pd: PdConfig = PdConfig()
    lattice: int = 6                # moduli lattice resolution for section directions
    section_count: int = 4096
    moduli_count: int = 24
    safety: float = 0.01            # shrink factor applied after the scaling search
    seed: int = 0


@dataclass
class AffirmativeReport:
    n: int
    pd_reports: list
    pairs: list
    verdict: str
    engine_bug: bool

    def to_dict(self) -> dict:
        return {"n": self.n, "verdict": self.verdict, "engine_bug": self.engine_bug,
                "pd_reports": self.pd_reports, "pairs": self.pairs}


def _body_label(body: StarBody) -> str:
    if body.kind == "euclidean_ball":
        return "ball"
    if body.kind == "complex_lq":
        return f"lq({body.q:g})" + (f"+{body.delta:g}" if body.delta else "")
    return body.kind


def _section_scale(K: StarBody, L: StarBody, f: Density, dirs, cfg: AffirmativeConfig) -> float:
    """Largest c with mu(cK cap H_xi) <= mu(L cap H_xi) for every sampled xi."""
    n = K.n
    best = math.inf
    for k, xi in enumerate(dirs):
        d = Direction.from_vector(xi)
        rule = make_subsphere_rule(d, cfg.section_count, cfg.seed + k)
        target = section_measure_direct(L, f, d, rule).value
        sk = section_measure_direct(K, f, d, rule).value
        if f.kind == "constant_one":
            c = (target / sk) ** (1.0 / (2 * n - 2))
        else:
            # mu(cK cap H) increases with c; bracket and bisect
            lo, hi = 0.0, 1.0
            while section_measure_direct(K.scaled(hi), f, d, rule).value < target:
                lo, hi = hi, 2 * hi
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if section_measure_direct(K.scaled(mid), f, d, rule).value <= target:
                    lo = mid
                else:
                    hi = mid
            c = lo
        best = min(best, c)
    return best


def run_affirmative_scan(n: int, bodies, densities, pairs: int = 4,
                         cfg: AffirmativeConfig = AffirmativeConfig()) -> AffirmativeReport:
    """Both halves of the affirmative regime check for n <= 3.

    (a) pd_test must classify every body as nonnegative; (b) for random
    pairs, K is scaled so that its sampled sections are dominated by those of
    L, and mu(cK) <= mu(L) must follow.  A violation of either is an engine
    bug, since it would contradict the affirmative answer in these dimensions.
    """
    if n not in (2, 3):
        raise ValueError("the affirmative regime is n in {2, 3}")
    bodies, densities = list(bodies), list(densities)
    if any(b.n != n for b in bodies) or any(f.n != n for f in densities):
        raise ValueError("bodies and densities must have dimension n")
    pd_reports, bug, inconclusive = [], False, False
    for b in bodies:
        rep = pd_test(b, cfg.pd)
        d = rep.to_dict()
        d["body"] = _body_label(b)
        pd_reports.append(d)
        if rep.classification == "negative":
            bug = True
        elif rep.classification != "nonnegative":
            inconclusive = True
    rng = np.random.default_rng(cfg.seed)
    dirs = from_moduli(moduli_lattice(n, cfg.lattice))
    mrule = make_moduli_rule(n, cfg.moduli_count)
    out = []
    combos = [(i, j, k) for i in range(len(bodies)) for j in range(len(bodies))
              for k in range(len(densities)) if i != j or len(bodies) == 1]
    picks = rng.permutation(len(combos))[:pairs]
    for p in picks:
        i, j, k = combos[p]
        f = densities[k]
        K, L = bodies[i], bodies[j]
        c = _section_scale(K, L, f, dirs, cfg) * (1 - cfg.safety if K != L else 1.0)
        mk = body_measure(K.scaled(c), f, mrule).value
        ml = body_measure(L, f, mrule).value
        holds = mk <= ml * (1 + 1e-9)
        bug |= not holds
        out.append({"K": _body_label(K), "L": _body_label(L), "density": f.name or f.kind,
                    "scale": c, "mu_cK": mk, "mu_L": ml, "holds": bool(holds)})
    verdict = "inconclusive" if (bug or inconclusive) else "affirmative_consistent"
    return AffirmativeReport(n, pd_reports, out, verdict, bug)
