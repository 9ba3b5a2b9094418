"""Invariant star bodies, densities and directions in C^n = R^{2n}.

Points of R^{2n} are stored as arrays whose last axis has length 2n, laid out
as (x_11, x_12, x_21, x_22, ...), so complex coordinate j occupies the pair
(2j, 2j+1).  Functions invariant under the simultaneous rotation R_theta of
every pair are handled through the vector of complex moduli
r_j = |z_j| = sqrt(x_j1^2 + x_j2^2).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import ndimage, special

UNIT_TOL = 1e-12


@dataclass(frozen=True)
class ComplexDimension:
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"complex dimension must be an integer >= 2, got {self.n}")

    @property
    def N(self) -> int:
        return 2 * self.n


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] % 2:
        raise ValueError("last axis must have even length 2n")
    return x


def moduli(x) -> np.ndarray:
    """Per-coordinate complex moduli of points in R^{2n}."""
    x = _as_points(x)
    return np.hypot(x[..., 0::2], x[..., 1::2])


def rotate(x, theta) -> np.ndarray:
    """Apply R_theta to every coordinate pair (multiplication by e^{i theta})."""
    x = _as_points(x)
    c, s = np.cos(theta), np.sin(theta)
    c = np.asarray(c)[..., None]
    s = np.asarray(s)[..., None]
    out = np.empty(np.broadcast_shapes(x.shape, c.shape))
    out[..., 0::2] = c * x[..., 0::2] - s * x[..., 1::2]
    out[..., 1::2] = s * x[..., 0::2] + c * x[..., 1::2]
    return out


def quarter_turn(x) -> np.ndarray:
    """xi -> xi_perp: pairs (a, b) -> (-b, a)."""
    x = _as_points(x)
    out = np.empty_like(x)
    out[..., 0::2] = -x[..., 1::2]
    out[..., 1::2] = x[..., 0::2]
    return out


def from_moduli(r, phases=None) -> np.ndarray:
    """Embed moduli (and optional phases) as a point of R^{2n}."""
    r = np.asarray(r, dtype=float)
    if phases is None:
        phases = np.zeros_like(r)
    out = np.empty(r.shape[:-1] + (2 * r.shape[-1],))
    out[..., 0::2] = r * np.cos(phases)
    out[..., 1::2] = r * np.sin(phases)
    return out


def check_moduli_point(r) -> np.ndarray:
    """Validate a point of the moduli sphere {r >= 0, |r|_2 = 1}."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("moduli must be non-negative")
    if np.any(np.abs(np.linalg.norm(r, axis=-1) - 1.0) > UNIT_TOL):
        raise ValueError("moduli point must have unit Euclidean norm")
    return r


# -- hyperspherical angles on the positive orthant of S^{n-1} -----------------

def moduli_to_angles(r) -> np.ndarray:
    """Angles a_1..a_{n-1} in [0, pi/2] with r_1 = cos a_1, r_2 = sin a_1 cos a_2, ..."""
    r = np.asarray(r, dtype=float)
    n = r.shape[-1]
    tail = np.sqrt(np.cumsum(r[..., ::-1] ** 2, axis=-1)[..., ::-1])
    return np.stack([np.arctan2(tail[..., i + 1], r[..., i]) for i in range(n - 1)], axis=-1)


def angles_to_moduli(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    m = a.shape[-1]
    out = np.empty(a.shape[:-1] + (m + 1,))
    prod = np.ones(a.shape[:-1])
    for i in range(m):
        out[..., i] = prod * np.cos(a[..., i])
        prod = prod * np.sin(a[..., i])
    out[..., m] = prod
    return out


@dataclass(frozen=True)
class Direction:
    """A unit vector xi with its quarter-turn xi_perp and a basis of H_xi."""

    xi: np.ndarray
    xi_perp: np.ndarray
    h_basis: np.ndarray  # (2n-2, 2n), orthonormal rows spanning H_xi

    @classmethod
    def from_vector(cls, v) -> "Direction":
        v = _as_points(v).astype(float)
        if v.ndim != 1:
            raise ValueError("a direction is a single vector")
        norm = np.linalg.norm(v)
        if norm == 0:
            raise ValueError("zero vector has no direction")
        xi = v / norm
        xp = quarter_turn(xi)
        return cls(xi, xp, complete_basis(np.stack([xi, xp])))

    @classmethod
    def from_moduli(cls, r, phases=None) -> "Direction":
        return cls.from_vector(from_moduli(r, phases))

    @property
    def n(self) -> int:
        return self.xi.size // 2

    def rotated(self, theta: float) -> "Direction":
        return Direction.from_vector(rotate(self.xi, theta))


def complete_basis(frame, threshold: float = 1e-6) -> np.ndarray:
    """Orthonormal basis of the complement of the rows of `frame`.

    Deterministic Gram-Schmidt over the standard basis; candidates whose
    residual norm falls below `threshold` are skipped.
    """
    frame = np.atleast_2d(np.asarray(frame, dtype=float))
    dim = frame.shape[1]
    basis = [f / np.linalg.norm(f) for f in frame]
    out = []
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = 1.0
        for _ in range(2):  # re-orthogonalise once for stability
            for b in basis:
                e = e - (e @ b) * b
        nrm = np.linalg.norm(e)
        if nrm < threshold:
            continue
        e = e / nrm
        basis.append(e)
        out.append(e)
        if len(basis) == dim:
            break
    if len(basis) != dim:
        raise ValueError("could not complete the basis")
    return np.array(out)


# -- moduli-sphere tabulation -------------------------------------------------

class ModuliTable:
    """Cubic B-spline interpolant of a function on the moduli sphere.

    The grid is uniform in the hyperspherical angles, endpoints included.
    Invariant smooth functions are even in each angle about 0 and pi/2, which
    is exactly the `mirror` boundary rule of the spline, so boundary rows
    need no special handling.
    """

    def __init__(self, n: int, values):
        values = np.asarray(values, dtype=float)
        if values.ndim != n - 1:
            raise ValueError(f"expected an (n-1)={n - 1}-dimensional grid")
        if min(values.shape) < 2:
            raise ValueError("need at least two nodes per axis")
        self.n = n
        self.values = values
        self._coeffs = ndimage.spline_filter(values, order=3, mode="mirror")

    @property
    def shape(self):
        return self.values.shape

    @staticmethod
    def grid_angles(shape) -> np.ndarray:
        axes = [np.linspace(0.0, np.pi / 2, m) for m in shape]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def grid_moduli(self) -> np.ndarray:
        return angles_to_moduli(self.grid_angles(self.shape))

    @classmethod
    def from_function(cls, fn, n: int, shape) -> "ModuliTable":
        if np.isscalar(shape):
            shape = (int(shape),) * (n - 1)
        r = angles_to_moduli(cls.grid_angles(shape))
        return cls(n, fn(r))

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        a = moduli_to_angles(r)
        scale = (np.array(self.shape) - 1) / (np.pi / 2)
        coords = (a * scale).reshape(-1, self.n - 1).T
        out = ndimage.map_coordinates(self._coeffs, coords, order=3,
                                      mode="mirror", prefilter=False)
        return out.reshape(r.shape[:-1])


# -- bodies -------------------------------------------------------------------

BODY_KINDS = ("euclidean_ball", "complex_lq", "tabulated")


@dataclass(frozen=True)
class StarBody:
    """Origin-symmetric R_theta-invariant star body, described on moduli.

    kind = "complex_lq" is the unit ball of (sum |z_j|^q + delta |x|^q)^(1/q);
    delta > 0 adds a Euclidean term that makes the boundary curvature strictly
    positive.  kind = "tabulated" stores a ModuliTable of radial values, or
    of radial corrections on top of `base` when a base body is given.
    """

    dim: ComplexDimension
    kind: str
    q: float = 2.0
    delta: float = 0.0
    scale: float = 1.0
    table: Optional[ModuliTable] = field(default=None, compare=False)
    base: Optional["StarBody"] = field(default=None, compare=False)
    smooth: bool = True

    def __post_init__(self):
        if self.kind not in BODY_KINDS:
            raise ValueError(f"unknown body kind {self.kind!r}")
        if self.kind == "complex_lq" and self.q < 1:
            raise ValueError("complex l_q balls need q >= 1")
        if self.kind == "tabulated" and self.table is None:
            raise ValueError("tabulated body needs a table")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @classmethod
    def ball(cls, n: int, radius: float = 1.0) -> "StarBody":
        return cls(ComplexDimension(n), "euclidean_ball", scale=radius)

    @classmethod
    def lq(cls, n: int, q: float, delta: float = 0.0, scale: float = 1.0) -> "StarBody":
        # complex l_1 has a non-smooth gauge where a coordinate vanishes
        return cls(ComplexDimension(n), "complex_lq", q=float(q), delta=delta,
                   scale=scale, smooth=q > 1)

    @classmethod
    def tabulated(cls, table: ModuliTable, base: "StarBody | None" = None,
                  smooth: bool = True) -> "StarBody":
        return cls(ComplexDimension(table.n), "tabulated", table=table, base=base,
                   smooth=smooth)

    @property
    def n(self) -> int:
        return self.dim.n

    def scaled(self, c: float) -> "StarBody":
        """The dilate c*K."""
        if self.kind == "tabulated":
            tab = ModuliTable(self.n, c * self.table.values)
            base = self.base.scaled(c) if self.base is not None else None
            return StarBody(self.dim, self.kind, table=tab, base=base, smooth=self.smooth)
        return StarBody(self.dim, self.kind, q=self.q, delta=self.delta,
                        scale=self.scale * c, smooth=self.smooth)

    def profile(self, r) -> np.ndarray:
        """Radial function as a function of unit moduli vectors."""
        r = np.asarray(r, dtype=float)
        if self.kind == "euclidean_ball":
            return np.full(r.shape[:-1], self.scale)
        if self.kind == "complex_lq":
            return self.scale / _lq_norm(r, self.q, self.delta)
        out = self.table(r)
        if self.base is not None:
            out = out + self.base.profile(r)
        return out

    def gauge(self, x) -> np.ndarray:
        x = _as_points(x)
        r = moduli(x)
        norm = np.linalg.norm(r, axis=-1)
        if self.kind == "euclidean_ball":
            return norm / self.scale
        if self.kind == "complex_lq":
            return _lq_norm(r, self.q, self.delta) / self.scale
        safe = np.where(norm > 0, norm, 1.0)
        return np.where(norm > 0, norm / self.profile(r / safe[..., None]), 0.0)

    def radial(self, theta) -> np.ndarray:
        theta = _as_points(theta)
        r = moduli(theta)
        return self.profile(r / np.linalg.norm(r, axis=-1, keepdims=True))

    def max_radius(self) -> float:
        """Upper bound for the radial function (exact for closed forms)."""
        if self.kind == "euclidean_ball":
            return self.scale
        if self.kind == "complex_lq":
            n = self.n
            # extreme values of sum r^q on the unit moduli sphere
            lo = min(1.0, n ** (1 - self.q / 2))
            return self.scale / (lo + self.delta) ** (1 / self.q)
        a = ModuliTable.grid_angles(tuple(max(2 * m, 9) for m in self.table.shape))
        return 1.05 * float(self.profile(angles_to_moduli(a)).max())


def _lq_norm(r, q, delta=0.0):
    s = np.sum(r ** q, axis=-1)
    if delta:
        s = s + delta * np.sum(r ** 2, axis=-1) ** (q / 2)
    return s ** (1.0 / q)


# -- densities ----------------------------------------------------------------

DENSITY_KINDS = ("constant_one", "gaussian", "custom")


@dataclass(frozen=True)
class Density:
    """Even positive continuous weight on R^{2n}.

    `moduli_fn` (on unnormalised moduli vectors) is set for densities that
    depend on |z_1|..|z_n| only; `point_fn` evaluates general densities.
    """

    dim: ComplexDimension
    kind: str
    sigma: float = 1.0
    moduli_fn: Optional[Callable] = field(default=None, compare=False)
    point_fn: Optional[Callable] = field(default=None, compare=False)
    name: str = ""

    def __post_init__(self):
        if self.kind not in DENSITY_KINDS:
            raise ValueError(f"unknown density kind {self.kind!r}")
        if self.kind == "custom" and self.moduli_fn is None and self.point_fn is None:
            raise ValueError("custom density needs an evaluation function")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @classmethod
    def constant(cls, n: int) -> "Density":
        return cls(ComplexDimension(n), "constant_one", name="one")

    @classmethod
    def gaussian(cls, n: int, sigma: float = 1.0) -> "Density":
        """exp(-|x|^2 / sigma^2)."""
        return cls(ComplexDimension(n), "gaussian", sigma=sigma, name=f"gaussian({sigma:g})")

    @classmethod
    def from_moduli(cls, n: int, fn, name: str = "custom") -> "Density":
        return cls(ComplexDimension(n), "custom", moduli_fn=fn, name=name)

    @classmethod
    def from_points(cls, n: int, fn, name: str = "custom") -> "Density":
        return cls(ComplexDimension(n), "custom", point_fn=fn, name=name)

    @property
    def n(self) -> int:
        return self.dim.n

    @property
    def moduli_only(self) -> bool:
        return self.point_fn is None

    def eval_moduli(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind == "constant_one":
            return np.ones(r.shape[:-1])
        if self.kind == "gaussian":
            return np.exp(-np.sum(r * r, axis=-1) / self.sigma ** 2)
        if self.moduli_fn is None:
            raise TypeError("density is not a function of the moduli alone")
        return self.moduli_fn(r)

    def __call__(self, x) -> np.ndarray:
        x = _as_points(x)
        if self.point_fn is not None:
            return self.point_fn(x)
        return self.eval_moduli(moduli(x))


def circle_average(f, n: int, m: int = 64) -> Density:
    """Average of f over the orbit {R_theta x}, trapezoid rule with m angles.

    f acts on arrays of points (..., 2n).  The result is exactly invariant
    under rotations by multiples of 2 pi/m and R_theta-invariant up to the
    trapezoid error, which decays geometrically for smooth f.
    """
    if m < 8:
        raise ValueError("circle_average needs m >= 8")
    thetas = 2 * np.pi * np.arange(m) / m

    def averaged(x):
        x = _as_points(x)
        vals = f(rotate(x[..., None, :], thetas))
        if np.any(~(vals > 0)):
            raise ValueError("circle_average: density must be strictly positive")
        return vals.mean(axis=-1)

    return Density.from_points(n, averaged, name="circle_average")


# -- radial moments -------------------------------------------------------------

_GL_CACHE: dict = {}


def _gauss_legendre01(k: int):
    if k not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(k)
        _GL_CACHE[k] = ((x + 1) / 2, w / 2)
    return _GL_CACHE[k]


def ray_moment(f: Density, origin, dirs, lengths, power: int,
               rtol: float = 1e-8, max_nodes: int = 512) -> np.ndarray:
    """int_0^L t^power f(origin + t*dir) dt for many rays at once.

    Gauss-Legendre with doubling node counts until two successive orders
    agree to `rtol`.
    """
    dirs = np.asarray(dirs, dtype=float)
    lengths = np.asarray(lengths, dtype=float)
    origin = np.zeros(dirs.shape[-1]) if origin is None else np.asarray(origin, float)
    if f.kind == "constant_one" and not origin.any():
        return lengths ** (power + 1) / (power + 1)
    if f.kind == "gaussian" and not origin.any():
        a = (power + 1) / 2
        return 0.5 * f.sigma ** (power + 1) * special.gamma(a) * special.gammainc(
            a, (lengths / f.sigma) ** 2)

    def rule(k):
        x, w = _gauss_legendre01(k)
        t = lengths[..., None] * x
        pts = origin + t[..., None] * dirs[..., None, :]
        return lengths * np.sum(w * t ** power * f(pts), axis=-1)

    k = max(16, power // 2 + 2)
    prev = rule(k)
    while k < max_nodes:
        k *= 2
        cur = rule(k)
        scale = np.maximum(np.abs(cur), 1e-300)
        if np.all(np.abs(cur - prev) <= rtol * scale):
            return cur
        prev = cur
    return prev


def radial_moment(body: StarBody, f: Density, p: int, theta, rho=None) -> np.ndarray:
    """int_0^{rho(theta)} r^p f(r theta) dr, with rho defaulting to the body's radial function."""
    theta = _as_points(theta)
    if rho is None:
        rho = body.radial(theta)
    return ray_moment(f, None, theta, rho, p)


def shell_moment(f: Density, theta, r, dr, p: int, nodes: int = 16) -> np.ndarray:
    """int_r^{r + dr} s^p f(s theta) ds, accurate relative to |dr| (no cancellation).

    The thickness is passed separately so that shells far thinner than the
    floating-point spacing at r keep full relative precision.
    """
    theta = _as_points(theta)
    r = np.asarray(r, dtype=float)
    dr = np.asarray(dr, dtype=float)
    x, w = _gauss_legendre01(nodes)
    s = r[..., None] + dr[..., None] * x
    vals = s ** p * f(s[..., None] * theta[..., None, :])
    return dr * np.sum(w * vals, axis=-1)
