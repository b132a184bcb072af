"""Low-discrepancy point sets on the cube, the sphere and an ellipsoid boundary.

Cube points come from a base-2 digital construction. They are carried to
the unit sphere by cylindrical coordinates (an angle plus a stack of
heights) and then to an ellipsoid boundary by the affine map
``x -> sqrt(radius_sq) B^{-1/2} x + center``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.spatial.distance import pdist
from scipy.special import betainc, betaincinv
from scipy.stats import qmc
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_count, check_positive, check_random_state
from .interaction import EllipsoidConstraint

__all__ = [
    "SOBOL_MAX_DIM",
    "BOX_CHECK_LIMIT",
    "SAMPLERS",
    "PointSet",
    "digital_net",
    "is_net",
    "net_quality",
    "cylindrical_map",
    "cylindrical_inverse",
    "map_to_sphere",
    "map_to_ellipsoid",
    "ellipsoid_image",
    "ellipsoid_preimage",
    "uniform_sphere",
    "generate_boundary_points",
    "riesz_energy",
    "cap_measure",
    "cap_discrepancy",
    "CylindricalSphereMap",
    "EllipsoidMap",
]

SOBOL_MAX_DIM = 21201
BOX_CHECK_LIMIT = 100_000  # compositions enumerated when measuring t
SAMPLERS = ("net", "cube", "sphere")


@dataclass(frozen=True, eq=False)
class PointSet:
    """Points with the space they live in and how they were made.

    ``space`` is ``"cube"``, ``"sphere"`` or ``"ellipsoid"``.
    ``provenance`` holds the generator settings, e.g. ``construction``,
    ``m``, ``base`` and the per-dimension quality parameters ``t``.
    """

    points: np.ndarray = field(repr=False)
    space: str
    provenance: dict = field(default_factory=dict)
    seed: int | None = None

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def with_points(self, points: np.ndarray, space: str, **extra) -> "PointSet":
        return PointSet(points, space, {**self.provenance, **extra}, self.seed)


def _inverse_gray(n: np.ndarray) -> np.ndarray:
    out = n.copy()
    shift = n >> 1
    while np.any(shift):
        out ^= shift
        shift >>= 1
    return out


def _sobol(m: int, s: int, scramble: bool, seed) -> np.ndarray:
    if s > SOBOL_MAX_DIM:
        raise ValueError(f"dimension {s} exceeds the direction-number table ({SOBOL_MAX_DIM})")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        gen = qmc.Sobol(s, scramble=scramble, seed=seed if scramble else None)
        pts = gen.random_base2(m)
    # the generator walks the sequence in Gray-code order; put it back in
    # natural order so every power-of-two prefix is itself a net
    return pts[_inverse_gray(np.arange(2 ** m))]


def digital_net(m: int, s: int, base: int = 2, *, construction: str = "sobol",
                scramble: bool = False, seed=None, measure_t: bool = True) -> PointSet:
    """``2**m`` points of a base-2 digital net in ``[0, 1)^s``.

    Parameters
    ----------
    m : int
        Exponent; the net has ``2**m`` points.
    s : int
        Dimension.
    base : int
        Only 2 is supported.
    construction : {"sobol", "hammersley"}
        ``"sobol"`` takes the first ``2**m`` points of the Sobol sequence
        in natural order, so nets with smaller ``m`` are prefixes.
        ``"hammersley"`` prepends the coordinate ``i / 2**m`` to an
        ``(s - 1)``-dimensional Sobol net; this reaches ``t = 0`` for
        ``s <= 3`` but is not extensible in ``m``.
    scramble : bool
        Apply a seeded linear matrix scramble with digital shift (Sobol only).
    measure_t : bool
        Record the quality parameter of every leading-coordinate
        projection, found by exhaustive box counting. Entries are ``None``
        when the count would be too large.
    """
    if base != 2:
        raise ValueError("only base 2 is supported")
    m = check_count(m, "m", minimum=0)
    s = check_count(s, "s")
    if construction == "sobol":
        pts = _sobol(m, s, scramble, seed)
    elif construction == "hammersley":
        if scramble:
            raise ValueError("scrambling is only available for the sobol construction")
        first = (np.arange(2 ** m) / 2 ** m)[:, None]
        pts = first if s == 1 else np.hstack([first, _sobol(m, s - 1, False, None)])
    else:
        raise ValueError(f"unknown construction {construction!r}")
    t = [net_quality(pts[:, :d], m) for d in range(1, s + 1)] if measure_t else None
    prov = {"construction": construction, "m": m, "base": 2, "scramble": scramble, "t": t}
    return PointSet(pts, "cube", prov, seed)


def _compositions(total: int, parts: int):
    """All tuples of ``parts`` nonnegative integers summing to ``total``."""
    for bars in combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(total + parts - 1 - prev - 1)
        yield tuple(out)


def _box_counts_ok(digits: np.ndarray, m: int, t: int) -> bool:
    n, s = digits.shape
    per_box = 2 ** t
    for ks in _compositions(m - t, s):
        cell = np.zeros(n, dtype=np.int64)
        for j, k in enumerate(ks):
            if k:
                cell = (cell << k) | (digits[:, j] >> (m - k))
        counts = np.bincount(cell, minlength=2 ** (m - t))
        if counts.shape[0] != 2 ** (m - t) or np.any(counts != per_box):
            return False
    return True


def _digits(points: np.ndarray, m: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError("points must be a 2-D array")
    if np.any(pts < 0) or np.any(pts >= 1):
        raise ValueError("points must lie in [0, 1)")
    return np.floor(pts * 2.0 ** m).astype(np.int64)


def is_net(points, m: int, t: int) -> bool:
    """Whether ``points`` form a ``(t, m, s)``-net in base 2.

    Checks every dyadic box of volume ``2**(t - m)`` for exactly ``2**t``
    points, straight from the definition.
    """
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] != 2 ** m or not 0 <= t <= m:
        return False
    return _box_counts_ok(_digits(pts, m), m, t)


def net_quality(points, m: int) -> int | None:
    """Smallest ``t`` for which ``points`` form a ``(t, m, s)``-net, or ``None``.

    ``None`` means the exhaustive check would enumerate more than
    ``BOX_CHECK_LIMIT`` box shapes.
    """
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] != 2 ** m:
        raise ValueError(f"expected {2 ** m} points, got {pts.shape[0]}")
    s = pts.shape[1]
    if math.comb(m + s - 1, s - 1) > BOX_CHECK_LIMIT:
        return None
    digits = _digits(pts, m)
    for t in range(m + 1):
        if _box_counts_ok(digits, m, t):
            return t
    return m


def _heights(y: np.ndarray, d: int, heights: str) -> np.ndarray:
    """Height coordinate on the ``d``-sphere for uniforms ``y``."""
    if heights == "linear" or d == 2:
        return 1.0 - 2.0 * y
    # the height of a uniform point on S^d is 2u - 1 with u ~ Beta(d/2, d/2)
    return 1.0 - 2.0 * betaincinv(d / 2.0, d / 2.0, y)


def _heights_inverse(t: np.ndarray, d: int, heights: str) -> np.ndarray:
    u = (1.0 - t) / 2.0
    if heights == "linear" or d == 2:
        return u
    return betainc(d / 2.0, d / 2.0, u)


def cylindrical_map(y, heights: str = "area") -> np.ndarray:
    """Map rows of ``y`` in ``[0, 1)^s`` to unit vectors in ``R^(s+1)``.

    The first coordinate gives the angle ``2 pi y_1`` on the circle; each
    further coordinate ``y_d`` gives a height ``t_d`` that lifts the point
    from the ``(d-1)``-sphere to the ``d``-sphere as
    ``(sqrt(1 - t_d^2) x, t_d)``.

    ``heights="linear"`` uses ``t_d = 1 - 2 y_d``, which is uniform only up
    to the 2-sphere. ``heights="area"`` (default) inverts the height
    distribution of the uniform measure on each ``S^d`` and agrees with the
    linear rule for ``d = 2``.
    """
    if heights not in ("area", "linear"):
        raise ValueError(f"unknown heights rule {heights!r}")
    y = np.atleast_2d(np.asarray(y, dtype=float))
    n, s = y.shape
    out = np.empty((n, s + 1))
    phi = 2.0 * np.pi * y[:, 0]
    out[:, 0] = np.cos(phi)
    out[:, 1] = np.sin(phi)
    if s == 1:
        return out
    t = np.empty((n, s - 1))
    for d in range(2, s + 1):
        t[:, d - 2] = _heights(y[:, d - 1], d, heights)
    radial = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    # scale[:, d] = product of radial factors for heights above level d
    scale = np.ones((n, s))
    scale[:, :-1] = np.cumprod(radial[:, ::-1], axis=1)[:, ::-1]
    out[:, :2] *= scale[:, :1]
    out[:, 2:] = t * scale[:, 1:]
    return out


def cylindrical_inverse(x, heights: str = "area") -> np.ndarray:
    """Inverse of :func:`cylindrical_map` for unit vectors off the poles."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, dim = x.shape
    s = dim - 1
    y = np.empty((n, s))
    rest = x.copy()
    for d in range(s, 1, -1):
        t = np.clip(rest[:, d], -1.0, 1.0)
        y[:, d - 1] = _heights_inverse(t, d, heights)
        r = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
        with np.errstate(invalid="ignore", divide="ignore"):
            rest = np.where(r[:, None] > 0, rest[:, :d] / r[:, None], 0.0)
    y[:, 0] = np.mod(np.arctan2(rest[:, 1], rest[:, 0]), 2 * np.pi) / (2 * np.pi)
    return np.minimum(y, np.nextafter(1.0, 0.0))


def map_to_sphere(cube: PointSet, heights: str = "area") -> PointSet:
    """Carry a cube point set in ``[0, 1)^s`` to the unit sphere in ``R^(s+1)``."""
    if cube.space != "cube":
        raise ValueError(f"expected cube points, got {cube.space!r}")
    return cube.with_points(cylindrical_map(cube.points, heights), "sphere", heights=heights)


def map_to_ellipsoid(sphere: PointSet, E: EllipsoidConstraint) -> PointSet:
    """Affine image ``sqrt(radius_sq) B^{-1/2} x + center`` of sphere points."""
    if sphere.space != "sphere":
        raise ValueError(f"expected sphere points, got {sphere.space!r}")
    return sphere.with_points(ellipsoid_image(sphere.points, E), "ellipsoid")


def ellipsoid_image(x: np.ndarray, E: EllipsoidConstraint) -> np.ndarray:
    if x.shape[1] != E.dim:
        raise ValueError(f"sphere points have dimension {x.shape[1]}, ellipsoid has {E.dim}")
    root = np.sqrt(E.radius_sq)
    S = E.inv_sqrt()
    return root * (x * S if S.ndim == 1 else x @ S) + E.center


def ellipsoid_preimage(x: np.ndarray, E: EllipsoidConstraint) -> np.ndarray:
    """``B^{1/2} (x - center) / sqrt(radius_sq)``, which is a unit vector on the boundary."""
    R = E.sqrt()
    z = np.asarray(x, dtype=float) - E.center
    return (z * R if R.ndim == 1 else z @ R) / np.sqrt(E.radius_sq)


def uniform_sphere(n: int, dim: int, random_state=None) -> np.ndarray:
    """``n`` independent uniform points on the unit sphere in ``R^dim``."""
    rng = check_random_state(random_state)
    g = rng.standard_normal((n, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def generate_boundary_points(E: EllipsoidConstraint, N: int, *, sampler: str = "net",
                             seed=None, heights: str = "area",
                             construction: str = "sobol") -> PointSet:
    """``N`` points on the boundary of ``E``.

    ``sampler`` selects the source of the underlying sphere points:
    ``"net"`` maps a digital net through the cylindrical map (``N`` must
    be a power of two); ``"cube"`` maps uniform random cube points the
    same way; ``"sphere"`` draws uniform random sphere points directly.
    """
    N = check_count(N, "N")
    s = E.dim
    if s < 2:
        raise ValueError("the ellipsoid must have dimension at least 2")
    if sampler == "net":
        m = int(round(math.log2(N)))
        if 2 ** m != N:
            raise ValueError(f"N={N} is not a power of two")
        cube = digital_net(m, s - 1, construction=construction, measure_t=False)
        sphere = map_to_sphere(cube, heights)
    elif sampler == "cube":
        rng = check_random_state(seed)
        cube = PointSet(rng.random((N, s - 1)), "cube", {"sampler": "cube"}, seed)
        sphere = map_to_sphere(cube, heights)
    elif sampler == "sphere":
        sphere = PointSet(uniform_sphere(N, s, seed), "sphere", {"sampler": "sphere"}, seed)
    else:
        raise ValueError(f"unknown sampler {sampler!r}; choose from {SAMPLERS}")
    out = map_to_ellipsoid(sphere, E)
    out.provenance["sampler"] = sampler
    return out


def riesz_energy(points, exponent: float) -> float:
    """Riesz energy summed over ordered pairs ``i != j``.

    Raises
    ------
    ValueError
        For fewer than two points or coincident points.
    """
    exponent = check_positive(exponent, "exponent")
    pts = points.points if isinstance(points, PointSet) else np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two points")
    dist = pdist(pts)
    if np.any(dist == 0):
        raise ValueError("coincident points have infinite energy")
    return float(2.0 * np.sum(dist ** -exponent))


def cap_measure(height, dim: int):
    """Normalized surface measure of ``{x in S^(dim-1) : x.v >= height}``."""
    h = np.clip(np.asarray(height, dtype=float), -1.0, 1.0)
    a = (dim - 1) / 2.0
    return 1.0 - betainc(a, a, (h + 1.0) / 2.0)


def cap_discrepancy(sphere_points, n_caps: int = 200, random_state=None) -> np.ndarray:
    """``|empirical - exact|`` cap measure for random spherical caps.

    Cap axes are uniform on the sphere and cap heights uniform in
    ``[-1, 1]``. Returns one value per cap.
    """
    pts = sphere_points.points if isinstance(sphere_points, PointSet) else np.asarray(sphere_points)
    rng = check_random_state(random_state)
    dim = pts.shape[1]
    axes = uniform_sphere(n_caps, dim, rng)
    h = rng.uniform(-1.0, 1.0, size=n_caps)
    empirical = (pts @ axes.T >= h).mean(axis=0)
    return np.abs(empirical - cap_measure(h, dim))


class CylindricalSphereMap(TransformerMixin, BaseEstimator):
    """Transformer from ``[0, 1)^s`` to the unit sphere in ``R^(s+1)``."""

    def __init__(self, heights: str = "area"):
        self.heights = heights

    def fit(self, X, y=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return cylindrical_map(X, self.heights)

    def inverse_transform(self, X):
        return cylindrical_inverse(X, self.heights)


class EllipsoidMap(TransformerMixin, BaseEstimator):
    """Transformer from the unit sphere to the boundary of an ellipsoid.

    ``fit`` takes the :class:`EllipsoidConstraint` (``X``), or uses the
    one passed at construction.
    """

    def __init__(self, ellipsoid: EllipsoidConstraint | None = None):
        self.ellipsoid = ellipsoid

    def fit(self, X=None, y=None):
        E = X if isinstance(X, EllipsoidConstraint) else self.ellipsoid
        if E is None:
            raise ValueError("an EllipsoidConstraint is required")
        self.ellipsoid_ = E
        self.inv_sqrt_ = E.inv_sqrt()
        return self

    def transform(self, X):
        return ellipsoid_image(np.atleast_2d(np.asarray(X, dtype=float)), self.ellipsoid_)

    def inverse_transform(self, X):
        return ellipsoid_preimage(np.atleast_2d(np.asarray(X, dtype=float)), self.ellipsoid_)
