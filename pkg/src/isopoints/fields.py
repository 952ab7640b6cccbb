"""Implicit scalar fields over a bounded 3D domain.

A field assigns every point ``p`` in a box-shaped domain a scalar value
``f(p)`` whose zero level set is the surface of interest, with the sign
convention negative-inside / positive-outside.  Analytic signed-distance
fields (sphere, torus, box) live here; the sine-activated neural field
implements the same interface in :mod:`isopoints.siren`.

All batch operations accept ``(n, 3)`` float arrays and are vectorized.
Scalar convenience wrappers (`value`, `jacobian`) operate on a single
point and raise :class:`~isopoints.errors.SingularGradient` where the
gradient is undefined; the batch `jacobians` instead returns a zero row
at singular points so callers can mask them.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import numpy.typing as npt

from .errors import SingularGradient

_F = npt.NDArray[np.floating]

#: Norm below which a gradient is treated as singular.
GRAD_EPS = 1e-12


def _as_points(p: npt.ArrayLike) -> _F:
    pts = np.asarray(p, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected points of shape (n, 3), got {pts.shape}")
    return pts


@dataclass(frozen=True)
class FieldDomain:
    """Axis-aligned bounding box with its diagonal length ``D``."""

    bbox_min: tuple[float, float, float] = (-1.0, -1.0, -1.0)
    bbox_max: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self) -> None:
        lo, hi = np.asarray(self.bbox_min), np.asarray(self.bbox_max)
        if not np.all(lo < hi):
            raise ValueError("bbox_min must be componentwise below bbox_max")

    @property
    def diagonal(self) -> float:
        lo, hi = np.asarray(self.bbox_min), np.asarray(self.bbox_max)
        return float(np.linalg.norm(hi - lo))

    def sample(self, n: int, rng: np.random.Generator) -> _F:
        """Uniform points inside the box, shape (n, 3)."""
        lo, hi = np.asarray(self.bbox_min), np.asarray(self.bbox_max)
        return rng.uniform(lo, hi, size=(n, 3))

    def clip(self, pts: _F) -> _F:
        lo, hi = np.asarray(self.bbox_min), np.asarray(self.bbox_max)
        return np.clip(pts, lo, hi)

    def corners(self) -> _F:
        lo, hi = self.bbox_min, self.bbox_max
        return np.array(
            [[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])],
            dtype=np.float64,
        )


class ImplicitField:
    """Base class: scalar field with first derivatives on a box domain."""

    domain: FieldDomain

    # --- batch interface (subclasses implement these two) ---------------

    def values(self, pts: npt.ArrayLike) -> _F:
        """Field values at each row of ``pts``; shape (n,)."""
        raise NotImplementedError

    def jacobians(self, pts: npt.ArrayLike) -> _F:
        """Row Jacobians (gradients) at each point; shape (n, 3).

        Rows where the gradient is singular are returned as zeros.
        """
        raise NotImplementedError

    def values_and_jacobians(self, pts: npt.ArrayLike) -> tuple[_F, _F]:
        """Both at once; subclasses override when one pass is cheaper."""
        return self.values(pts), self.jacobians(pts)

    # --- scalar convenience ----------------------------------------------

    def value(self, p: npt.ArrayLike) -> float:
        return float(self.values(_as_points(p))[0])

    def jacobian(self, p: npt.ArrayLike) -> _F:
        """Gradient at a single point; raises SingularGradient when undefined."""
        j = self.jacobians(_as_points(p))[0]
        if np.linalg.norm(j) < GRAD_EPS:
            raise SingularGradient(f"gradient undefined at {np.asarray(p).tolist()}")
        return j


_DEFAULT_DOMAIN = FieldDomain()


@dataclass
class SphereField(ImplicitField):
    """Exact signed distance to a sphere."""

    radius: float = 1.0
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    domain: FieldDomain = dc_field(default=_DEFAULT_DOMAIN)

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def values(self, pts: npt.ArrayLike) -> _F:
        d = _as_points(pts) - np.asarray(self.center)
        return np.linalg.norm(d, axis=1) - self.radius

    def jacobians(self, pts: npt.ArrayLike) -> _F:
        d = _as_points(pts) - np.asarray(self.center)
        r = np.linalg.norm(d, axis=1, keepdims=True)
        out = np.zeros_like(d)
        ok = r[:, 0] > GRAD_EPS
        out[ok] = d[ok] / r[ok]
        return out


@dataclass
class TorusField(ImplicitField):
    """Exact signed distance to a torus around the z-axis.

    ``R_major`` is the radius of the center ring, ``r_minor`` the tube
    radius.  Singular points: the z-axis and the center ring itself.
    """

    R_major: float = 0.5
    r_minor: float = 0.2
    domain: FieldDomain = dc_field(default=_DEFAULT_DOMAIN)

    def __post_init__(self) -> None:
        if not (self.R_major > self.r_minor > 0):
            raise ValueError("torus requires R_major > r_minor > 0")

    def values(self, pts: npt.ArrayLike) -> _F:
        p = _as_points(pts)
        s = np.hypot(p[:, 0], p[:, 1])
        return np.hypot(s - self.R_major, p[:, 2]) - self.r_minor

    def jacobians(self, pts: npt.ArrayLike) -> _F:
        p = _as_points(pts)
        s = np.hypot(p[:, 0], p[:, 1])
        q = np.hypot(s - self.R_major, p[:, 2])
        out = np.zeros_like(p)
        ok = (s > GRAD_EPS) & (q > GRAD_EPS)
        radial = (s[ok] - self.R_major) / q[ok]
        out[ok, 0] = radial * p[ok, 0] / s[ok]
        out[ok, 1] = radial * p[ok, 1] / s[ok]
        out[ok, 2] = p[ok, 2] / q[ok]
        return out


@dataclass
class BoxField(ImplicitField):
    """Exact signed distance to an axis-aligned box at the origin."""

    half_extents: tuple[float, float, float] = (0.6, 0.6, 0.6)
    domain: FieldDomain = dc_field(default=_DEFAULT_DOMAIN)

    def __post_init__(self) -> None:
        if not all(h > 0 for h in self.half_extents):
            raise ValueError("half_extents must be positive")

    def values(self, pts: npt.ArrayLike) -> _F:
        q = np.abs(_as_points(pts)) - np.asarray(self.half_extents)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside

    def jacobians(self, pts: npt.ArrayLike) -> _F:
        p = _as_points(pts)
        q = np.abs(p) - np.asarray(self.half_extents)
        pos = np.maximum(q, 0.0)
        r = np.linalg.norm(pos, axis=1)
        out = np.zeros_like(p)

        ext = r > GRAD_EPS  # outside (or on an edge/corner shell)
        out[ext] = np.sign(p[ext]) * pos[ext] / r[ext, None]

        # Inside: gradient points along the axis of the nearest face.  Ties
        # between axes (interior diagonals) and p=0 on that axis are genuine
        # singularities and stay zero.
        inn = ~ext
        if np.any(inn):
            qi = q[inn]
            order = np.argsort(qi, axis=1)
            top, second = order[:, -1], order[:, -2]
            rows = np.arange(len(qi))
            distinct = qi[rows, top] - qi[rows, second] > GRAD_EPS
            idx = np.flatnonzero(inn)[distinct]
            axis = top[distinct]
            out[idx, axis] = np.sign(p[idx, axis])
        return out


def make_field(kind: str, **params) -> ImplicitField:
    """Construct a bundled analytic field by name ("sphere"|"torus"|"box")."""
    kinds = {"sphere": SphereField, "torus": TorusField, "box": BoxField}
    try:
        cls = kinds[kind]
    except KeyError:
        raise ValueError(f"unknown field kind {kind!r}; expected one of {sorted(kinds)}") from None
    return cls(**params)
