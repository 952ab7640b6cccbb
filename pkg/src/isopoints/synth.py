"""Synthetic ground truth: area-uniform surface samplers and noisy clouds.

Exact samplers replace mesh-based ground truth at desk scale: the
sphere uses normalized Gaussians, the torus rejection-samples the tube
angle against its area Jacobian, and the box draws faces weighted by
area.  ``noisy_cloud`` corrupts such samples into the fitting inputs:
Gaussian displacement along the true normal plus a fraction of far
outliers with random normals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .errors import EmptyInput, FormatError
from .fields import BoxField, ImplicitField, SphereField, TorusField

_F = npt.NDArray[np.floating]

# Synthetic shapes sit well inside the unit-cube domain so that noise
# and the pinned outlier offset (0.2 x diagonal) both fit inside it.
SYNTH_SHAPES: dict[str, dict[str, float]] = {
    "sphere": {"radius": 0.7},
    "torus": {"R_major": 0.5, "r_minor": 0.2},
    "box": {"half_extent": 0.5},
}

#: Outliers sit at least this fraction of the domain diagonal off-surface.
OUTLIER_MIN_OFFSET_FRAC = 0.2


def sphere_surface(
    n: int, rng: np.random.Generator, radius: float = 0.7
) -> tuple[_F, _F]:
    """Area-uniform samples of a centered sphere with outward normals."""
    if n < 1:
        raise EmptyInput("need at least one sample")
    raw = rng.normal(size=(n, 3))
    normals = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    return radius * normals, normals


def torus_surface(
    n: int, rng: np.random.Generator, R_major: float = 0.5, r_minor: float = 0.2
) -> tuple[_F, _F]:
    """Area-uniform samples of a z-axis torus with outward normals.

    The tube angle v has density proportional to R + r cos(v); it is
    rejection-sampled against that Jacobian so the sampling is exact.
    """
    if n < 1:
        raise EmptyInput("need at least one sample")
    vs = np.empty(0)
    while len(vs) < n:
        cand = rng.uniform(0.0, 2.0 * np.pi, size=2 * n)
        accept = rng.uniform(0.0, 1.0, size=2 * n) < (
            (R_major + r_minor * np.cos(cand)) / (R_major + r_minor)
        )
        vs = np.concatenate([vs, cand[accept]])
    v = vs[:n]
    u = rng.uniform(0.0, 2.0 * np.pi, size=n)
    cu, su, cv, sv = np.cos(u), np.sin(u), np.cos(v), np.sin(v)
    ring = R_major + r_minor * cv
    points = np.stack([ring * cu, ring * su, r_minor * sv], axis=1)
    normals = np.stack([cv * cu, cv * su, sv], axis=1)
    return points, normals


def box_surface(
    n: int, rng: np.random.Generator, half_extent: float = 0.5
) -> tuple[_F, _F]:
    """Area-uniform samples of a centered cube surface with face normals."""
    if n < 1:
        raise EmptyInput("need at least one sample")
    h = half_extent
    face = rng.integers(0, 6, size=n)  # axis*2 + (0: -, 1: +)
    uv = rng.uniform(-h, h, size=(n, 2))
    points = np.empty((n, 3))
    normals = np.zeros((n, 3))
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        for sign_bit, sign in ((0, -1.0), (1, 1.0)):
            rows = face == axis * 2 + sign_bit
            points[rows, axis] = sign * h
            points[rows, others[0]] = uv[rows, 0]
            points[rows, others[1]] = uv[rows, 1]
            normals[rows, axis] = sign
    return points, normals


def synth_field(shape: str) -> ImplicitField:
    """The analytic field matching a synthetic shape name."""
    if shape == "sphere":
        return SphereField(radius=SYNTH_SHAPES["sphere"]["radius"])
    if shape == "torus":
        p = SYNTH_SHAPES["torus"]
        return TorusField(R_major=p["R_major"], r_minor=p["r_minor"])
    if shape == "box":
        h = SYNTH_SHAPES["box"]["half_extent"]
        return BoxField(half_extents=(h, h, h))
    raise FormatError(f"unknown synthetic shape: {shape!r}")


def surface_samples(shape: str, n: int, seed: int) -> tuple[_F, _F]:
    """Seeded area-uniform samples (points, normals) of a synthetic shape."""
    rng = np.random.default_rng(seed)
    if shape == "sphere":
        return sphere_surface(n, rng, **SYNTH_SHAPES["sphere"])
    if shape == "torus":
        return torus_surface(n, rng, **SYNTH_SHAPES["torus"])
    if shape == "box":
        return box_surface(n, rng, **SYNTH_SHAPES["box"])
    raise FormatError(f"unknown synthetic shape: {shape!r}")


@dataclass
class NoisyCloud:
    """A corrupted surface sampling plus everything needed to judge it."""

    points: _F
    normals: _F
    is_outlier: npt.NDArray[np.bool_]
    field: ImplicitField  # the uncorrupted ground-truth field
    shape: str


def noisy_cloud(
    shape: str,
    n: int,
    seed: int,
    noise: float = 0.01,
    outlier_frac: float = 0.05,
) -> NoisyCloud:
    """Noisy oriented cloud: surface samples displaced along their true
    normals by Gaussian noise of sigma = noise x diagonal, with
    ``outlier_frac`` of the points replaced by far-off-surface points
    (|f| >= 0.2 x diagonal, rejection-sampled in the domain cube) that
    carry random unit normals.  Outliers occupy the trailing rows and
    are flagged in ``is_outlier``.
    """
    if not 0.0 <= outlier_frac < 1.0:
        raise ValueError("outlier_frac must lie in [0, 1)")
    if noise < 0:
        raise ValueError("noise must be non-negative")
    field = synth_field(shape)
    diag = field.domain.diagonal
    rng = np.random.default_rng(seed)
    n_out = int(round(n * outlier_frac))
    n_in = n - n_out

    pts, nrm = {
        "sphere": sphere_surface,
        "torus": torus_surface,
        "box": box_surface,
    }[shape](n_in, rng, **SYNTH_SHAPES[shape])
    offsets = rng.normal(scale=noise * diag, size=n_in)
    pts = field.domain.clip(pts + offsets[:, None] * nrm)

    out_pts = np.empty((0, 3))
    min_offset = OUTLIER_MIN_OFFSET_FRAC * diag
    while len(out_pts) < n_out:
        cand = field.domain.sample(max(4 * n_out, 256), rng)
        far = np.abs(field.values(cand)) >= min_offset
        out_pts = np.concatenate([out_pts, cand[far]])
    out_pts = out_pts[:n_out]
    raw = rng.normal(size=(n_out, 3))
    out_nrm = raw / np.linalg.norm(raw, axis=1, keepdims=True)

    is_outlier = np.zeros(n, dtype=bool)
    is_outlier[n_in:] = True
    return NoisyCloud(
        points=np.vstack([pts, out_pts]),
        normals=np.vstack([nrm, out_nrm]),
        is_outlier=is_outlier,
        field=field,
        shape=shape,
    )
