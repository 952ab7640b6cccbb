"""Iso-point extraction: projection, uniform resampling, edge-aware upsampling.

The pipeline turns a rough seed set into a dense, uniformly distributed
point set on the zero level set of an implicit field:

1. **Projection** — clipped Newton iterations move each seed along the
   field gradient until |f| falls under a tolerance.
2. **Uniform resampling** — Jacobi-style repulsion pushes points out of
   dense regions; terminated when the typical proposed motion becomes
   negligible, then re-projected.
3. **Edge-aware upsampling** — bilateral normal filtering, an
   attraction/repulsion push that respects edges, and priority-driven
   point insertion up to the target count, then a final projection.

All steps compute their updates from an immutable snapshot of the point
set (never from partially updated state), so results are independent of
evaluation order and reproducible bit-for-bit for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .config import SamplerConfig
from .errors import ExtractionFailed, InsufficientPoints
from .fields import GRAD_EPS, ImplicitField
from .spatial import KnnIndex

_F = npt.NDArray[np.floating]

# 1 - cos(60 degrees): fixed angular bandwidth of the normal filter.
_FILTER_ANGLE_SCALE = 0.5


@dataclass
class IsoPointSet:
    """Points on (or near) the zero level set with their field normals.

    ``residual_bound`` is the largest |f| over the stored points at
    creation time; ``origin_iteration`` tags which training iteration
    produced the set (0 outside of training).
    """

    points: _F
    normals: _F
    residual_bound: float
    origin_iteration: int = 0

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class ExtractionStats:
    """Counters from one extract_iso_points run (for budget checks)."""

    n_seeds: int
    n_converged: int
    resample_rounds: int
    n_inserted: int
    residual_max: float


def clip(v: npt.ArrayLike, tau0: float) -> _F:
    """Length-clipped vector: direction kept, norm bounded by tau0."""
    if tau0 <= 0:
        raise ValueError("tau0 must be positive")
    vec = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if norm <= tau0:
        return vec.copy()
    return vec * (tau0 / norm)


def _clip_rows(v: _F, tau0: float) -> _F:
    norms = np.linalg.norm(v, axis=1)
    scale = np.ones_like(norms)
    over = norms > tau0
    scale[over] = tau0 / norms[over]
    return v * scale[:, None]


def spatial_weight(d2: npt.ArrayLike, sigma_p: float) -> np.floating | _F:
    """Gaussian falloff exp(-d2/sigma_p) of squared distance d2."""
    if sigma_p <= 0:
        raise ValueError("sigma_p must be positive")
    return np.exp(-np.asarray(d2) / sigma_p)


def _require(cfg: SamplerConfig, *names: str) -> None:
    for name in names:
        if getattr(cfg, name) is None:
            raise ValueError(
                f"cfg.{name} is unresolved; call SamplerConfig.resolved(D, n) first"
            )


# -- stage 1: projection ------------------------------------------------------


def project(
    field: ImplicitField,
    seeds: npt.ArrayLike,
    cfg: SamplerConfig,
    eps: float | None = None,
) -> tuple[IsoPointSet, npt.NDArray[np.bool_]]:
    """Clipped Newton projection of seeds onto the zero level set.

    Each seed steps by -clip(J f / ||J||^2, tau0) until |f| < eps or
    max_newton_iters rounds pass; already-converged points are left
    untouched each round, and points hitting a singular gradient stop
    moving.  Returns the projected set (all rows, converged or not, with
    normals from the final Jacobians) and the convergence mask.
    """
    _require(cfg, "tau0")
    if eps is None:
        eps = cfg.eps_end
    if eps <= 0:
        raise ValueError("eps must be positive")
    pts = np.array(seeds, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise InsufficientPoints("projection needs at least one seed")

    undecided = np.ones(len(pts), dtype=bool)  # neither converged nor stuck
    for _ in range(cfg.max_newton_iters):
        idx = np.flatnonzero(undecided)
        if len(idx) == 0:
            break
        f, jac = field.values_and_jacobians(pts[idx])
        done = np.abs(f) < eps
        undecided[idx[done]] = False
        move = ~done
        jn2 = np.einsum("ni,ni->n", jac, jac)
        singular = jn2 < GRAD_EPS**2
        undecided[idx[move & singular]] = False
        move &= ~singular
        if not np.any(move):
            break
        rows = idx[move]
        step = (f[move] / jn2[move])[:, None] * jac[move]
        pts[rows] -= _clip_rows(step, cfg.tau0)

    f, jac = field.values_and_jacobians(pts)
    converged = np.abs(f) < eps
    norms = np.linalg.norm(jac, axis=1, keepdims=True)
    normals = np.divide(jac, norms, out=np.zeros_like(jac), where=norms > GRAD_EPS)
    iso = IsoPointSet(
        points=pts, normals=normals, residual_bound=float(np.max(np.abs(f)))
    )
    return iso, converged


# -- stage 2: uniform resampling ----------------------------------------------


def _repulsion_displacement(points: _F, index: KnnIndex, cfg: SamplerConfig) -> _F:
    """alpha * r per point, where r is the kernel-weighted average of the
    unit directions toward the K nearest neighbors (coincident neighbors
    are dropped; the caller subtracts the result)."""
    ids, d2 = index.neighbors_of_all(cfg.K)
    diff = index.points[ids] - points[:, None, :]  # (n, K, 3)
    d = np.sqrt(d2)
    w = spatial_weight(d2, cfg.sigma_p)
    ok = d > 0
    unit = np.divide(diff, d[:, :, None], out=np.zeros_like(diff), where=ok[:, :, None])
    w = np.where(ok, w, 0.0)
    w_sum = w.sum(axis=1)
    r = np.divide(
        np.einsum("nk,nki->ni", w, unit),
        w_sum[:, None],
        out=np.zeros_like(points),
        where=w_sum[:, None] > 0,
    )
    return cfg.alpha * r


def resample_step(points: npt.ArrayLike, index: KnnIndex, cfg: SamplerConfig) -> _F:
    """One Jacobi repulsion step: every point moves by exactly -alpha*r,
    with r the weighted average of unit directions toward its neighbors,
    all computed from the input snapshot.  ``index`` must be built over
    ``points``."""
    _require(cfg, "sigma_p", "alpha")
    pts = np.asarray(points, dtype=np.float64)
    return pts - _repulsion_displacement(pts, index, cfg)


def _resample_rounds(
    field: ImplicitField, iso: IsoPointSet, cfg: SamplerConfig, eps: float | None
) -> tuple[IsoPointSet, int]:
    cfg = cfg.resolved(field.domain.diagonal, len(iso))
    pts = iso.points.copy()
    nrm = iso.normals
    threshold = cfg.resample_stop_frac * cfg.alpha
    rounds = 0
    for _ in range(cfg.resample_rounds):
        disp = _repulsion_displacement(pts, KnnIndex(pts), cfg)
        # The stop statistic is the median TANGENTIAL displacement,
        # w.r.t. the normals held at entry.  The median because a max
        # never settles (lattice defects and patch boundaries always feel
        # a sizable pull); the tangential part because on curved surfaces
        # the radial component carries a curvature bias (~ spacing/2R per
        # unit step) that the final re-projection nullifies anyway.
        # Measured before moving, so an input that is already uniform
        # executes zero rounds.
        tang = disp - np.einsum("ni,ni->n", disp, nrm)[:, None] * nrm
        if float(np.median(np.linalg.norm(tang, axis=1))) < threshold:
            break
        pts -= disp
        rounds += 1
    out, converged = project(field, pts, cfg, eps)
    if not bool(converged.all()):
        kept = out.points[converged]
        if len(kept) == 0:
            raise ExtractionFailed("no resampled points re-converged in projection")
        out = IsoPointSet(
            points=kept,
            normals=out.normals[converged],
            residual_bound=float(np.max(np.abs(field.values(kept)))),
        )
    out.origin_iteration = iso.origin_iteration
    return out, rounds


def resample(
    field: ImplicitField,
    iso: IsoPointSet,
    cfg: SamplerConfig,
    eps: float | None = None,
) -> IsoPointSet:
    """Repulsion rounds until the median proposed motion stalls (or
    resample_rounds is hit), then re-projection with fresh normals;
    points that fail to re-converge are dropped."""
    out, _ = _resample_rounds(field, iso, cfg, eps)
    return out


# -- stage 3: edge-aware upsampling -------------------------------------------


def bilateral_normal_filter(
    points: npt.ArrayLike, normals: npt.ArrayLike, index: KnnIndex, cfg: SamplerConfig
) -> _F:
    """One pass of bilateral normal smoothing over the K neighborhoods.

    Each normal is replaced by the normalized sum of its neighbors'
    normals weighted by spatial falloff and angular agreement
    exp(-((1-|n_i.n_j|)/(1-cos 60deg))^2), plus the point's own normal at
    weight 1.  The angular term uses the absolute dot so that orientation
    flips read as agreement (normals here may be unoriented)."""
    _require(cfg, "sigma_p")
    pts = np.asarray(points, dtype=np.float64)
    nrm = np.asarray(normals, dtype=np.float64)
    ids, d2 = index.neighbors_of_all(cfg.K)
    w = spatial_weight(d2, cfg.sigma_p)
    dots = np.einsum("ni,nki->nk", nrm, nrm[ids])
    psi = np.exp(-(((1.0 - np.abs(dots)) / _FILTER_ANGLE_SCALE) ** 2))
    summed = nrm + np.einsum("nk,nki->ni", w * psi, nrm[ids])
    lengths = np.linalg.norm(summed, axis=1, keepdims=True)
    return np.where(lengths > GRAD_EPS, summed / np.where(lengths > 0, lengths, 1.0), nrm)


def ear_push_step(
    points: npt.ArrayLike, normals: npt.ArrayLike, index: KnnIndex, cfg: SamplerConfig
) -> _F:
    """Edge-aware point push: an attraction term (toward the consensus of
    neighbor tangent planes, weighted by how coplanar each neighbor is)
    and a half-strength repulsion term (away from the spatial neighbor
    mean), each computed from the snapshot and clipped by tau0."""
    _require(cfg, "sigma_p", "tau0")
    pts = np.asarray(points, dtype=np.float64)
    nrm = np.asarray(normals, dtype=np.float64)
    ids, d2 = index.neighbors_of_all(cfg.K)
    to_self = pts[:, None, :] - index.points[ids]  # p - p_i, shape (n, K, 3)

    plane_off = np.einsum("nki,nki->nk", nrm[ids], to_self)
    phi = np.exp(-(plane_off**2) / cfg.sigma_p)
    phi_sum = phi.sum(axis=1)
    attraction = np.divide(
        np.einsum("nk,nki->ni", phi, to_self),
        phi_sum[:, None],
        out=np.zeros_like(pts),
        where=phi_sum[:, None] > 0,
    )

    w = spatial_weight(d2, cfg.sigma_p)
    w_sum = w.sum(axis=1)
    repulsion = 0.5 * np.divide(
        np.einsum("nk,nki->ni", w, -to_self),
        w_sum[:, None],
        out=np.zeros_like(pts),
        where=w_sum[:, None] > 0,
    )
    return pts - _clip_rows(repulsion, cfg.tau0) - _clip_rows(attraction, cfg.tau0)


def _priorities(pts: _F, nrm: _F, index: KnnIndex, cfg: SamplerConfig):
    """Per-point priority max_j B(p, p_j) and the arg-max neighbor id,
    with B = distance * (1 + edge_lambda * (1 - n.n_j))."""
    ids, d2 = index.neighbors_of_all(cfg.K)
    ndots = np.einsum("ni,nki->nk", nrm, nrm[ids])
    B = np.sqrt(d2) * (1.0 + cfg.edge_lambda * (1.0 - ndots))
    jstar = B.argmax(axis=1)
    rows = np.arange(len(pts))
    return B[rows, jstar], ids[rows, jstar]


def insert_points(
    points: npt.ArrayLike,
    normals: npt.ArrayLike,
    index: KnnIndex,
    target_count: int,
    cfg: SamplerConfig,
) -> _F:
    """Grow the set to exactly target_count by priority-driven insertion.

    Per step, the top floor(n * insert_cap_frac) points by priority (at
    least one; exact ties resolved toward lower ids) each spawn one point
    at (p_i* + 2 p*) / 3 toward their highest-B neighbor; the index is
    rebuilt between steps.  New points inherit the parent normal until
    the caller re-projects.  ``index`` must be built over ``points``."""
    pts = np.array(points, dtype=np.float64)
    nrm = np.array(normals, dtype=np.float64)
    if target_count < len(pts):
        raise ValueError("target_count must be >= current count")
    idx = index
    while len(pts) < target_count:
        priority, partner = _priorities(pts, nrm, idx, cfg)
        budget = min(
            target_count - len(pts), max(1, int(len(pts) * cfg.insert_cap_frac))
        )
        chosen = np.lexsort((np.arange(len(pts)), -priority))[:budget]
        fresh = (pts[partner[chosen]] + 2.0 * pts[chosen]) / 3.0
        pts = np.vstack([pts, fresh])
        nrm = np.vstack([nrm, nrm[chosen]])
        idx = KnnIndex(pts)
    return pts


def upsample(
    field: ImplicitField,
    iso: IsoPointSet,
    target_count: int,
    cfg: SamplerConfig,
    eps: float | None = None,
) -> IsoPointSet:
    """Filter normals, push points off edges, insert up to target_count,
    and re-project everything onto the level set."""
    if target_count < len(iso):
        raise ValueError("target_count must be >= current count")
    cfg = cfg.resolved(field.domain.diagonal, len(iso))
    index = KnnIndex(iso.points)
    filtered = bilateral_normal_filter(iso.points, iso.normals, index, cfg)
    pushed = ear_push_step(iso.points, filtered, index, cfg)
    grown = insert_points(pushed, filtered, KnnIndex(pushed), target_count, cfg)
    out, _ = project(field, grown, cfg, eps)
    out.origin_iteration = iso.origin_iteration
    return out


# -- full pipeline -------------------------------------------------------------


def extract_iso_points(
    field: ImplicitField,
    prev: IsoPointSet | None,
    n_target: int,
    cfg: SamplerConfig | None = None,
    seed: int = 0,
    eps: float | None = None,
    origin_iteration: int = 0,
    return_stats: bool = False,
) -> IsoPointSet | tuple[IsoPointSet, ExtractionStats]:
    """Full extraction: seeds -> project -> resample -> upsample.

    Seeds come from ``prev`` when given (warm start), else n_target
    uniform samples of the field domain drawn with ``seed``.  Seeds that
    fail to converge in projection are dropped (ExtractionFailed if more
    than half do, or if too few survive to resample); upsampling restores
    the count to exactly n_target.  Deterministic given (seed, prev, cfg).
    """
    if n_target < 16:
        raise InsufficientPoints("n_target must be at least 16")
    cfg = cfg or SamplerConfig()
    rng = np.random.default_rng(seed)
    if prev is not None and len(prev) > 0:
        seeds = prev.points
    else:
        seeds = field.domain.sample(n_target, rng)

    work_cfg = cfg.resolved(field.domain.diagonal, len(seeds))
    projected, converged = project(field, seeds, work_cfg, eps)
    n_ok = int(converged.sum())
    if 2 * n_ok < len(seeds) or n_ok < cfg.K + 1:
        raise ExtractionFailed(
            f"only {n_ok}/{len(seeds)} seeds converged in projection"
        )
    base = IsoPointSet(
        points=projected.points[converged],
        normals=projected.normals[converged],
        residual_bound=projected.residual_bound,
        origin_iteration=origin_iteration,
    )

    settled, rounds = _resample_rounds(field, base, cfg, eps)
    if len(settled) < cfg.K + 1:
        raise ExtractionFailed(
            f"only {len(settled)} points survived resampling"
        )
    if len(settled) > n_target:
        keep = np.sort(rng.choice(len(settled), size=n_target, replace=False))
        settled = IsoPointSet(
            points=settled.points[keep],
            normals=settled.normals[keep],
            residual_bound=settled.residual_bound,
            origin_iteration=origin_iteration,
        )
    n_before = len(settled)
    final = upsample(field, settled, n_target, cfg, eps)
    final.origin_iteration = origin_iteration
    if not return_stats:
        return final
    stats = ExtractionStats(
        n_seeds=len(seeds),
        n_converged=n_ok,
        resample_rounds=rounds,
        n_inserted=n_target - n_before,
        residual_max=final.residual_bound,
    )
    return final, stats
