"""Saliency metrics over iso-points and metric-guided insertion.

Two per-point scalars mark regions that deserve extra samples: a
curvature proxy (norm of the discrete Laplacian, i.e. the offset of a
point from its neighborhood mean) and a data-driven metric (mean
residual loss of nearby training points).  ``metric_insert`` densifies
the neighborhoods of the highest-scoring points and re-projects the new
points onto the surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .config import SamplerConfig
from .errors import EmptyInput
from .extraction import IsoPointSet, project
from .fields import ImplicitField
from .spatial import KnnIndex

_F = npt.NDArray[np.floating]

#: Insertions closer than this fraction of the domain diagonal collapse to one.
DEDUPE_FRAC = 1e-6


@dataclass
class SaliencyField:
    """Non-negative per-iso-point scores plus the high-set cutoff rule."""

    values: _F
    kind: str  # "curvature" or "loss"
    high_set_quantile: float = 0.85

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("saliency values must be a flat array")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("saliency values must be finite")
        if np.any(self.values < 0):
            raise ValueError("saliency values must be non-negative")
        if not 0.0 < self.high_set_quantile < 1.0:
            raise ValueError("high_set_quantile must lie in (0, 1)")

    def __len__(self) -> int:
        return len(self.values)

    def high_set(self) -> npt.NDArray[np.bool_]:
        """Mask of points strictly above the quantile threshold.

        Strict inequality means a constant field selects nothing, so
        uniform saliency degrades insertion to a no-op.
        """
        threshold = float(np.quantile(self.values, self.high_set_quantile))
        return self.values > threshold


def curvature_metric(
    iso: IsoPointSet, index: KnnIndex, K: int, literal_sum: bool = False
) -> SaliencyField:
    """Curvature proxy R(p) = ||p - mean of the K nearest neighbors||.

    ``literal_sum`` switches the reference point to the plain neighbor
    sum instead of the mean; the mean is the default because the sum
    grows with K and stops approximating the Laplacian (see ledger).
    """
    if K < 3:
        raise ValueError("K must be at least 3")
    ids, _ = index.query(iso.points, K, exclude_ids=np.arange(len(iso.points)))
    agg = index.points[ids].sum(axis=1)
    if not literal_sum:
        agg /= K
    values = np.linalg.norm(iso.points - agg, axis=1)
    return SaliencyField(values=values, kind="curvature")


def loss_metric(
    iso: IsoPointSet,
    training_points: npt.ArrayLike,
    residuals: npt.ArrayLike,
    index: KnnIndex,
    radius: float,
) -> SaliencyField:
    """Mean residual loss of the training points within ``radius`` of
    each iso-point; 0 where the ball is empty.  ``index`` must be built
    over ``training_points``."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    res = np.asarray(residuals, dtype=np.float64)
    pts = np.asarray(training_points, dtype=np.float64)
    if len(res) != len(pts):
        raise ValueError("one residual per training point required")
    if len(pts) == 0:
        raise EmptyInput("loss metric needs training points")
    values = np.zeros(len(iso.points))
    for row, hits in enumerate(index.radius_neighbors(iso.points, radius)):
        if len(hits):
            values[row] = float(res[hits].mean())
    return SaliencyField(values=np.abs(values), kind="loss")


def _dedupe(candidates: _F, min_dist: float) -> npt.NDArray[np.bool_]:
    """Keep-mask dropping any candidate within min_dist of an earlier
    surviving one (pairs visited in (i, j) order, so earlier wins)."""
    alive = np.ones(len(candidates), dtype=bool)
    if len(candidates) < 2:
        return alive
    pairs = sorted(KnnIndex(candidates)._tree.query_pairs(r=min_dist))
    for i, j in pairs:
        if alive[i] and alive[j]:
            alive[j] = False
    return alive


def metric_insert(
    field: ImplicitField,
    iso: IsoPointSet,
    saliency: SaliencyField,
    index: KnnIndex,
    cfg: SamplerConfig,
    eps: float | None = None,
    max_new: int | None = None,
) -> IsoPointSet:
    """Densify around the high-saliency subset T*.

    Every iso-point within sigma = sqrt(sigma_p) of some T* member
    spawns one candidate per K-neighbor at (2p + p_i)/3; candidates
    closer than 1e-6 x diagonal collapse to the first, the rest are
    projected onto the level set, and those that converge are appended.
    Existing points are never moved or removed.

    Candidates are generated highest-saliency parent first, so
    ``max_new`` (when given) budgets the insertion toward the hardest
    examples; without it smooth saliency fields can qualify nearly every
    point and grow the set by up to a factor of K.
    """
    if len(saliency) != len(iso):
        raise ValueError("saliency length must match the iso-point count")
    cfg = cfg.resolved(field.domain.diagonal, len(iso))
    marked = saliency.high_set()
    if not marked.any():
        return IsoPointSet(
            points=iso.points.copy(),
            normals=iso.normals.copy(),
            residual_bound=iso.residual_bound,
            origin_iteration=iso.origin_iteration,
        )

    sigma = float(np.sqrt(cfg.sigma_p))
    star = KnnIndex(iso.points[marked])
    _, d2_star = star.query(iso.points, 1)
    near = np.sqrt(d2_star[:, 0]) <= sigma

    rows = np.flatnonzero(near)
    rows = rows[np.lexsort((rows, -saliency.values[rows]))]
    ids, _ = index.query(iso.points[rows], cfg.K, exclude_ids=rows)
    parents = np.repeat(iso.points[rows], cfg.K, axis=0)
    partners = index.points[ids.reshape(-1)]
    fresh = (2.0 * parents + partners) / 3.0
    fresh = fresh[_dedupe(fresh, DEDUPE_FRAC * field.domain.diagonal)]
    if max_new is not None:
        fresh = fresh[:max_new]

    projected, converged = project(field, fresh, cfg, eps)
    new_pts = projected.points[converged]
    new_nrm = projected.normals[converged]
    if len(new_pts) == 0:
        residual = iso.residual_bound
    else:
        residual = max(
            iso.residual_bound, float(np.max(np.abs(field.values(new_pts))))
        )
    return IsoPointSet(
        points=np.vstack([iso.points, new_pts]),
        normals=np.vstack([iso.normals, new_nrm]),
        residual_bound=residual,
        origin_iteration=iso.origin_iteration,
    )
