"""K-nearest-neighbor queries and PCA normal estimation.

The index wraps a scipy cKDTree but pins down the ordering contract the
tree alone does not give: results are sorted by (distance, point id), so
exact distance ties always resolve to the lower id and every query is
reproducible bit-for-bit.  Squared distances are recomputed from the
coordinates (same arithmetic as a naive scan), and a query falls back to
a full scan whenever the candidate window could have cut off a tie.
"""

from __future__ import annotations

import numpy as np
import numpy.typing as npt
from scipy.spatial import cKDTree

from .errors import DegenerateNeighborhood, EmptyInput, InsufficientPoints

_F = npt.NDArray[np.floating]

# Extra candidates fetched beyond k to absorb ties before falling back.
_PAD = 8


def _sq_dists(pts: _F, q: _F) -> _F:
    d = pts - q
    return d[..., 0] ** 2 + d[..., 1] ** 2 + d[..., 2] ** 2


class KnnIndex:
    """Immutable point-set snapshot with deterministic k-NN queries."""

    def __init__(self, points: npt.ArrayLike):
        pts = np.array(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
            raise EmptyInput("index requires at least one 3D point")
        pts.setflags(write=False)
        self.points = pts
        self._tree = cKDTree(pts)

    def __len__(self) -> int:
        return len(self.points)

    # -- core query ------------------------------------------------------

    def _row(self, q: _F, k: int, drop_id: int | None, drop_coincident: bool):
        """ids and squared distances of the k nearest, (d2, id)-sorted."""
        n = len(self.points)
        d2 = _sq_dists(self.points, q)
        keep = np.ones(n, dtype=bool)
        if drop_id is not None:
            keep[drop_id] = False
        if drop_coincident:
            keep &= ~(self.points == q).all(axis=1)
        ids = np.flatnonzero(keep)
        if k > len(ids):
            raise InsufficientPoints(f"k={k} exceeds population {len(ids)}")
        d2 = d2[ids]
        order = np.lexsort((ids, d2))[:k]
        return ids[order], d2[order]

    def query(
        self,
        queries: npt.ArrayLike,
        k: int,
        *,
        exclude_self: bool = False,
        exclude_ids: npt.ArrayLike | None = None,
    ) -> tuple[npt.NDArray[np.int64], _F]:
        """Batch k-NN: ids (m, k) and squared distances (m, k).

        ``exclude_self`` drops candidates at bitwise-equal positions;
        ``exclude_ids`` drops one listed id per query row (used when the
        queries are the indexed points themselves).
        """
        q = np.asarray(queries, dtype=np.float64)
        if q.ndim == 1:
            q = q[None, :]
        m, n = len(q), len(self.points)
        if k == 0:
            return np.empty((m, 0), dtype=np.int64), np.empty((m, 0))
        n_excl = 1 if (exclude_self or exclude_ids is not None) else 0
        if k > n - n_excl:
            raise InsufficientPoints(f"k={k} exceeds population {n - n_excl}")

        kk = min(n, k + n_excl + _PAD)
        _, cand = self._tree.query(q, k=kk)
        cand = np.asarray(cand).reshape(m, -1)  # scipy squeezes k=1
        d2 = _sq_dists(self.points[cand], q[:, None, :])

        bad = np.zeros_like(d2, dtype=bool)
        if exclude_self:
            bad |= (self.points[cand] == q[:, None, :]).all(axis=2)
        if exclude_ids is not None:
            bad |= cand == np.asarray(exclude_ids).reshape(-1, 1)
        d2 = np.where(bad, np.inf, d2)

        order = np.lexsort((cand, d2), axis=1)
        rows = np.arange(m)[:, None]
        cand = np.take_along_axis(cand, order, axis=1)
        d2 = np.take_along_axis(d2, order, axis=1)
        out_ids, out_d2 = cand[:, :k].astype(np.int64), d2[:, :k]

        # A row is suspect when its k-th distance reaches the candidate
        # window edge (a tie may have been cut off) or still holds inf.
        if kk < n:
            suspect = (out_d2[:, -1] >= d2[:, -1]) | ~np.isfinite(out_d2[:, -1])
        else:
            suspect = ~np.isfinite(out_d2).all(axis=1)
        for i in np.flatnonzero(suspect):
            out_ids[i], out_d2[i] = self._row(
                q[i],
                k,
                int(exclude_ids[i]) if exclude_ids is not None else None,
                exclude_self,
            )
        return out_ids, out_d2

    def neighbors_of_all(self, k: int) -> tuple[npt.NDArray[np.int64], _F]:
        """k-NN of every indexed point over the set itself (own id excluded)."""
        return self.query(self.points, k, exclude_ids=np.arange(len(self.points)))

    def radius_neighbors(
        self, queries: npt.ArrayLike, radius: float
    ) -> list[npt.NDArray[np.int64]]:
        """Ids of all indexed points within ``radius`` of each query
        (inclusive), each row sorted ascending by id."""
        if radius <= 0:
            raise ValueError("radius must be positive")
        q = np.asarray(queries, dtype=np.float64)
        if q.ndim == 1:
            q = q[None, :]
        hits = self._tree.query_ball_point(q, r=radius)
        return [np.sort(np.asarray(row, dtype=np.int64)) for row in hits]


def build_index(points: npt.ArrayLike) -> KnnIndex:
    return KnnIndex(points)


def knn(index: KnnIndex, q: npt.ArrayLike, k: int, exclude_self: bool = False) -> list[tuple[int, float]]:
    """The k nearest indexed points to ``q`` as (id, distance), ascending
    by distance with exact ties broken by lower id."""
    ids, d2 = index.query(np.asarray(q, dtype=np.float64), k, exclude_self=exclude_self)
    return [(int(i), float(d)) for i, d in zip(ids[0], np.sqrt(d2[0]))]


# -- PCA normals ----------------------------------------------------------

#: Eigenvalue gap below which the normal direction is considered undefined.
DEGENERATE_EIG_GAP = 1e-12


def _canonical_sign(normals: _F) -> _F:
    """Flip rows into the +z hemisphere (ties: +y, then +x)."""
    nz, ny, nx = normals[:, 2], normals[:, 1], normals[:, 0]
    flip = (nz < 0) | ((nz == 0) & (ny < 0)) | ((nz == 0) & (ny == 0) & (nx < 0))
    out = normals.copy()
    out[flip] *= -1.0
    return out


def pca_normals(
    index: KnnIndex,
    queries: npt.ArrayLike,
    k: int,
    orient: npt.ArrayLike | None = None,
    exclude_ids: npt.ArrayLike | None = None,
) -> tuple[_F, _F]:
    """Batched smallest-eigenvector normals; returns (normals, planarity).

    planarity = 1 − λ_min/λ_mid; DegenerateNeighborhood when the two
    smallest covariance eigenvalues are within 1e-12 of each other.
    ``orient`` (m, 3) flips each normal to nonnegative dot with it;
    otherwise the canonical hemisphere rule applies.
    """
    if k < 3:
        raise ValueError("PCA normal estimation needs k >= 3")
    q = np.asarray(queries, dtype=np.float64)
    if q.ndim == 1:
        q = q[None, :]
    ids, _ = index.query(q, k, exclude_ids=exclude_ids)
    nbrs = index.points[ids]  # (m, k, 3)
    centered = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum("mki,mkj->mij", centered, centered) / k
    eigvals, eigvecs = np.linalg.eigh(cov)  # ascending eigenvalues
    gap = eigvals[:, 1] - eigvals[:, 0]
    if np.any(gap < DEGENERATE_EIG_GAP):
        i = int(np.argmin(gap))
        raise DegenerateNeighborhood(
            f"no unique normal direction at query {i} (eigengap {gap[i]:.2e})"
        )
    normals = eigvecs[:, :, 0]
    planarity = 1.0 - eigvals[:, 0] / eigvals[:, 1]
    if orient is not None:
        ref = np.asarray(orient, dtype=np.float64)
        if ref.ndim == 1:
            ref = ref[None, :]
        dots = np.einsum("mi,mi->m", normals, ref)
        normals = np.where(dots[:, None] < 0, -normals, normals)
        normals[dots == 0] = _canonical_sign(normals[dots == 0])
    else:
        normals = _canonical_sign(normals)
    return normals, planarity


class PcaNormal:
    """Single-point PCA normal with its planarity score."""

    __slots__ = ("normal", "planarity")

    def __init__(self, normal: _F, planarity: float):
        self.normal = normal
        self.planarity = planarity


def pca_normal(
    index: KnnIndex, p: npt.ArrayLike, k: int, orient: npt.ArrayLike | None = None
) -> PcaNormal:
    """Normal of the k-neighborhood of ``p``: smallest-eigenvalue eigenvector
    of the neighborhood covariance, sign fixed by ``orient`` or canonically."""
    normals, planarity = pca_normals(
        index, p, k, orient=None if orient is None else np.asarray(orient)[None, :]
    )
    return PcaNormal(normals[0], float(planarity[0]))


def estimate_normals(
    points: npt.ArrayLike,
    k: int = 16,
    orient: npt.ArrayLike | None = None,
    bilateral: bool = False,
    sigma_p: float | None = None,
) -> _F:
    """PCA normals for a whole cloud (each point's own row excluded from
    its neighborhood).  ``bilateral=True`` applies one pass of the
    bilateral normal filter; requires ``sigma_p``."""
    pts = np.asarray(points, dtype=np.float64)
    index = build_index(pts)
    normals, _ = pca_normals(index, pts, k, orient=orient, exclude_ids=np.arange(len(pts)))
    if bilateral:
        if sigma_p is None:
            raise ValueError("bilateral filtering needs sigma_p")
        from .config import SamplerConfig
        from .extraction import bilateral_normal_filter

        cfg = SamplerConfig(sigma_p=sigma_p, K=min(8, len(pts) - 1))
        normals = bilateral_normal_filter(pts, normals, index, cfg)
    return normals
