"""Evaluation metrics: chamfer distances, eikonal residual, uniformity.

The chamfer implementation is the single code path used by both the
library and the CLI, so file-based and in-memory evaluations agree
bitwise.  All nearest-neighbor lookups go through the deterministic
index, which makes every number reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .errors import EmptyInput, MissingNormals
from .fields import ImplicitField
from .spatial import KnnIndex

_F = npt.NDArray[np.floating]


@dataclass
class MetricsReport:
    """Bag of evaluation numbers; unset fields stay None and serialize
    to empty CSV cells."""

    chamfer_pos: float | None = None
    chamfer_normal: float | None = None
    eikonal_residual: float | None = None
    nn_mean: float | None = None
    nn_cv: float | None = None
    sample_count: int | None = None

    def csv_cells(self, *fields: str) -> list[str]:
        cells = []
        for name in fields:
            value = getattr(self, name)
            if value is None:
                cells.append("")
            elif name == "sample_count":
                cells.append(str(int(value)))
            else:
                cells.append(f"{value:.9g}")
        return cells


def _one_way(
    src: _F, dst_index: KnnIndex, src_n: _F | None, dst_n: _F | None, l1: bool
) -> tuple[float, float | None]:
    ids, d2 = dst_index.query(src, 1)
    pos = float(np.mean(np.sqrt(d2[:, 0]) if l1 else d2[:, 0]))
    if src_n is None or dst_n is None:
        return pos, None
    # 1 - cos as the half squared chord: identical for unit normals, but
    # exactly zero on identical rows and never negative under rounding.
    diff = src_n - dst_n[ids[:, 0]]
    return pos, float(np.mean(0.5 * np.einsum("ni,ni->n", diff, diff)))


def chamfer(
    a: npt.ArrayLike,
    b: npt.ArrayLike,
    a_normals: npt.ArrayLike | None = None,
    b_normals: npt.ArrayLike | None = None,
    l1: bool = False,
) -> tuple[float, float | None]:
    """Two-way chamfer distance between point sets.

    Position term: 0.5 * [mean_a min_b d + mean_b min_a d] with d the
    squared distance (or plain distance when ``l1``).  Normal term uses
    the matched nearest pairs with 1 - cos, and is None when neither
    side carries normals.
    """
    pa = np.asarray(a, dtype=np.float64)
    pb = np.asarray(b, dtype=np.float64)
    if len(pa) == 0 or len(pb) == 0:
        raise EmptyInput("chamfer requires two nonempty point sets")
    na = None if a_normals is None else np.asarray(a_normals, dtype=np.float64)
    nb = None if b_normals is None else np.asarray(b_normals, dtype=np.float64)
    if (na is None) != (nb is None):
        raise MissingNormals("normal chamfer requires normals on both sides")

    pos_ab, nrm_ab = _one_way(pa, KnnIndex(pb), na, nb, l1)
    pos_ba, nrm_ba = _one_way(pb, KnnIndex(pa), nb, na, l1)
    pos = 0.5 * (pos_ab + pos_ba)
    normal = None if nrm_ab is None else 0.5 * (nrm_ab + nrm_ba)
    return pos, normal


def eikonal_residual(field: ImplicitField, n_samples: int, seed: int = 0) -> float:
    """Mean |1 - ||J||| over seeded uniform samples of the field domain."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng(seed)
    samples = field.domain.sample(n_samples, rng)
    jac = field.jacobians(samples)
    return float(np.mean(np.abs(1.0 - np.linalg.norm(jac, axis=1))))


def uniformity(points: npt.ArrayLike) -> tuple[float, float]:
    """(mean, coefficient of variation) of the 1-NN distance distribution."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 2:
        raise EmptyInput("uniformity requires at least two points")
    _, d2 = KnnIndex(pts).neighbors_of_all(1)
    d = np.sqrt(d2[:, 0])
    mean = float(d.mean())
    return mean, float(d.std() / mean)
