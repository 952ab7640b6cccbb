"""Fitting a sine network to a noisy oriented point cloud.

The trainer optimizes the four-part data objective (on-surface values,
on-surface normals, off-surface exponential repulsion, eikonal) and,
after a warmup phase, augments it with regularizers evaluated on
iso-points extracted from the network's own zero set.  Iso-points also
drive a bilateral per-point weight that suppresses outliers in the data
terms.  Everything is seeded and single-threaded deterministic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
import numpy.typing as npt

from .config import FitConfig, SamplerConfig
from .errors import ExtractionFailed, InsufficientPoints, NonFiniteLoss
from .extraction import IsoPointSet, extract_iso_points, project
from .siren import (
    LossTerm,
    SirenNetwork,
    init_siren,
    loss_parameter_gradient,
    loss_values,
)
from .spatial import KnnIndex, pca_normals

_F = npt.NDArray[np.floating]

#: How many nearest iso-points compete for a training point's weight.
WEIGHT_NEIGHBORS = 8
#: Neighborhood size for PCA normals on iso-points.
PCA_K = 16
#: Training-log period in iterations.
LOG_EVERY = 50


def psi(
    n_p: npt.ArrayLike,
    n_q: npt.ArrayLike,
    sigma_n: float = 60.0,
    literal: bool = False,
) -> _F:
    """Angular agreement weight between unit normals, rowwise.

    The default form exp(-((1 - n_p.n_q)/(1 - cos sigma_n))^2) is 1 at
    alignment and decays with angle.  ``literal`` evaluates the
    as-printed variant exp(-(1 - (1 - n_p.n_q)/(1 - cos sigma_n))^2),
    which instead peaks when the angle equals sigma_n (kept for
    auditability; see ledger).  ``sigma_n`` is in degrees.
    """
    a = np.asarray(n_p, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(n_q, dtype=np.float64).reshape(-1, 3)
    denom = 1.0 - np.cos(np.deg2rad(sigma_n))
    ratio = (1.0 - np.einsum("ni,ni->n", a, b)) / denom
    arg = (1.0 - ratio) if literal else ratio
    return np.exp(-(arg**2))


def outlier_weights(
    points: npt.ArrayLike,
    normals: npt.ArrayLike,
    iso: IsoPointSet,
    index: KnnIndex,
    cfg: SamplerConfig,
    sigma_n: float = 60.0,
    psi_literal: bool = False,
    literal_min: bool = False,
) -> _F:
    """Bilateral agreement v(q) in [0, 1] of each training point with the
    iso-point set.

    Default: the max over the nearest WEIGHT_NEIGHBORS iso-points of
    phi(n_p, p - q) * psi(n_p, n_q), where phi is the anisotropic
    plane-distance weight exp(-(n_p.(p - q))^2 / sigma_p).
    ``literal_min`` instead takes the min over every iso-point, which
    collapses toward zero for all queries (see ledger); ``index`` must
    be built over ``iso.points``.
    """
    if len(iso) == 0:
        raise InsufficientPoints("outlier weights need a nonempty iso set")
    q = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    nq = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    if cfg.sigma_p is None:
        raise ValueError("cfg.sigma_p is unresolved; call resolved() first")

    if literal_min:
        ids = np.broadcast_to(np.arange(len(iso)), (len(q), len(iso)))
    else:
        k = min(WEIGHT_NEIGHBORS, len(iso))
        ids, _ = index.query(q, k)
    p = iso.points[ids]  # (n, k, 3)
    n_p = iso.normals[ids]
    plane_off = np.einsum("nki,nki->nk", n_p, p - q[:, None, :])
    phi = np.exp(-(plane_off**2) / cfg.sigma_p)
    dots = np.einsum("nki,ni->nk", n_p, nq)
    denom = 1.0 - np.cos(np.deg2rad(sigma_n))
    ratio = (1.0 - dots) / denom
    arg = (1.0 - ratio) if psi_literal else ratio
    prod = phi * np.exp(-(arg**2))
    return prod.min(axis=1) if literal_min else prod.max(axis=1)


@dataclass
class TrainBatch:
    """One optimization step's samples: oriented surface points drawn
    from the cloud and unoriented off-surface points drawn uniformly
    from the domain cube, in equal number."""

    surface_points: _F
    surface_normals: _F
    surface_rows: npt.NDArray[np.int64]  # rows into the source cloud
    off_points: _F

    def __post_init__(self) -> None:
        if len(self.surface_points) != len(self.off_points):
            raise ValueError("surface and off-surface batch sizes must match")


def _data_terms(
    batch: TrainBatch, cfg: FitConfig, v: _F | None
) -> list[LossTerm]:
    both = np.vstack([batch.surface_points, batch.off_points])
    return [
        LossTerm("abs_value", batch.surface_points, cfg.gamma_on, point_weights=v),
        LossTerm(
            "normal_cosine",
            batch.surface_points,
            cfg.gamma_normal,
            normals=batch.surface_normals,
            point_weights=v,
        ),
        LossTerm("exp_abs_value", batch.off_points, cfg.gamma_off, alpha=cfg.alpha_off),
        LossTerm("eikonal", both, cfg.gamma_eik),
    ]


def _iso_terms(iso: IsoPointSet, iso_normals: _F, cfg: FitConfig) -> list[LossTerm]:
    return [
        LossTerm("abs_value", iso.points, cfg.gamma_on),
        LossTerm(
            "normal_abs_cosine", iso.points, cfg.gamma_normal, normals=iso_normals
        ),
    ]


def baseline_losses(
    net: SirenNetwork, batch: TrainBatch, cfg: FitConfig, v: _F | None = None
) -> tuple[float, float, float, float]:
    """(L_onSDF, L_normal, L_offSDF, L_eikonal) as plain means (no gamma
    factors); ``v`` weights the two on-surface terms per point."""
    terms = [replace(t, weight=1.0) for t in _data_terms(batch, cfg, v)]
    on, nrm, off, eik = loss_values(net, terms)
    return on, nrm, off, eik


def iso_losses(
    net: SirenNetwork, iso: IsoPointSet, iso_normals: npt.ArrayLike
) -> tuple[float, float]:
    """(L_isoSDF, L_isoNormal): mean |f| and mean 1 - |cos| between the
    network gradient and the supplied per-point normals."""
    nrm = np.asarray(iso_normals, dtype=np.float64)
    cfg = FitConfig()
    terms = [replace(t, weight=1.0) for t in _iso_terms(iso, nrm, cfg)]
    sdf, normal = loss_values(net, terms)
    return sdf, normal


@dataclass
class LogRow:
    iter: int
    L_onSDF: float
    L_normal: float
    L_offSDF: float
    L_eikonal: float
    L_isoSDF: float | None
    L_isoNormal: float | None
    wall_seconds: float

    CSV_FIELDS = (
        "iter",
        "L_onSDF",
        "L_normal",
        "L_offSDF",
        "L_eikonal",
        "L_isoSDF",
        "L_isoNormal",
        "wall_seconds",
    )

    def csv_cells(self) -> list[str]:
        cells = [str(self.iter)]
        for name in self.CSV_FIELDS[1:]:
            value = getattr(self, name)
            cells.append("" if value is None else f"{value:.9g}")
        return cells


@dataclass
class FitLog:
    """Per-LOG_EVERY loss components plus extraction bookkeeping."""

    rows: list[LogRow] = field(default_factory=list)
    extraction_iters: list[int] = field(default_factory=list)
    extraction_failures: int = 0

    def to_csv(self) -> str:
        lines = [",".join(LogRow.CSV_FIELDS)]
        lines += [",".join(row.csv_cells()) for row in self.rows]
        return "\n".join(lines) + "\n"


@dataclass
class _AdamState:
    """Bias-corrected first/second moments over float64 master weights."""

    masters: list[tuple[_F, _F]]
    m: list[tuple[_F, _F]]
    v: list[tuple[_F, _F]]
    steps: int = 0

    @classmethod
    def for_net(cls, net: SirenNetwork) -> "_AdamState":
        masters = [
            (w.astype(np.float64), b.astype(np.float64))
            for w, b in zip(net.weights, net.biases)
        ]
        zeros = lambda: [
            (np.zeros_like(w), np.zeros_like(b)) for w, b in masters
        ]
        return cls(masters=masters, m=zeros(), v=zeros())

    def step(
        self, grads: list[tuple[_F, _F]], lr: float, beta1=0.9, beta2=0.999, eps=1e-8
    ) -> None:
        self.steps += 1
        c1 = 1.0 - beta1**self.steps
        c2 = 1.0 - beta2**self.steps
        for (mw, mb), (vw, vb), (gw, gb), (w, b) in zip(
            self.m, self.v, grads, self.masters
        ):
            for mom, sq, g, p in ((mw, vw, gw, w), (mb, vb, gb, b)):
                mom *= beta1
                mom += (1.0 - beta1) * g
                sq *= beta2
                sq += (1.0 - beta2) * g * g
                p -= lr * (mom / c1) / (np.sqrt(sq / c2) + eps)

    def write_into(self, net: SirenNetwork) -> None:
        for (w64, b64), w, b in zip(self.masters, net.weights, net.biases):
            w[...] = w64.astype(w.dtype)
            b[...] = b64.astype(b.dtype)


def _eps_at(t: int, cfg: FitConfig, sampler: SamplerConfig) -> float:
    if cfg.iters <= 1:
        return sampler.eps_end
    frac = t / (cfg.iters - 1)
    return sampler.eps_start + (sampler.eps_end - sampler.eps_start) * frac


def _validate_cloud(points: _F, normals: _F, domain) -> None:
    if len(points) < 100:
        raise InsufficientPoints("fitting needs at least 100 cloud points")
    if points.shape != normals.shape or points.shape[1] != 3:
        raise ValueError("points and normals must both be (n, 3)")
    lengths = np.linalg.norm(normals, axis=1)
    if np.any(np.abs(lengths - 1.0) > 1e-6):
        raise ValueError("cloud normals must be unit length")
    lo, hi = np.asarray(domain.bbox_min), np.asarray(domain.bbox_max)
    if np.any(points < lo) or np.any(points > hi):
        raise ValueError("cloud must lie inside the field domain cube")


def fit(
    points: npt.ArrayLike,
    normals: npt.ArrayLike,
    cfg: FitConfig,
    sampler: SamplerConfig | None = None,
    on_checkpoint=None,
    checkpoint_every: int = 0,
    on_iso_update=None,
) -> tuple[SirenNetwork, FitLog]:
    """Train a sine network on an oriented cloud; returns (net, log).

    Schedule: plain data objective before ``warmup_iters``; at warmup
    and every ``iso_update_period`` thereafter, iso-points are
    (re)extracted from the current network (seeded first by projecting a
    cloud subsample) and, depending on cfg, the iso regularizers and the
    bilateral outlier weights switch on.  A failed re-extraction keeps
    the previous iso-points.  ``on_checkpoint(iteration, net)`` fires
    every ``checkpoint_every`` iterations and at the end;
    ``on_iso_update(net, iso, iteration)`` may return a replacement
    iso-point set (saliency-guided densification).
    """
    pts = np.asarray(points, dtype=np.float64)
    nrm = np.asarray(normals, dtype=np.float64)
    sampler = sampler or SamplerConfig()
    net = init_siren(
        width=cfg.width,
        hidden_layers=cfg.hidden_layers,
        omega=cfg.omega,
        seed=cfg.seed,
    )
    _validate_cloud(pts, nrm, net.domain)

    rng = np.random.default_rng(cfg.seed)
    adam = _AdamState.for_net(net)
    log = FitLog()
    uses_iso = cfg.iso_losses or cfg.outlier_weighting
    iso: IsoPointSet | None = None
    iso_nrm: _F | None = None
    v_cloud = np.ones(len(pts))
    t_start = time.perf_counter()

    iso_budget: int | None = None
    for t in range(cfg.iters):
        if uses_iso and t >= cfg.warmup_iters and (
            (t - cfg.warmup_iters) % cfg.iso_update_period == 0
        ):
            iso = _update_iso(net, pts, iso, cfg, sampler, rng, t, log,
                              n_target=iso_budget)
            if iso_budget is None:
                iso_budget = len(iso)  # count stays fixed across updates
            if on_iso_update is not None:
                replacement = on_iso_update(net, iso, t)
                if replacement is not None:
                    iso = replacement
            iso_index = KnnIndex(iso.points)
            iso_nrm, _ = pca_normals(
                iso_index,
                iso.points,
                k=min(PCA_K, len(iso) - 1),
                exclude_ids=np.arange(len(iso)),
            )
            if cfg.outlier_weighting:
                wcfg = sampler.resolved(net.domain.diagonal, len(iso))
                v_cloud = outlier_weights(
                    pts,
                    nrm,
                    iso,
                    iso_index,
                    wcfg,
                    sigma_n=cfg.sigma_n,
                    psi_literal=cfg.psi_literal,
                )

        replace_rows = len(pts) < cfg.batch_size
        rows = rng.choice(len(pts), size=cfg.batch_size, replace=replace_rows)
        batch = TrainBatch(
            surface_points=pts[rows],
            surface_normals=nrm[rows],
            surface_rows=rows.astype(np.int64),
            off_points=net.domain.sample(cfg.batch_size, rng),
        )
        v = v_cloud[rows] if cfg.outlier_weighting and iso is not None else None
        terms = _data_terms(batch, cfg, v)
        if cfg.iso_losses and iso is not None:
            terms += _iso_terms(iso, iso_nrm, cfg)

        if t % LOG_EVERY == 0:
            flat = loss_values(net, [replace(x, weight=1.0) for x in terms])
            has_iso = len(flat) == 6
            log.rows.append(
                LogRow(
                    iter=t,
                    L_onSDF=flat[0],
                    L_normal=flat[1],
                    L_offSDF=flat[2],
                    L_eikonal=flat[3],
                    L_isoSDF=flat[4] if has_iso else None,
                    L_isoNormal=flat[5] if has_iso else None,
                    wall_seconds=time.perf_counter() - t_start,
                )
            )

        total, grads = loss_parameter_gradient(net, terms)
        if not np.isfinite(total):
            err = NonFiniteLoss(f"non-finite loss at iteration {t}")
            err.iteration = t
            raise err
        adam.step(grads, cfg.learning_rate)
        adam.write_into(net)

        if checkpoint_every and on_checkpoint is not None and (
            (t + 1) % checkpoint_every == 0 or t + 1 == cfg.iters
        ):
            on_checkpoint(t + 1, net)

    return net, log


def _update_iso(
    net: SirenNetwork,
    cloud: _F,
    prev: IsoPointSet | None,
    cfg: FitConfig,
    sampler: SamplerConfig,
    rng: np.random.Generator,
    t: int,
    log: FitLog,
    n_target: int | None = None,
) -> IsoPointSet:
    """(Re)extract iso-points from the network's current zero set.

    The count is held at ``n_target`` (the post-subsample count) across
    updates; a caller-enlarged previous set (saliency insertion) is
    thinned back to the budget before seeding the next extraction.
    """
    eps = _eps_at(t, cfg, sampler)
    if prev is None:
        n_sub = max(16, int(round(len(cloud) * cfg.iso_init_subsample)))
        rows = np.sort(rng.choice(len(cloud), size=min(n_sub, len(cloud)), replace=False))
        pcfg = sampler.resolved(net.domain.diagonal, len(rows))
        projected, converged = project(net, cloud[rows], pcfg, eps)
        if int(converged.sum()) < 16:
            raise ExtractionFailed(
                f"only {int(converged.sum())} subsampled seeds converged at warmup"
            )
        prev = IsoPointSet(
            points=projected.points[converged],
            normals=projected.normals[converged],
            residual_bound=projected.residual_bound,
            origin_iteration=t,
        )
    if n_target is None:
        n_target = len(prev)
    elif len(prev) > n_target:
        keep = np.sort(rng.choice(len(prev), size=n_target, replace=False))
        prev = IsoPointSet(
            points=prev.points[keep],
            normals=prev.normals[keep],
            residual_bound=prev.residual_bound,
            origin_iteration=prev.origin_iteration,
        )
    try:
        iso = extract_iso_points(
            net,
            prev,
            n_target=max(n_target, 16),
            cfg=sampler,
            seed=cfg.seed,
            eps=eps,
            origin_iteration=t,
        )
        log.extraction_iters.append(t)
        return iso
    except ExtractionFailed:
        if prev.origin_iteration == t:
            raise  # first extraction has nothing to fall back to
        log.extraction_failures += 1
        return prev
