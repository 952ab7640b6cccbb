"""Command-line surface: extract, fit, eval, bench, synth.

Exit codes: 0 success, 2 bad arguments or unusable inputs, 3 extraction
failure, 4 I/O or file-format failure, 5 non-finite training loss.
All commands are deterministic for fixed arguments and seed; the only
nondeterministic output cells are wall-clock columns in fit/bench logs.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace

import numpy as np

from .config import FitConfig, RunConfig, SamplerConfig, load_run_config
from .errors import (
    EmptyInput,
    ExtractionFailed,
    FormatError,
    InsufficientPoints,
    IsoPointsError,
    MissingNormals,
    NonFiniteLoss,
)
from .extraction import IsoPointSet, extract_iso_points, project
from .fields import ImplicitField
from .fitting import _AdamState, _data_terms, _eps_at, TrainBatch, fit as run_fit
from .io import read_isw, read_ply, write_isw, write_ply
from .metrics import chamfer, uniformity
from .saliency import curvature_metric, loss_metric, metric_insert
from .siren import init_siren, loss_parameter_gradient
from .spatial import KnnIndex
from .synth import SYNTH_SHAPES, noisy_cloud, surface_samples, synth_field

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_EXTRACTION = 3
EXIT_IO = 4
EXIT_NONFINITE = 5

#: Checkpoint cadence of bench CSV rows, in iterations.
BENCH_EVERY = 250
#: Seeds for the benchmark's fixed evaluation point sets.
BENCH_PROBE_SEED = 555
BENCH_REF_SEED = 999
#: Surface probes / reference samples used for bench chamfer columns.
BENCH_PROBES = 10_000
BENCH_REFERENCE = 50_000
#: Probes farther than this from the analytic surface are discarded
#: (they converged onto spurious sheets, not the data sheet).
BENCH_SHEET_TOL = 0.3
STRATEGIES = ("none", "uniform", "curvature", "loss")


def _read_config_text(path: str | None) -> str | None:
    if path is None:
        return None
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _resolve_field(spec: str) -> ImplicitField:
    """A named analytic shape, or a path to a .isw weight file."""
    if spec in SYNTH_SHAPES:
        return synth_field(spec)
    return read_isw(spec)


def _csv(*cells) -> str:
    out = []
    for c in cells:
        if isinstance(c, str):
            out.append(c)
        elif isinstance(c, (int, np.integer)):
            out.append(str(int(c)))
        else:
            out.append(f"{float(c):.9g}")
    return ",".join(out)


# ---------------------------------------------------------------------------
# extract


def cmd_extract(args) -> int:
    run = load_run_config(_read_config_text(args.config))
    field = _resolve_field(args.field)
    iso, stats = extract_iso_points(
        field,
        None,
        n_target=args.n,
        cfg=run.sampler,
        seed=args.seed,
        eps=args.eps,
        return_stats=True,
    )
    write_ply(args.out, iso.points, iso.normals)
    _, nn_cv = uniformity(iso.points)
    print(_csv(stats.residual_max, nn_cv))
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit


def cmd_fit(args) -> int:
    flags = {"iters": args.iters, "seed": args.seed}
    run = load_run_config(_read_config_text(args.config), flags)
    cfg = run.fit
    if args.baseline:
        cfg = replace(cfg, outlier_weighting=False, iso_losses=False)
    points, normals = read_ply(args.input)
    net, log = run_fit(points, normals, cfg, sampler=run.sampler)
    write_isw(args.out, net)
    if args.log:
        with open(args.log, "w", encoding="ascii", newline="\n") as fh:
            fh.write(log.to_csv())
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    pa, na = read_ply(args.a)
    pb, nb = read_ply(args.b)
    pos, nrm = chamfer(pa, pb, a_normals=na, b_normals=nb, l1=args.l1)
    print(_csv(pos, nrm, len(pa), len(pb)))
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    cloud = noisy_cloud(
        args.shape, args.n, seed=args.seed, noise=args.noise, outlier_frac=args.outliers
    )
    write_ply(args.out, cloud.points, cloud.normals)
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def _bench_eval(field, net, probes, exact_pts, exact_nrm, sampler: SamplerConfig):
    """Chamfer of data-sheet probe projections against reference samples."""
    cfg = sampler.resolved(net.domain.diagonal, len(probes))
    proj, conv = project(net, probes, cfg, eps=1e-4)
    pts, nrm = proj.points[conv], proj.normals[conv]
    on_sheet = np.abs(field.values(pts)) <= BENCH_SHEET_TOL
    pts, nrm = pts[on_sheet], nrm[on_sheet]
    return chamfer(pts, exact_pts, a_normals=nrm, b_normals=exact_nrm)


def _make_insert_hook(strategy: str, cloud_points, run: RunConfig):
    """on_iso_update callback implementing the saliency strategies."""
    if strategy in ("none", "uniform"):
        return None
    sub_rows = np.sort(
        np.random.default_rng(run.fit.seed).choice(
            len(cloud_points), size=max(64, len(cloud_points) // 4), replace=False
        )
    )
    sub_pts = cloud_points[sub_rows]
    sub_index = KnnIndex(sub_pts)

    def hook(net, iso: IsoPointSet, t: int) -> IsoPointSet:
        scfg = run.sampler.resolved(net.domain.diagonal, len(iso))
        iso_index = KnnIndex(iso.points)
        if strategy == "curvature":
            sal = curvature_metric(iso, iso_index, K=scfg.K)
        else:  # loss
            residuals = np.abs(net.values(sub_pts))
            sal = loss_metric(
                iso, sub_pts, residuals, sub_index, radius=float(np.sqrt(scfg.sigma_p))
            )
        eps = _eps_at(t, run.fit, run.sampler)
        cap = max(1, int(len(iso) * scfg.insert_cap_frac))
        return metric_insert(net, iso, sal, iso_index, scfg, eps=eps, max_new=cap)

    return hook


def cmd_bench(args) -> int:
    flags = {"iters": args.iters, "seed": args.seed}
    run = load_run_config(_read_config_text(args.config), flags)
    if args.perf:
        return _bench_perf(run)
    if args.csv is None:
        raise FormatError("--csv is required unless --perf is given")

    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    unknown = [s for s in strategies if s not in STRATEGIES]
    if unknown:
        raise FormatError(
            f"unknown strategies {unknown}; choose from {', '.join(STRATEGIES)}"
        )

    field = synth_field(args.field)
    cloud = noisy_cloud(args.field, 5000, seed=run.fit.seed)
    probes, _ = surface_samples(args.field, BENCH_PROBES, seed=BENCH_PROBE_SEED)
    exact_pts, exact_nrm = surface_samples(args.field, BENCH_REFERENCE, seed=BENCH_REF_SEED)

    rows: list[str] = ["strategy,iter,wall_seconds,chamfer_pos,chamfer_normal"]
    for strategy in strategies:
        cfg = run.fit
        if strategy == "none":
            cfg = replace(cfg, outlier_weighting=False, iso_losses=False)
        snaps: list[tuple[int, float, list, list]] = []
        t0 = time.perf_counter()

        def checkpoint(it, net):
            snaps.append(
                (
                    it,
                    time.perf_counter() - t0,
                    [w.copy() for w in net.weights],
                    [b.copy() for b in net.biases],
                )
            )

        net, _log = run_fit(
            cloud.points,
            cloud.normals,
            cfg,
            sampler=run.sampler,
            on_checkpoint=checkpoint,
            checkpoint_every=BENCH_EVERY,
            on_iso_update=_make_insert_hook(strategy, cloud.points, run),
        )
        for it, wall, ws, bs in snaps:
            for w, src in zip(net.weights, ws):
                w[...] = src
            for b, src in zip(net.biases, bs):
                b[...] = src
            pos, nrm = _bench_eval(field, net, probes, exact_pts, exact_nrm, run.sampler)
            rows.append(_csv(strategy, it, wall, pos, nrm))

    with open(args.csv, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")
    return EXIT_OK


def _bench_perf(run: RunConfig) -> int:
    """Wall-time of one warm-started 2000-point extraction vs one
    training step (printed as CSV: step_seconds,extraction_seconds,ratio)."""
    cfg = run.fit
    net = init_siren(
        width=cfg.width, hidden_layers=cfg.hidden_layers, omega=cfg.omega, seed=cfg.seed
    )
    cloud = noisy_cloud("sphere", 5000, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    adam = _AdamState.for_net(net)

    def one_step() -> None:
        rows = rng.choice(len(cloud.points), size=cfg.batch_size, replace=False)
        batch = TrainBatch(
            surface_points=cloud.points[rows],
            surface_normals=cloud.normals[rows],
            surface_rows=rows.astype(np.int64),
            off_points=net.domain.sample(cfg.batch_size, rng),
        )
        total, grads = loss_parameter_gradient(net, _data_terms(batch, cfg, None))
        adam.step(grads, cfg.learning_rate)
        adam.write_into(net)

    for _ in range(3):  # warm caches/BLAS before timing
        one_step()
    steps = []
    for _ in range(5):
        t0 = time.perf_counter()
        one_step()
        steps.append(time.perf_counter() - t0)
    step_seconds = float(np.median(steps))

    n_iso = 2000
    sampler = run.sampler.resolved(net.domain.diagonal, n_iso)
    seeds = net.domain.sample(n_iso, np.random.default_rng(cfg.seed + 1))
    proj, conv = project(net, seeds, sampler, eps=1e-4)
    warm = IsoPointSet(
        points=proj.points[conv],
        normals=proj.normals[conv],
        residual_bound=proj.residual_bound,
    )
    t0 = time.perf_counter()
    extract_iso_points(net, warm, n_target=n_iso, cfg=run.sampler, seed=cfg.seed, eps=1e-4)
    extraction_seconds = time.perf_counter() - t0

    print(_csv(step_seconds, extraction_seconds, extraction_seconds / step_seconds))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isopoints",
        description="Iso-point extraction and regularized implicit-surface fitting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="sample iso-points from a field, write PLY")
    p.add_argument("--field", required=True,
                   help=f"{'|'.join(SYNTH_SHAPES)} or a .isw weight file")
    p.add_argument("--n", type=int, required=True, help="number of iso-points")
    p.add_argument("--out", required=True, help="output PLY path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=None, help="projection tolerance")
    p.add_argument("--config", default=None, help="key=value config file")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fit", help="fit a sine network to an oriented cloud")
    p.add_argument("--input", required=True, help="input cloud PLY")
    p.add_argument("--out", required=True, help="output .isw weight file")
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--baseline", action="store_true",
                   help="disable iso-point losses and outlier weighting")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--log", default=None, help="training-log CSV path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="two-way chamfer between two PLY clouds")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--l1", action="store_true", help="L1 distances instead of squared")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="sampling-strategy benchmark / perf probe")
    p.add_argument("--field", choices=sorted(SYNTH_SHAPES), default="torus")
    p.add_argument("--strategies", default="none,uniform,curvature,loss")
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--csv", default=None, help="output CSV path")
    p.add_argument("--config", default=None)
    p.add_argument("--perf", action="store_true",
                   help="print extraction-vs-training-step timing and exit")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="generate a seeded noisy test cloud")
    p.add_argument("--shape", choices=sorted(SYNTH_SHAPES), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.01,
                   help="surface noise as a fraction of the domain diagonal")
    p.add_argument("--outliers", type=float, default=0.05,
                   help="outlier fraction of n")
    p.add_argument("--out", required=True, help="output PLY path")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ExtractionFailed as exc:
        print(f"isopoints: extraction failed: {exc}", file=sys.stderr)
        return EXIT_EXTRACTION
    except NonFiniteLoss as exc:
        print(f"isopoints: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except (FormatError, OSError) as exc:
        print(f"isopoints: {exc}", file=sys.stderr)
        return EXIT_IO
    except (EmptyInput, InsufficientPoints, MissingNormals, ValueError) as exc:
        print(f"isopoints: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IsoPointsError as exc:  # remaining package errors are input-driven
        print(f"isopoints: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
