"""Iso-point extraction from implicit surfaces and regularized SDF fitting."""

from .config import FitConfig, RunConfig, SamplerConfig, load_run_config
from .errors import (
    DegenerateNeighborhood,
    EmptyInput,
    ExtractionFailed,
    FormatError,
    InsufficientPoints,
    IsoPointsError,
    MissingNormals,
    NonFiniteLoss,
    SingularGradient,
    UnsupportedLoss,
)
from .estimator import SirenSDF
from .extraction import (
    ExtractionStats,
    IsoPointSet,
    extract_iso_points,
    project,
    resample,
    upsample,
)
from .fields import (
    BoxField,
    FieldDomain,
    ImplicitField,
    SphereField,
    TorusField,
    make_field,
)
from .fitting import FitLog, LogRow, fit, outlier_weights, psi
from .io import read_isw, read_ply, write_isw, write_ply
from .metrics import MetricsReport, chamfer, eikonal_residual, uniformity
from .saliency import SaliencyField, curvature_metric, loss_metric, metric_insert
from .siren import SirenNetwork, forward_with_jacobian, init_siren, loss_parameter_gradient
from .spatial import KnnIndex, build_index, estimate_normals, knn, pca_normal
from .synth import NoisyCloud, noisy_cloud, surface_samples, synth_field

__version__ = "0.1.0"

__all__ = [
    "BoxField",
    "DegenerateNeighborhood",
    "EmptyInput",
    "ExtractionFailed",
    "ExtractionStats",
    "FieldDomain",
    "FitConfig",
    "FitLog",
    "FormatError",
    "ImplicitField",
    "InsufficientPoints",
    "IsoPointSet",
    "IsoPointsError",
    "KnnIndex",
    "LogRow",
    "MetricsReport",
    "MissingNormals",
    "NoisyCloud",
    "NonFiniteLoss",
    "RunConfig",
    "SaliencyField",
    "SamplerConfig",
    "SingularGradient",
    "SirenNetwork",
    "SirenSDF",
    "SphereField",
    "TorusField",
    "UnsupportedLoss",
    "build_index",
    "chamfer",
    "curvature_metric",
    "eikonal_residual",
    "estimate_normals",
    "extract_iso_points",
    "fit",
    "forward_with_jacobian",
    "init_siren",
    "knn",
    "load_run_config",
    "loss_metric",
    "loss_parameter_gradient",
    "make_field",
    "metric_insert",
    "noisy_cloud",
    "outlier_weights",
    "pca_normal",
    "project",
    "psi",
    "read_isw",
    "read_ply",
    "resample",
    "surface_samples",
    "synth_field",
    "uniformity",
    "upsample",
    "write_isw",
    "write_ply",
]
