"""Sine-activated MLP field with exact first and mixed derivatives.

The network is a fixed-architecture MLP: affine layers with sin(omega*z)
activations on all but the last (linear) layer, mapping R^3 -> R.  Two
differentiation passes are provided:

* a forward pass that carries input tangents alongside values, giving the
  exact input Jacobian J = df/dp for every batch point, and
* a reverse pass over that augmented forward, giving exact parameter
  gradients of losses that depend on values AND input Jacobians (the
  mixed d^2 f / dtheta dp terms fall out of the recurrences, no tape of
  tapes needed).  Input dimension 3 keeps the tangent load at 3 columns.

Gradient accumulation walks layers in a fixed order, so results are
bit-reproducible for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import numpy.typing as npt

from .errors import MissingNormals, UnsupportedLoss
from .fields import FieldDomain, ImplicitField

_F = npt.NDArray[np.floating]

#: Jacobian norms below this are treated as zero for guarded losses.
_NORM_EPS = 1e-12


@dataclass
class SirenNetwork(ImplicitField):
    """Parameters of the sine MLP; immutable by convention after init.

    weights[l] has shape (out, in); all layers but the last apply
    sin(omegas[l] * z).  The last entry of ``omegas`` is carried for
    serialization symmetry but unused by the math.
    """

    weights: list[_F]
    biases: list[_F]
    omegas: list[float]
    domain: FieldDomain = dc_field(default_factory=FieldDomain)

    def __post_init__(self) -> None:
        dims_ok = all(
            w.shape[0] == b.shape[0] for w, b in zip(self.weights, self.biases)
        ) and all(
            self.weights[l + 1].shape[1] == self.weights[l].shape[0]
            for l in range(len(self.weights) - 1)
        )
        if not dims_ok or not self.weights or len(self.weights) != len(self.biases):
            raise ValueError("inconsistent layer shapes")
        if len(self.omegas) != len(self.weights) or any(o <= 0 for o in self.omegas):
            raise ValueError("need one positive omega per layer")

    # -- introspection ----------------------------------------------------

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def width(self) -> int:
        return self.weights[0].shape[0]

    @property
    def dtype(self) -> np.dtype:
        return self.weights[0].dtype

    def astype(self, dtype) -> "SirenNetwork":
        return SirenNetwork(
            weights=[w.astype(dtype) for w in self.weights],
            biases=[b.astype(dtype) for b in self.biases],
            omegas=list(self.omegas),
            domain=self.domain,
        )

    def parameters(self) -> list[_F]:
        out: list[_F] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    # -- field interface ---------------------------------------------------

    def values(self, pts: npt.ArrayLike) -> _F:
        x = np.asarray(pts, dtype=self.dtype).reshape(-1, 3)
        last = self.n_layers - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = x @ w.T + b
            x = np.sin(self.omegas[l] * z) if l < last else z
        return x[:, 0].astype(np.float64)

    def jacobians(self, pts: npt.ArrayLike) -> _F:
        return forward_with_jacobian(self, pts).input_jacobians

    def values_and_jacobians(self, pts: npt.ArrayLike) -> tuple[_F, _F]:
        dual = forward_with_jacobian(self, pts)
        return dual.values, dual.input_jacobians


def init_siren(
    width: int = 256,
    hidden_layers: int = 3,
    omega: float = 30.0,
    seed: int = 0,
    dtype=np.float32,
    domain: FieldDomain | None = None,
) -> SirenNetwork:
    """Deterministically initialized sine MLP.

    First layer weights ~ U(-1/3, 1/3) (1/fan_in for 3D input), deeper
    layers ~ U(+-sqrt(6/fan_in)/omega), biases ~ U(+-1/sqrt(fan_in)).
    Draw order is layer by layer, weights then bias.
    """
    if width < 1 or hidden_layers < 1:
        raise ValueError("width and hidden_layers must be >= 1")
    rng = np.random.default_rng(seed)
    dims = [3] + [width] * hidden_layers + [1]
    weights, biases, omegas = [], [], []
    for l, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        w_bound = 1.0 / fan_in if l == 0 else float(np.sqrt(6.0 / fan_in)) / omega
        b_bound = 1.0 / float(np.sqrt(fan_in))
        weights.append(rng.uniform(-w_bound, w_bound, size=(fan_out, fan_in)).astype(dtype))
        biases.append(rng.uniform(-b_bound, b_bound, size=fan_out).astype(dtype))
        omegas.append(omega if l < len(dims) - 2 else 1.0)
    return SirenNetwork(weights, biases, omegas, domain or FieldDomain())


@dataclass
class DualBatch:
    """Values + input Jacobians of one forward pass, with the per-layer
    intermediates needed to run a reverse pass over parameters."""

    values: _F           # (n,)
    input_jacobians: _F  # (n, 3)
    _layers: list[tuple]  # per layer: (x_in, T_in, trig_or_None, U)


def forward_with_jacobian(net: SirenNetwork, batch: npt.ArrayLike) -> DualBatch:
    """Evaluate values and exact input Jacobians for a point batch."""
    x = np.asarray(batch, dtype=net.dtype).reshape(-1, 3)
    n = len(x)
    if n == 0:
        raise ValueError("empty batch")
    T = np.broadcast_to(np.eye(3, dtype=net.dtype), (n, 3, 3))
    last = net.n_layers - 1
    layers = []
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = x @ w.T + b
        U = np.einsum("npi,oi->npo", T, w)
        if l < last:
            omega = net.omegas[l]
            wz = omega * z
            c, s = np.cos(wz), np.sin(wz)
            layers.append((x, T, (c, s), U))
            x = s
            T = omega * c[:, None, :] * U
        else:
            layers.append((x, T, None, U))
            x = z
            T = U
    return DualBatch(
        values=x[:, 0].astype(np.float64),
        input_jacobians=T[:, :, 0].astype(np.float64),
        _layers=layers,
    )


def backward(
    net: SirenNetwork, dual: DualBatch, d_values: _F, d_jacobians: _F
) -> list[tuple[_F, _F]]:
    """Parameter gradients of sum(d_values*f + d_jacobians.J) at ``dual``.

    Returns one (dW, db) pair per layer, in layer order.
    """
    n = len(dual.values)
    dx = np.zeros((n, 1), dtype=net.dtype)
    dx[:, 0] = d_values
    dT = np.zeros((n, 3, 1), dtype=net.dtype)
    dT[:, :, 0] = d_jacobians
    grads: list[tuple[_F, _F]] = [None] * net.n_layers  # type: ignore[list-item]
    for l in range(net.n_layers - 1, -1, -1):
        x_in, T_in, trig, U = dual._layers[l]
        w = net.weights[l]
        if trig is not None:
            c, s = trig
            omega = net.omegas[l]
            dz = omega * c * dx - omega**2 * s * np.einsum("npo,npo->no", dT, U)
            dU = omega * c[:, None, :] * dT
        else:
            dz, dU = dx, dT
        dw = dz.T @ x_in + np.einsum("npo,npi->oi", dU, T_in)
        db = dz.sum(axis=0)
        grads[l] = (dw, db)
        if l > 0:
            dx = dz @ w
            dT = np.einsum("npo,oi->npi", dU, w)
    return grads


# -- loss primitives --------------------------------------------------------

SUPPORTED_LOSSES = (
    "abs_value",        # |f|
    "exp_abs_value",    # exp(-alpha |f|)
    "normal_cosine",    # 1 - cos(J, n)
    "eikonal",          # |1 - ||J|||
    "normal_abs_cosine",  # 1 - |cos(J, n)|
)


@dataclass
class LossTerm:
    """One weighted mean-loss term over a point batch.

    ``point_weights`` scales each point's contribution (outlier weights);
    ``normals`` is required by the cosine kinds; ``alpha`` only affects
    exp_abs_value.
    """

    kind: str
    points: _F
    weight: float = 1.0
    normals: _F | None = None
    point_weights: _F | None = None
    alpha: float = 100.0


def _per_point(kind: str, f: _F, J: _F, normals: _F | None, alpha: float):
    """Per-point loss, d/df, d/dJ for one primitive.

    Kink conventions (deterministic): sign(0)=0 for |.| terms; a
    zero-norm Jacobian contributes the maximal loss 1 with zero gradient
    to the cosine and eikonal kinds.
    """
    n = len(f)
    dv = np.zeros(n)
    dj = np.zeros((n, 3))
    if kind == "abs_value":
        return np.abs(f), np.sign(f), dj
    if kind == "exp_abs_value":
        e = np.exp(-alpha * np.abs(f))
        return e, -alpha * np.sign(f) * e, dj
    r = np.linalg.norm(J, axis=1)
    ok = r > _NORM_EPS
    if kind == "eikonal":
        loss = np.where(ok, np.abs(1.0 - r), 1.0)
        sgn = np.sign(1.0 - r)
        dj[ok] = (-sgn[ok] / r[ok])[:, None] * J[ok]
        return loss, dv, dj
    if normals is None:
        raise MissingNormals(f"{kind} loss needs per-point normals")
    nor = np.asarray(normals, dtype=np.float64).reshape(len(f), 3)
    dot = np.einsum("ni,ni->n", J, nor)
    cos = np.where(ok, dot / np.where(ok, r, 1.0), 0.0)
    # d(cos)/dJ = n/r - (J.n) J / r^3
    dcos = np.where(ok, 1.0 / np.where(ok, r, 1.0), 0.0)[:, None] * nor - np.where(
        ok, dot / np.where(ok, r, 1.0) ** 3, 0.0
    )[:, None] * J
    if kind == "normal_cosine":
        return np.where(ok, 1.0 - cos, 1.0), dv, -dcos
    if kind == "normal_abs_cosine":
        return np.where(ok, 1.0 - np.abs(cos), 1.0), dv, -np.sign(cos)[:, None] * dcos
    raise UnsupportedLoss(f"unknown loss primitive {kind!r}")


def loss_parameter_gradient(
    net: SirenNetwork, terms: list[LossTerm]
) -> tuple[float, list[tuple[_F, _F]]]:
    """Scalar loss and its exact gradient w.r.t. every parameter.

    The loss is sum over terms of weight * mean_i(v_i * l_i); each term
    runs its own forward/backward and contributions accumulate in term
    order.
    """
    grads = [
        (np.zeros_like(w, dtype=np.float64), np.zeros_like(b, dtype=np.float64))
        for w, b in zip(net.weights, net.biases)
    ]
    total = 0.0
    for term in terms:
        if term.kind not in SUPPORTED_LOSSES:
            raise UnsupportedLoss(f"unknown loss primitive {term.kind!r}")
        dual = forward_with_jacobian(net, term.points)
        losses, dv, dj = _per_point(
            term.kind, dual.values, dual.input_jacobians, term.normals, term.alpha
        )
        v = np.ones(len(losses)) if term.point_weights is None else np.asarray(
            term.point_weights, dtype=np.float64
        )
        scale = term.weight / len(losses)
        total += scale * float(np.dot(v, losses))
        g = backward(net, dual, scale * v * dv, scale * v[:, None] * dj)
        for acc, (dw, db) in zip(grads, g):
            acc[0][...] += dw
            acc[1][...] += db
    return total, grads


def loss_values(net, terms: list[LossTerm]) -> list[float]:
    """Per-term values weight*mean_i(v_i*l_i) without any backward pass
    (reporting path; same per-point math as loss_parameter_gradient).
    Accepts any implicit field, not just a layered net — the evaluation
    needs only values and input Jacobians, which lets exact-SDF oracles
    stand in when auditing the loss formulas."""
    out = []
    for term in terms:
        if term.kind not in SUPPORTED_LOSSES:
            raise UnsupportedLoss(f"unknown loss primitive {term.kind!r}")
        if isinstance(net, SirenNetwork):
            dual = forward_with_jacobian(net, term.points)
            values, jacobians = dual.values, dual.input_jacobians
        else:
            values, jacobians = net.values_and_jacobians(term.points)
        losses, _, _ = _per_point(
            term.kind, values, jacobians, term.normals, term.alpha
        )
        v = np.ones(len(losses)) if term.point_weights is None else np.asarray(
            term.point_weights, dtype=np.float64
        )
        out.append(term.weight * float(np.dot(v, losses)) / len(losses))
    return out
