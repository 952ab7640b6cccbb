"""Point-cloud (ASCII PLY) and network-weight (.isw) file formats.

Both formats are deliberately minimal and bit-stable: PLY rows carry 9
significant digits so a write/read cycle reproduces coordinates to
1e-9, and .isw stores the raw little-endian float32 parameter payload
so a reload is bitwise identical.
"""

from __future__ import annotations

import struct

import numpy as np
import numpy.typing as npt

from .errors import FormatError
from .fields import FieldDomain
from .siren import SirenNetwork

_F = npt.NDArray[np.floating]

PLY_PROPERTIES = ("x", "y", "z", "nx", "ny", "nz")
ISW_MAGIC = b"ISOW"
ISW_VERSION = 1
#: Upper bounds that keep a corrupt header from driving huge allocations.
_MAX_LAYERS = 1024
_MAX_DIM = 1 << 20


def write_ply(path: str, points: npt.ArrayLike, normals: npt.ArrayLike) -> None:
    """ASCII PLY with one vertex element: x y z nx ny nz, 9 significant
    digits per value."""
    pts = np.asarray(points, dtype=np.float64)
    nrm = np.asarray(normals, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape != nrm.shape:
        raise ValueError("points and normals must both be (n, 3)")
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(pts)}",
    ]
    lines += [f"property float {name}" for name in PLY_PROPERTIES]
    lines.append("end_header")
    for p, n in zip(pts, nrm):
        lines.append(
            f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g} {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}"
        )
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_ply(path: str) -> tuple[_F, _F]:
    """Read a PLY written by write_ply (or equivalent): returns
    (points, normals), each (n, 3) float64.  FormatError on anything
    that does not match the declared layout."""
    with open(path, "r", encoding="ascii", errors="strict") as fh:
        raw = fh.read()
    lines = raw.splitlines()
    pos = 0

    def take() -> str:
        nonlocal pos
        if pos >= len(lines):
            raise FormatError("unexpected end of PLY header")
        line = lines[pos]
        pos += 1
        return line

    if take().strip() != "ply":
        raise FormatError("not a PLY file (missing 'ply' magic line)")
    if take().strip() != "format ascii 1.0":
        raise FormatError("only 'format ascii 1.0' is supported")

    n_vertices: int | None = None
    declared: list[str] = []
    while True:
        line = take().strip()
        if line.startswith("comment"):
            continue
        if line == "end_header":
            break
        fields = line.split()
        if fields[:2] == ["element", "vertex"] and len(fields) == 3:
            if n_vertices is not None:
                raise FormatError("duplicate vertex element")
            try:
                n_vertices = int(fields[2])
            except ValueError as exc:
                raise FormatError(f"bad vertex count {fields[2]!r}") from exc
            if n_vertices < 0:
                raise FormatError("negative vertex count")
        elif fields[:1] == ["element"]:
            raise FormatError(f"unsupported element {line!r}")
        elif fields[:2] == ["property", "float"] and len(fields) == 3:
            declared.append(fields[2])
        else:
            raise FormatError(f"unsupported header line {line!r}")
    if n_vertices is None:
        raise FormatError("missing 'element vertex' declaration")
    if tuple(declared) != PLY_PROPERTIES:
        raise FormatError(
            f"vertex properties must be {' '.join(PLY_PROPERTIES)}, got {declared}"
        )

    body = lines[pos:]
    rows = [line for line in body if line.strip()]
    if len(rows) != n_vertices or len(body) > len(rows) + 1:
        raise FormatError(
            f"expected {n_vertices} vertex rows, found {len(rows)}"
        )
    data = np.empty((n_vertices, 6), dtype=np.float64)
    for i, line in enumerate(rows):
        cells = line.split()
        if len(cells) != 6:
            raise FormatError(f"vertex row {i} has {len(cells)} values, expected 6")
        try:
            data[i] = [float(c) for c in cells]
        except ValueError as exc:
            raise FormatError(f"vertex row {i} is not numeric: {line!r}") from exc
    return data[:, :3].copy(), data[:, 3:].copy()


def write_isw(path: str, net: SirenNetwork) -> None:
    """Binary weight file: magic 'ISOW', little-endian u32 version=1,
    u32 layer count, then per layer u32 in_dim, u32 out_dim, f32 omega,
    out*in f32 weights row-major, out f32 biases."""
    chunks = [ISW_MAGIC, struct.pack("<II", ISW_VERSION, net.n_layers)]
    for w, b, omega in zip(net.weights, net.biases, net.omegas):
        out_dim, in_dim = w.shape
        chunks.append(struct.pack("<IIf", in_dim, out_dim, float(omega)))
        chunks.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        chunks.append(np.asarray(b, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def read_isw(path: str, domain: FieldDomain | None = None) -> SirenNetwork:
    """Load a network saved by write_isw.  FormatError on bad magic,
    version, truncation, trailing bytes, or an inconsistent layer
    chain (input must be 3-D, output 1-D)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    off = 0

    def unpack(fmt: str):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(blob):
            raise FormatError("truncated weight file")
        vals = struct.unpack_from(fmt, blob, off)
        off += size
        return vals

    if blob[:4] != ISW_MAGIC:
        raise FormatError("not a weight file (bad magic)")
    off = 4
    version, n_layers = unpack("<II")
    if version != ISW_VERSION:
        raise FormatError(f"unsupported weight file version {version}")
    if not 1 <= n_layers <= _MAX_LAYERS:
        raise FormatError(f"implausible layer count {n_layers}")

    weights: list[_F] = []
    biases: list[_F] = []
    omegas: list[float] = []
    for l in range(n_layers):
        in_dim, out_dim, omega = unpack("<IIf")
        if not (1 <= in_dim <= _MAX_DIM and 1 <= out_dim <= _MAX_DIM):
            raise FormatError(f"implausible layer {l} dims {in_dim}x{out_dim}")
        if not np.isfinite(omega) or omega <= 0:
            raise FormatError(f"layer {l} omega must be positive and finite")
        n_w, n_b = in_dim * out_dim, out_dim
        need = 4 * (n_w + n_b)
        if off + need > len(blob):
            raise FormatError("truncated weight file")
        w = np.frombuffer(blob, dtype="<f4", count=n_w, offset=off)
        off += 4 * n_w
        b = np.frombuffer(blob, dtype="<f4", count=n_b, offset=off)
        off += 4 * n_b
        weights.append(w.reshape(out_dim, in_dim).astype(np.float32))
        biases.append(b.astype(np.float32))
        omegas.append(float(omega))
    if off != len(blob):
        raise FormatError(f"{len(blob) - off} trailing bytes after last layer")
    if weights[0].shape[1] != 3:
        raise FormatError("first layer must take 3-D input")
    if weights[-1].shape[0] != 1:
        raise FormatError("last layer must produce a scalar")
    for l in range(n_layers - 1):
        if weights[l + 1].shape[1] != weights[l].shape[0]:
            raise FormatError(f"layer {l + 1} input does not match layer {l} output")
    return SirenNetwork(
        weights=weights,
        biases=biases,
        omegas=omegas,
        domain=domain or FieldDomain(),
    )
