"""File formats: ASCII point-cloud PLY and binary weight (.isw) files."""

import struct

import numpy as np
import pytest

from isopoints.errors import FormatError
from isopoints.io import read_isw, read_ply, write_isw, write_ply
from isopoints.siren import init_siren
from isopoints.synth import surface_samples


@pytest.fixture
def cloud():
    pts, nrm = surface_samples("sphere", 200, seed=0)
    return pts, nrm


# -- PLY -------------------------------------------------------------------------


def test_ply_roundtrip(tmp_path, cloud):
    pts, nrm = cloud
    path = tmp_path / "c.ply"
    write_ply(path, pts, nrm)
    back_pts, back_nrm = read_ply(path)
    np.testing.assert_allclose(back_pts, pts, atol=1e-9)
    np.testing.assert_allclose(back_nrm, nrm, atol=1e-9)
    assert back_pts.dtype == np.float64


def test_ply_write_is_deterministic(tmp_path, cloud):
    pts, nrm = cloud
    a, b = tmp_path / "a.ply", tmp_path / "b.ply"
    write_ply(a, pts, nrm)
    write_ply(b, pts, nrm)
    assert a.read_bytes() == b.read_bytes()


def test_ply_header_shape(tmp_path, cloud):
    pts, nrm = cloud
    path = tmp_path / "c.ply"
    write_ply(path, pts, nrm)
    head = path.read_text().splitlines()[:10]
    assert head[0] == "ply"
    assert head[1] == "format ascii 1.0"
    assert head[2] == "element vertex 200"
    assert head[3:9] == [
        "property float x",
        "property float y",
        "property float z",
        "property float nx",
        "property float ny",
        "property float nz",
    ]
    assert head[9] == "end_header"


def test_ply_empty_cloud_roundtrip(tmp_path):
    path = tmp_path / "empty.ply"
    write_ply(path, np.empty((0, 3)), np.empty((0, 3)))
    pts, nrm = read_ply(path)
    assert pts.shape == (0, 3) and nrm.shape == (0, 3)


def test_ply_write_validates_shape(tmp_path):
    with pytest.raises(ValueError):
        write_ply(tmp_path / "x.ply", np.zeros((3, 2)), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        write_ply(tmp_path / "x.ply", np.zeros((3, 3)), np.zeros((2, 3)))


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda s: s.replace("ply\n", "plx\n", 1), "magic"),
        (lambda s: s.replace("format ascii 1.0", "format binary_little_endian 1.0"), "ascii"),
        (lambda s: s.replace("element vertex 200", "element vertex abc"), "count"),
        (lambda s: s.replace("element vertex 200", "element vertex 199"), "rows"),
        (lambda s: s.replace("property float nz", "property float w"), "properties"),
        (lambda s: s + "1 2 3 4 5 6\n", "rows"),
        (lambda s: s.replace("end_header\n", "end_header\n1 2 3 4 5\n", 1), "values"),
        (lambda s: s.replace("end_header\n", "end_header\nx y z a b c\n", 1), "numeric"),
    ],
)
def test_ply_malformed_rejected(tmp_path, cloud, mutate, message):
    pts, nrm = cloud
    path = tmp_path / "c.ply"
    write_ply(path, pts, nrm)
    (tmp_path / "bad.ply").write_text(mutate(path.read_text()))
    with pytest.raises(FormatError):
        read_ply(tmp_path / "bad.ply")


def test_ply_truncated_header(tmp_path):
    (tmp_path / "short.ply").write_text("ply\nformat ascii 1.0\n")
    with pytest.raises(FormatError):
        read_ply(tmp_path / "short.ply")


def test_ply_comments_skipped(tmp_path, cloud):
    pts, nrm = cloud
    path = tmp_path / "c.ply"
    write_ply(path, pts, nrm)
    text = path.read_text().replace(
        "element vertex", "comment generated for tests\nelement vertex"
    )
    (tmp_path / "c2.ply").write_text(text)
    back_pts, _ = read_ply(tmp_path / "c2.ply")
    np.testing.assert_allclose(back_pts, pts, atol=1e-9)


# -- .isw ------------------------------------------------------------------------


def test_isw_roundtrip_bitwise(tmp_path):
    net = init_siren(16, 2, 30.0, seed=1)
    path = tmp_path / "w.isw"
    write_isw(path, net)
    back = read_isw(path)
    assert back.n_layers == net.n_layers
    for wa, wb in zip(net.weights, back.weights):
        np.testing.assert_array_equal(wa, wb)
    for ba, bb in zip(net.biases, back.biases):
        np.testing.assert_array_equal(ba, bb)
    assert back.omegas == net.omegas
    # and the rewrite reproduces the file byte for byte
    write_isw(tmp_path / "w2.isw", back)
    assert (tmp_path / "w.isw").read_bytes() == (tmp_path / "w2.isw").read_bytes()


def test_isw_values_match_after_reload(tmp_path):
    net = init_siren(32, 3, 30.0, seed=2)
    path = tmp_path / "w.isw"
    write_isw(path, net)
    back = read_isw(path)
    rng = np.random.default_rng(3)
    probes = rng.uniform(-1, 1, (100, 3))
    np.testing.assert_array_equal(back.values(probes), net.values(probes))


def test_isw_header_layout(tmp_path):
    net = init_siren(4, 1, 25.0, seed=4)
    path = tmp_path / "w.isw"
    write_isw(path, net)
    blob = path.read_bytes()
    assert blob[:4] == b"ISOW"
    version, layer_count = struct.unpack_from("<II", blob, 4)
    assert version == 1
    assert layer_count == 2  # 3 -> width, width -> 1
    in_dim, out_dim, omega = struct.unpack_from("<IIf", blob, 12)
    assert (in_dim, out_dim) == (3, 4)
    assert omega == pytest.approx(25.0)


def test_isw_bad_magic(tmp_path):
    (tmp_path / "bad.isw").write_bytes(b"WOSI" + b"\x00" * 16)
    with pytest.raises(FormatError):
        read_isw(tmp_path / "bad.isw")


def test_isw_bad_version(tmp_path):
    net = init_siren(4, 1, 30.0, seed=5)
    path = tmp_path / "w.isw"
    write_isw(path, net)
    blob = bytearray(path.read_bytes())
    struct.pack_into("<I", blob, 4, 2)
    (tmp_path / "v2.isw").write_bytes(bytes(blob))
    with pytest.raises(FormatError):
        read_isw(tmp_path / "v2.isw")


def test_isw_truncation(tmp_path):
    net = init_siren(8, 2, 30.0, seed=6)
    path = tmp_path / "w.isw"
    write_isw(path, net)
    blob = path.read_bytes()
    for cut in (3, 7, 11, len(blob) // 2, len(blob) - 1):
        (tmp_path / "cut.isw").write_bytes(blob[:cut])
        with pytest.raises(FormatError):
            read_isw(tmp_path / "cut.isw")


def test_isw_trailing_bytes(tmp_path):
    net = init_siren(4, 1, 30.0, seed=7)
    path = tmp_path / "w.isw"
    write_isw(path, net)
    (tmp_path / "pad.isw").write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(FormatError):
        read_isw(tmp_path / "pad.isw")


def _isw_blob(layers):
    """Assemble a raw .isw byte string from (in, out, omega, w, b) tuples."""
    chunks = [b"ISOW", struct.pack("<II", 1, len(layers))]
    for in_dim, out_dim, omega, w, b in layers:
        chunks.append(struct.pack("<IIf", in_dim, out_dim, omega))
        chunks.append(np.asarray(w, dtype="<f4").tobytes())
        chunks.append(np.asarray(b, dtype="<f4").tobytes())
    return b"".join(chunks)


def test_isw_dimension_chain_validated(tmp_path):
    # second layer expects 5 inputs but the first produces 4
    blob = _isw_blob(
        [
            (3, 4, 30.0, np.zeros((4, 3)), np.zeros(4)),
            (5, 1, 30.0, np.zeros((1, 5)), np.zeros(1)),
        ]
    )
    (tmp_path / "chain.isw").write_bytes(blob)
    with pytest.raises(FormatError):
        read_isw(tmp_path / "chain.isw")


def test_isw_input_output_dims_validated(tmp_path):
    blob = _isw_blob([(2, 1, 30.0, np.zeros((1, 2)), np.zeros(1))])
    (tmp_path / "in2.isw").write_bytes(blob)
    with pytest.raises(FormatError):
        read_isw(tmp_path / "in2.isw")

    blob = _isw_blob([(3, 2, 30.0, np.zeros((2, 3)), np.zeros(2))])
    (tmp_path / "out2.isw").write_bytes(blob)
    with pytest.raises(FormatError):
        read_isw(tmp_path / "out2.isw")


def test_isw_nonpositive_omega_rejected(tmp_path):
    blob = _isw_blob([(3, 1, -1.0, np.zeros((1, 3)), np.zeros(1))])
    (tmp_path / "om.isw").write_bytes(blob)
    with pytest.raises(FormatError):
        read_isw(tmp_path / "om.isw")


def test_isw_implausible_layer_count(tmp_path):
    (tmp_path / "big.isw").write_bytes(b"ISOW" + struct.pack("<II", 1, 1 << 30))
    with pytest.raises(FormatError):
        read_isw(tmp_path / "big.isw")
