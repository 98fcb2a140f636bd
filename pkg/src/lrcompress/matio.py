"""Binary matrix files and network manifests.

Matrix file layout (all integers and floats little-endian):

    offset  0  magic   4 bytes  "DMAT"
    offset  4  version u32      1
    offset  8  dtype   u32      0 = float32, 1 = float64
    offset 12  rows    u64
    offset 20  cols    u64
    offset 28  payload rows*cols scalars, row-major

float32 payloads are promoted to float64 on load. Every malformed-file
condition raises its own MatrixFormatError subclass carrying the byte
offset of the problem.

A network manifest is a JSON document listing, per layer, the weight
file, the bias file (a 1 x m matrix), and the activation applied after
the layer, plus optional splice provenance records. Paths are relative
to the manifest's directory.

Activation batches follow the n x p convention: one column per sample.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .compress import FactorPair, LinearLayer
from .errors import DimensionError, NumericalError
from .network import Activation, Network

__all__ = [
    "BadDtypeError",
    "BadMagicError",
    "BadVersionError",
    "ManifestError",
    "MatrixFormatError",
    "NonFiniteValueError",
    "SpliceRecord",
    "TrailingDataError",
    "TruncatedError",
    "iter_matrix_blocks",
    "load_network",
    "read_manifest",
    "read_matrix",
    "save_network",
    "write_manifest",
    "write_matrix",
]

MAGIC = b"DMAT"
VERSION = 1
DTYPE_F32 = 0
DTYPE_F64 = 1
_HEADER = struct.Struct("<4sIIQQ")
HEADER_SIZE = _HEADER.size  # 28 bytes


class MatrixFormatError(ValueError):
    """A matrix file violates the format; offset points at the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class BadMagicError(MatrixFormatError):
    pass


class BadVersionError(MatrixFormatError):
    pass


class BadDtypeError(MatrixFormatError):
    pass


class TruncatedError(MatrixFormatError):
    pass


class TrailingDataError(MatrixFormatError):
    pass


class NonFiniteValueError(MatrixFormatError):
    pass


class ManifestError(ValueError):
    """A network manifest is malformed or references inconsistent files."""


def write_matrix(path, matrix, dtype: str = "f64") -> None:
    """Write a 2-D array; dtype "f64" (default) or "f32"."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"matrix files hold 2-D data, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise NumericalError("refusing to write non-finite values")
    if dtype == "f64":
        code, payload = DTYPE_F64, np.ascontiguousarray(m, dtype="<f8")
    elif dtype == "f32":
        code, payload = DTYPE_F32, np.ascontiguousarray(m, dtype="<f4")
    else:
        raise ValueError(f"unknown dtype {dtype!r}, expected 'f32' or 'f64'")
    header = _HEADER.pack(MAGIC, VERSION, code, m.shape[0], m.shape[1])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes(order="C"))


def _parse_header(header: bytes, file_size: int, path) -> tuple[int, int, np.dtype]:
    if file_size < HEADER_SIZE:
        raise TruncatedError(
            f"{path}: header needs {HEADER_SIZE} bytes, file has {file_size}",
            offset=file_size,
        )
    magic, version, code, rows, cols = _HEADER.unpack_from(header, 0)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise BadVersionError(f"{path}: unsupported version {version}", offset=4)
    if code not in (DTYPE_F32, DTYPE_F64):
        raise BadDtypeError(f"{path}: unknown dtype code {code}", offset=8)
    if rows == 0 or cols == 0:
        raise MatrixFormatError(f"{path}: zero dimension {rows}x{cols}", offset=12)
    dtype = np.dtype("<f4") if code == DTYPE_F32 else np.dtype("<f8")
    expected = HEADER_SIZE + rows * cols * dtype.itemsize
    if file_size < expected:
        raise TruncatedError(
            f"{path}: payload ends early, expected {expected} bytes, file has {file_size}",
            offset=file_size,
        )
    if file_size > expected:
        raise TrailingDataError(
            f"{path}: {file_size - expected} bytes of trailing data", offset=expected
        )
    return rows, cols, dtype


def _check_payload_finite(flat: np.ndarray, itemsize: int, path) -> None:
    finite = np.isfinite(flat)
    if not finite.all():
        idx = int(np.argmin(finite))
        raise NonFiniteValueError(
            f"{path}: non-finite value {flat[idx]!r} at element {idx}",
            offset=HEADER_SIZE + idx * itemsize,
        )


def read_matrix(path) -> np.ndarray:
    """Read a matrix file into a float64 row-major array."""
    data = Path(path).read_bytes()
    rows, cols, dtype = _parse_header(data[:HEADER_SIZE], len(data), path)
    flat = np.frombuffer(data, dtype=dtype, count=rows * cols, offset=HEADER_SIZE)
    _check_payload_finite(flat, dtype.itemsize, path)
    return np.array(flat, dtype=np.float64).reshape(rows, cols)


def iter_matrix_blocks(path, block_cols: int = 4096) -> Iterator[np.ndarray]:
    """Yield consecutive column blocks of a matrix file without loading it whole.

    Row-major storage makes column access strided, so blocks are pulled
    through a memory map; only the touched pages are read. Sums over
    samples (Gram matrices, means, per-unit maxima) need exactly one pass
    over these blocks.
    """
    if block_cols < 1:
        raise ValueError(f"block_cols must be positive, got {block_cols}")
    path = Path(path)
    size = path.stat().st_size
    with open(path, "rb") as fh:
        header = fh.read(HEADER_SIZE)
    rows, cols, dtype = _parse_header(header, size, path)
    mm = np.memmap(path, dtype=dtype, mode="r", offset=HEADER_SIZE, shape=(rows, cols))
    for start in range(0, cols, block_cols):
        block = np.array(mm[:, start:start + block_cols], dtype=np.float64)
        if not np.isfinite(block).all():
            bad = np.argwhere(~np.isfinite(block))[0]
            element = int(bad[0]) * cols + start + int(bad[1])
            raise NonFiniteValueError(
                f"{path}: non-finite value at element {element}",
                offset=HEADER_SIZE + element * dtype.itemsize,
            )
        yield block


@dataclass(frozen=True)
class SpliceRecord:
    """Provenance of one splice, as stored in a manifest."""

    original_index: int
    method: str
    rank: int
    lam: float


def write_manifest(path, layer_entries: list[dict], splices: list[SpliceRecord] | None = None) -> None:
    """Write a manifest document; entries carry weights/bias paths and activation."""
    doc = {
        "format": "network-manifest",
        "version": 1,
        "layers": [
            {
                "weights": str(e["weights"]),
                "bias": str(e["bias"]),
                "activation": str(Activation(e["activation"]).value),
            }
            for e in layer_entries
        ],
        "splices": [
            {
                "original_index": s.original_index,
                "method": s.method,
                "rank": s.rank,
                "lambda": s.lam,
            }
            for s in (splices or [])
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> tuple[list[dict], list[SpliceRecord]]:
    """Parse and validate a manifest; returns (layer entries, splice records)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != "network-manifest":
        raise ManifestError(f"{path}: missing network-manifest format marker")
    if doc.get("version") != 1:
        raise ManifestError(f"{path}: unsupported manifest version {doc.get('version')}")
    layers = doc.get("layers")
    if not isinstance(layers, list) or not layers:
        raise ManifestError(f"{path}: manifest lists no layers")
    entries = []
    for i, entry in enumerate(layers):
        try:
            entries.append({
                "weights": entry["weights"],
                "bias": entry["bias"],
                "activation": Activation(entry["activation"]),
            })
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"{path}: malformed layer entry {i}: {exc}") from exc
    splices = []
    for i, rec in enumerate(doc.get("splices", [])):
        try:
            splices.append(SpliceRecord(
                original_index=int(rec["original_index"]),
                method=str(rec["method"]),
                rank=int(rec["rank"]),
                lam=float(rec["lambda"]),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"{path}: malformed splice record {i}: {exc}") from exc
    return entries, splices


def load_network(manifest_path) -> tuple[Network, list[SpliceRecord]]:
    """Load a network from a manifest, validating the dimension chain."""
    manifest_path = Path(manifest_path)
    entries, splices = read_manifest(manifest_path)
    base = manifest_path.parent
    layers = []
    activations = []
    for i, entry in enumerate(entries):
        wpath = base / entry["weights"]
        bpath = base / entry["bias"]
        for p in (wpath, bpath):
            if not p.exists():
                raise ManifestError(f"{manifest_path}: referenced file {p} does not exist")
        weights = read_matrix(wpath)
        bias = read_matrix(bpath)
        if bias.shape[0] != 1:
            raise ManifestError(
                f"{manifest_path}: bias file {bpath} must be 1 x m, got {bias.shape}"
            )
        try:
            layers.append(LinearLayer(weights, bias[0]))
        except DimensionError as exc:
            raise ManifestError(f"{manifest_path}: layer {i}: {exc}") from exc
        activations.append(entry["activation"])
    try:
        net = Network(tuple(layers), tuple(activations))
    except DimensionError as exc:
        raise ManifestError(f"{manifest_path}: dimension chain broken: {exc}") from exc
    return net, splices


def save_network(net: Network, out_dir, manifest_name: str = "manifest.json",
                 splices: list[SpliceRecord] | None = None) -> Path:
    """Write every layer (weights + 1 x m bias) and a manifest into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (layer, act) in enumerate(zip(net.layers, net.activations)):
        wname = f"layer{i}_w.dmat"
        bname = f"layer{i}_b.dmat"
        write_matrix(out / wname, layer.weights)
        write_matrix(out / bname, layer.bias.reshape(1, -1))
        entries.append({"weights": wname, "bias": bname, "activation": act})
    if splices is None:
        splices = [
            SpliceRecord(original_index=idx, method=pair.method.value,
                         rank=pair.rank, lam=pair.lam)
            for idx, pair in sorted(net.spliced.items())
        ]
    manifest_path = out / manifest_name
    write_manifest(manifest_path, entries, splices)
    return manifest_path
