"""Binary matrix and model files, plus CSV import/export.

Matrix file (``QMX1``)::

    magic    4 bytes  b"QMX1"
    rows     uint64 little-endian
    cols     uint64 little-endian
    payload  rows * cols float64 little-endian, column-major

Model file (``QMM1``)::

    magic      4 bytes  b"QMM1"
    n, r, p, m, M        5 x uint64 little-endian
    gamma                float64 little-endian
    method               uint8 (0 = qmsr, 1 = qm-full, 2 = gappy-pod)
    generator            uint64 byte length, then UTF-8 bytes
    selected_indices     r x uint64
    sampler indices      m x uint64
    V                    n * r float64, column-major
    W                    n * p float64, column-major

All indices are 0-based.
"""

import csv
import os
import struct
import tempfile
from contextlib import contextmanager

import numpy as np

from qmsr.exceptions import ValidationError
from qmsr.featuremap import feature_dim
from qmsr.manifold import QuadraticManifoldModel
from qmsr.sampling import SamplingOperator

MATRIX_MAGIC = b"QMX1"
MODEL_MAGIC = b"QMM1"
METHOD_CODES = {"qmsr": 0, "qm-full": 1, "gappy-pod": 2}
METHOD_NAMES = {v: k for k, v in METHOD_CODES.items()}

_U64 = struct.Struct("<Q")
_MAX_U64 = 2**64 - 1


class FormatError(ValidationError):
    """A file does not follow the expected binary or CSV layout."""


@contextmanager
def atomic_write(path, mode="wb"):
    """Write to a temporary file next to `path` and rename it on success."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, mode, **({} if "b" in mode else {"newline": ""})) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _payload(A):
    return np.asarray(A, dtype="<f8").tobytes(order="F")


def matrix_bytes(A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValidationError(f"expected a 2-D matrix, got shape {A.shape}")
    return MATRIX_MAGIC + _U64.pack(A.shape[0]) + _U64.pack(A.shape[1]) + _payload(A)


def write_matrix(path, A):
    data = matrix_bytes(A)
    with atomic_write(path) as fh:
        fh.write(data)


class _Reader:
    def __init__(self, data, what):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, nbytes):
        if nbytes < 0 or self.pos + nbytes > len(self.data):
            raise FormatError(
                f"truncated {self.what}: needed {nbytes} bytes at offset {self.pos}, "
                f"file has {len(self.data)}"
            )
        chunk = self.data[self.pos : self.pos + nbytes]
        self.pos += nbytes
        return chunk

    def u64(self):
        return _U64.unpack(self.take(8))[0]

    def f64(self):
        return struct.unpack("<d", self.take(8))[0]

    def u64_array(self, count):
        return np.frombuffer(self.take(8 * count), dtype="<u8").astype(np.int64)

    def matrix(self, rows, cols):
        count = rows * cols
        if count > _MAX_U64 // 8:
            raise FormatError(f"matrix dimensions {rows} x {cols} overflow")
        flat = np.frombuffer(self.take(8 * count), dtype="<f8")
        return flat.reshape((rows, cols), order="F").astype(np.float64)

    def finish(self):
        if self.pos != len(self.data):
            raise FormatError(
                f"{self.what} has {len(self.data) - self.pos} trailing bytes"
            )


def parse_matrix(data):
    rd = _Reader(data, "matrix file")
    if rd.take(4) != MATRIX_MAGIC:
        raise FormatError("bad magic: not a QMX1 matrix file")
    rows, cols = rd.u64(), rd.u64()
    A = rd.matrix(rows, cols)
    rd.finish()
    return A


def read_matrix(path):
    with open(path, "rb") as fh:
        return parse_matrix(fh.read())


def model_bytes(model):
    name = model.generator.encode("utf-8")
    parts = [
        MODEL_MAGIC,
        struct.pack("<5Q", model.n, model.r, model.p, model.m, model.n_candidates),
        struct.pack("<d", model.gamma),
        struct.pack("<B", METHOD_CODES[model.method]),
        _U64.pack(len(name)),
        name,
        np.asarray(model.selected_indices, dtype="<u8").tobytes(),
        np.asarray(model.sampler.indices, dtype="<u8").tobytes(),
        _payload(model.V),
        _payload(model.W),
    ]
    return b"".join(parts)


def write_model(path, model):
    data = model_bytes(model)
    with atomic_write(path) as fh:
        fh.write(data)


def parse_model(data, validate=True):
    """Decode a QMM1 byte string; with `validate`, re-check all model invariants."""
    rd = _Reader(data, "model file")
    if rd.take(4) != MODEL_MAGIC:
        raise FormatError("bad magic: not a QMM1 model file")
    n, r, p, m, M = (rd.u64() for _ in range(5))
    if p != feature_dim(r):
        raise FormatError(f"feature dimension {p} != r(r+1)/2 = {feature_dim(r)}")
    gamma = rd.f64()
    code = rd.take(1)[0]
    if code not in METHOD_NAMES:
        raise FormatError(f"unknown method code {code}")
    try:
        generator = rd.take(rd.u64()).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"generator name is not UTF-8: {exc}") from exc
    selected = rd.u64_array(r)
    sampler_idx = rd.u64_array(m)
    V = rd.matrix(n, r)
    W = rd.matrix(n, p)
    rd.finish()
    model = QuadraticManifoldModel(
        V=V, W=W, sampler=SamplingOperator(n, sampler_idx), selected_indices=selected,
        gamma=gamma, method=METHOD_NAMES[code], n_candidates=M, generator=generator,
    )
    if validate:
        model.validate()
    return model


def read_model(path, validate=True):
    with open(path, "rb") as fh:
        return parse_model(fh.read(), validate=validate)


def read_csv_matrix(path):
    """Read a rectangular CSV of decimal numbers; CSV rows are matrix rows."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not tok.strip() for tok in record):
                continue
            values = []
            for col, tok in enumerate(record, start=1):
                try:
                    values.append(float(tok))
                except ValueError:
                    raise FormatError(
                        f"{path}: line {lineno}, column {col}: cannot parse {tok!r}"
                    ) from None
            if rows and len(values) != len(rows[0]):
                raise FormatError(
                    f"{path}: line {lineno} has {len(values)} fields, "
                    f"expected {len(rows[0])}"
                )
            rows.append(values)
    if not rows:
        raise FormatError(f"{path}: no data")
    return np.array(rows, dtype=np.float64)


def write_csv_matrix(path, A):
    """Write `A` with 17 significant digits so that reading it back is exact."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValidationError("expected a 2-D matrix")
    with atomic_write(path, "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in A:
            writer.writerow(format(v, ".17g") for v in row)
