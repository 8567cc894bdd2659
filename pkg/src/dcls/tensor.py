"""Dense row-major tensor and its binary file format.

The numerical code in this package works on numpy arrays; :class:`Tensor` is
the value type exchanged at module boundaries and on disk.  It always holds a
C-contiguous array, so strides are the plain row-major ones.

File layout (all integers little-endian)::

    b"DCLS" | version u8 | dtype code u8 (0=f32, 1=f64) | ndim u8
    | ndim x u64 dims | payload (row-major, little-endian)
"""

from __future__ import annotations

import struct
from os import PathLike
from typing import Sequence

import numpy as np

MAGIC = b"DCLS"
VERSION = 1
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_NAMES = {"f32": np.float32, "f64": np.float64}


class TensorFormatError(ValueError):
    """Base class for malformed tensor files."""


class BadMagicError(TensorFormatError):
    pass


class BadDtypeError(TensorFormatError):
    pass


class TruncatedError(TensorFormatError):
    pass


def as_dtype(name) -> np.dtype:
    if isinstance(name, str):
        try:
            return np.dtype(_NAMES[name])
        except KeyError:
            raise ValueError(f"unknown dtype {name!r}, expected f32 or f64") from None
    dt = np.dtype(name)
    if dt not in _CODES:
        raise ValueError(f"unsupported dtype {dt}")
    return dt


class Tensor:
    """Immutable-by-convention n-dimensional array of f32/f64 values."""

    __slots__ = ("_a",)

    def __init__(self, data, shape: Sequence[int] | None = None, dtype="f32"):
        a = np.asarray(data)
        if a.dtype not in _CODES:
            a = a.astype(as_dtype(dtype))
        if shape is not None:
            shape = tuple(int(s) for s in shape)
            if int(np.prod(shape)) != a.size:
                raise ValueError(f"shape {shape} does not match {a.size} elements")
            a = a.reshape(shape)
        if a.ndim == 0:
            a = a.reshape(1)
        self._a = np.ascontiguousarray(a)

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self._a.shape

    @property
    def ndim(self) -> int:
        return self._a.ndim

    @property
    def dtype(self) -> np.dtype:
        return self._a.dtype

    @property
    def strides(self) -> tuple[int, ...]:
        """Row-major strides in elements (not bytes)."""
        out, acc = [], 1
        for s in reversed(self.shape):
            out.append(acc)
            acc *= s
        return tuple(reversed(out))

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the values."""
        return self._a.reshape(-1)

    def numpy(self) -> np.ndarray:
        return self._a

    def __array__(self, dtype=None, copy=None):
        return self._a if dtype is None else self._a.astype(dtype)

    def __len__(self):
        return self.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, tuple) and len(idx) == self.ndim and all(
            isinstance(i, (int, np.integer)) for i in idx
        ):
            flat = sum(int(i) * s for i, s in zip(idx, self.strides))
            return self.data[flat].item()
        return self._a[idx]

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.dtype == other.dtype
            and self._a.tobytes() == other._a.tobytes()
        )

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name})"

    # -- views ------------------------------------------------------------
    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and not isinstance(shape[0], (int, np.integer)):
            shape = tuple(shape[0])
        return Tensor(self._a.reshape(shape))

    def permute(self, *axes) -> "Tensor":
        if len(axes) == 1 and not isinstance(axes[0], (int, np.integer)):
            axes = tuple(axes[0])
        if sorted(axes) != list(range(self.ndim)):
            raise ValueError(f"invalid permutation {axes} for ndim {self.ndim}")
        return Tensor(np.transpose(self._a, axes))

    def astype(self, dtype) -> "Tensor":
        return Tensor(self._a.astype(as_dtype(dtype)))


def zeros(shape: Sequence[int], dtype="f32") -> Tensor:
    shape = tuple(int(s) for s in shape)
    if not shape:
        raise ValueError("empty shape")
    if any(s < 1 for s in shape):
        raise ValueError(f"all dims must be >= 1, got {shape}")
    return Tensor(np.zeros(shape, dtype=as_dtype(dtype)))


def matmul(a, b) -> Tensor:
    a, b = np.asarray(a), np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul expects two 2-D tensors")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dims differ: {a.shape} x {b.shape}")
    return Tensor(a @ b)


def to_bytes(t: Tensor) -> bytes:
    t = t if isinstance(t, Tensor) else Tensor(t)
    if t.ndim > 255:
        raise ValueError("too many dims")
    head = MAGIC + struct.pack("<BBB", VERSION, _CODES[t.dtype], t.ndim)
    head += struct.pack(f"<{t.ndim}Q", *t.shape)
    return head + t.numpy().astype(_DTYPES[_CODES[t.dtype]], copy=False).tobytes()


def from_bytes(buf: bytes) -> Tensor:
    if buf[:4] != MAGIC[: len(buf[:4])]:
        raise BadMagicError("bad magic")
    if len(buf) < 7:
        raise TruncatedError("truncated header")
    version, code, ndim = struct.unpack_from("<BBB", buf, 4)
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}")
    if code not in _DTYPES:
        raise BadDtypeError(f"bad dtype code {code}")
    off = 7
    if len(buf) < off + 8 * ndim:
        raise TruncatedError("truncated dims")
    dims = struct.unpack_from(f"<{ndim}Q", buf, off)
    off += 8 * ndim
    dt = _DTYPES[code]
    n = int(np.prod(dims)) if dims else 1
    need = n * dt.itemsize
    payload = buf[off:]
    if len(payload) < need:
        raise TruncatedError(f"truncated payload: {len(payload)} of {need} bytes")
    if len(payload) > need:
        raise TensorFormatError("trailing bytes after payload")
    a = np.frombuffer(payload, dtype=dt).astype(dt.newbyteorder("="))
    return Tensor(a.reshape(dims))


def save(path: str | PathLike, t) -> None:
    with open(path, "wb") as f:
        f.write(to_bytes(t if isinstance(t, Tensor) else Tensor(t)))


def load(path: str | PathLike) -> Tensor:
    with open(path, "rb") as f:
        return from_bytes(f.read())
