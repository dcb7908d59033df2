"""Bit-exact tensor file I/O: the IGT raw-tensor container and binary PPM.

IGT layout: magic ``IGT1`` (4 bytes), u32 little-endian rank, rank u32 LE
dims, then a float32 LE payload in row-major order (C, then H, then W, with
a leading B for batches).  PPM support is binary P6 with maxval 255 only;
bytes map to floats as v/255.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .imagecore import Batch, Image

IGT_MAGIC = b"IGT1"


class TensorIOError(ValueError):
    """Base class for tensor file format errors."""


class MalformedHeaderError(TensorIOError):
    pass


class DimensionMismatchError(TensorIOError):
    pass


class TruncatedPayloadError(TensorIOError):
    pass


def write_tensor(path, arr: np.ndarray) -> None:
    """Write an array to an IGT container (float32 LE payload)."""
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(IGT_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.astype("<f4", copy=False).tobytes())


def read_tensor(path) -> np.ndarray:
    """Read an IGT container back into a float32 array."""
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != IGT_MAGIC:
        raise MalformedHeaderError(f"{path}: not an IGT container")
    (rank,) = struct.unpack_from("<I", raw, 4)
    if rank < 1 or rank > 8:
        raise MalformedHeaderError(f"{path}: implausible rank {rank}")
    header_end = 8 + 4 * rank
    if len(raw) < header_end:
        raise MalformedHeaderError(f"{path}: header cut short")
    dims = struct.unpack_from(f"<{rank}I", raw, 8)
    if any(d == 0 for d in dims):
        raise DimensionMismatchError(f"{path}: zero-sized dimension in {dims}")
    count = int(np.prod(dims))
    expected = header_end + 4 * count
    if len(raw) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload holds {(len(raw) - header_end) // 4} of {count} values"
        )
    data = np.frombuffer(raw, dtype="<f4", count=count, offset=header_end)
    return data.reshape(dims).astype(np.float32)


def _ppm_tokens(raw: bytes, n: int, start: int) -> tuple[list[bytes], int]:
    """Read n whitespace-separated header tokens, honouring '#' comments."""
    tokens: list[bytes] = []
    i = start
    while len(tokens) < n:
        if i >= len(raw):
            raise MalformedHeaderError("PPM header cut short")
        ch = raw[i : i + 1]
        if ch == b"#":
            while i < len(raw) and raw[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(raw) and not raw[j : j + 1].isspace() and raw[j : j + 1] != b"#":
                j += 1
            tokens.append(raw[i:j])
            i = j
    return tokens, i


def write_ppm(path, img: Image) -> None:
    """Write a 3-channel image as binary P6 with maxval 255."""
    if img.channels != 3:
        raise DimensionMismatchError(f"PPM requires 3 channels, got {img.channels}")
    pixels = np.rint(img.data * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.width} {img.height}\n255\n".encode("ascii"))
        fh.write(pixels.transpose(1, 2, 0).tobytes())


def read_ppm(path) -> Image:
    raw = Path(path).read_bytes()
    if raw[:2] != b"P6":
        raise MalformedHeaderError(f"{path}: not a binary PPM (P6)")
    tokens, pos = _ppm_tokens(raw, 3, 2)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise MalformedHeaderError(f"{path}: non-numeric PPM header fields {tokens}") from None
    if maxval != 255:
        raise MalformedHeaderError(f"{path}: only maxval 255 is supported, got {maxval}")
    if width < 1 or height < 1:
        raise DimensionMismatchError(f"{path}: bad dimensions {width}x{height}")
    pos += 1  # single whitespace byte after maxval
    expected = width * height * 3
    payload = raw[pos : pos + expected]
    if len(payload) < expected:
        raise TruncatedPayloadError(f"{path}: payload holds {len(payload)} of {expected} bytes")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return Image((pixels.transpose(2, 0, 1).astype(np.float32) / np.float32(255.0)))


def save_image(img: Image, path) -> None:
    """Write an image by extension: .igt (exact) or .ppm (8-bit)."""
    suffix = Path(path).suffix.lower()
    if suffix == ".igt":
        write_tensor(path, img.data)
    elif suffix == ".ppm":
        write_ppm(path, img)
    else:
        raise ValueError(f"unsupported image extension {suffix!r} (use .igt or .ppm)")


def load_image(path) -> Image:
    suffix = Path(path).suffix.lower()
    if suffix == ".igt":
        arr = read_tensor(path)
        if arr.ndim != 3:
            raise DimensionMismatchError(f"{path}: expected rank 3 for an image, got {arr.ndim}")
        return Image(arr)
    if suffix == ".ppm":
        return read_ppm(path)
    raise ValueError(f"unsupported image extension {suffix!r} (use .igt or .ppm)")


def save_batch(batch: Batch, path) -> None:
    write_tensor(path, batch.data)


def load_batch(path) -> Batch:
    arr = read_tensor(path)
    if arr.ndim != 4:
        raise DimensionMismatchError(f"{path}: expected rank 4 for a batch, got {arr.ndim}")
    return Batch(arr)
