"""Image and batch tensors plus the geometric/noise primitives the attacks use.

Pixel data is float32 in [0, 1], stored channel-first (C, H, W) for a single
image and (B, C, H, W) for a batch.  All public operations preserve that
range and never mutate their inputs; arrays handed to Image/Batch are frozen
so values stay safe to share across threads.

Affine warps use a single composed matrix applied by inverse mapping with
bilinear interpolation and zero padding.  The composition order is

    Translate(center) . Rotate(theta) . Shear(shear, x only)
        . Scale(scale) . Translate(-center) . Translate(tau_x*W, tau_y*H)

with center ((W-1)/2, (H-1)/2).  Rotation and shear angles are degrees;
translations are fractions of the image dimensions.  The identity transform
and quarter-turn rotations on square images are exact pixel permutations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import RngStream

THETA_RANGE = (-3.0, 3.0)
TAU_RANGE = (-0.05, 0.05)
SCALE_RANGE = (0.95, 1.05)
SHEAR_RANGE = (-1.0, 1.0)


def _freeze(data: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(data, dtype=np.float32)
    arr.setflags(write=False)
    return arr


def _check_unit_range(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError(f"{what} values must lie in [0, 1]")


@dataclass(frozen=True)
class Image:
    """One (C, H, W) float32 tensor with all values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"image data must be (C, H, W), got shape {self.data.shape}")
        _check_unit_range(self.data, "image")
        object.__setattr__(self, "data", _freeze(self.data))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class Batch:
    """A shape-homogeneous stack of images, stored as one (B, C, H, W) array."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 4:
            raise ValueError(f"batch data must be (B, C, H, W), got shape {self.data.shape}")
        if self.data.shape[0] < 1:
            raise ValueError("batch must contain at least one image")
        _check_unit_range(self.data, "batch")
        object.__setattr__(self, "data", _freeze(self.data))

    @classmethod
    def from_images(cls, images: list[Image]) -> "Batch":
        if not images:
            raise ValueError("batch must contain at least one image")
        shapes = {img.shape for img in images}
        if len(shapes) != 1:
            raise ValueError(f"images in a batch must share one shape, got {sorted(shapes)}")
        return cls(np.stack([img.data for img in images]))

    @property
    def size(self) -> int:
        return self.data.shape[0]

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return self.data.shape[1:]

    def image(self, index: int) -> Image:
        return Image(self.data[index])


@dataclass(frozen=True)
class AffineParams:
    """One sampled transform: rotation/shear in degrees, translation as a
    fraction of width/height, unitless scale."""

    theta: float
    tau_x: float
    tau_y: float
    scale: float
    shear: float

    def __post_init__(self):
        values = (self.theta, self.tau_x, self.tau_y, self.scale, self.shear)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"affine parameters must be finite, got {values}")

    @staticmethod
    def identity() -> "AffineParams":
        return AffineParams(0.0, 0.0, 0.0, 1.0, 0.0)

    def to_list(self) -> list[float]:
        return [self.theta, self.tau_x, self.tau_y, self.scale, self.shear]

    @classmethod
    def from_list(cls, values) -> "AffineParams":
        theta, tau_x, tau_y, scale, shear = (float(v) for v in values)
        return cls(theta, tau_x, tau_y, scale, shear)


def sample_affine(rng: RngStream) -> AffineParams:
    """Draw one parameter set, advancing `rng` by exactly five uniforms.

    Draw order is fixed (theta, tau_x, tau_y, scale, shear) so seeded runs
    are reproducible draw-for-draw.
    """
    theta = rng.uniform(*THETA_RANGE)
    tau_x = rng.uniform(*TAU_RANGE)
    tau_y = rng.uniform(*TAU_RANGE)
    scale = rng.uniform(*SCALE_RANGE)
    shear = rng.uniform(*SHEAR_RANGE)
    return AffineParams(theta, tau_x, tau_y, scale, shear)


def _cos_sin_deg(deg: float) -> tuple[float, float]:
    # Quarter turns must stay exact pixel permutations, so avoid the
    # ~1e-16 residue of cos(radians(90)).
    rem = deg % 360.0
    if rem == 0.0:
        return 1.0, 0.0
    if rem == 90.0:
        return 0.0, 1.0
    if rem == 180.0:
        return -1.0, 0.0
    if rem == 270.0:
        return 0.0, -1.0
    rad = math.radians(deg)
    return math.cos(rad), math.sin(rad)


def _affine_matrix(p: AffineParams, height: int, width: int) -> np.ndarray:
    """Forward 3x3 map (source pixel coords -> destination pixel coords)."""
    if not all(math.isfinite(v) for v in p.to_list()):
        raise ValueError(f"affine parameters must be finite, got {p}")
    cx = (width - 1) / 2.0
    cy = (height - 1) / 2.0
    cos_t, sin_t = _cos_sin_deg(p.theta)
    sh = math.tan(math.radians(p.shear))

    def translate(tx, ty):
        return np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])

    rotate = np.array([[cos_t, -sin_t, 0.0], [sin_t, cos_t, 0.0], [0.0, 0.0, 1.0]])
    shear = np.array([[1.0, sh, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    scale = np.array([[p.scale, 0.0, 0.0], [0.0, p.scale, 0.0], [0.0, 0.0, 1.0]])
    return (
        translate(cx, cy)
        @ rotate
        @ shear
        @ scale
        @ translate(-cx, -cy)
        @ translate(p.tau_x * width, p.tau_y * height)
    )


def _invert_affine(m: np.ndarray) -> np.ndarray:
    """Analytic inverse of the 2x3 part of a forward affine matrix."""
    a, b, tx = m[0]
    c, d, ty = m[1]
    det = a * d - b * c
    if abs(det) < 1e-12:
        raise ValueError("affine transform is singular")
    ia, ib = d / det, -b / det
    ic, id_ = -c / det, a / det
    return np.array([[ia, ib, -(ia * tx + ib * ty)], [ic, id_, -(ic * tx + id_ * ty)]])


def _warp_arrays(planes: np.ndarray, inv: np.ndarray) -> np.ndarray:
    """Inverse-map warp of (N, H, W) float32 planes with one shared matrix.

    Bilinear interpolation, zeros outside the source.  Interpolation weights
    on the integer grid are exactly {0, 1}, so integer-valued maps are
    bit-exact copies/permutations.
    """
    n, h, w = planes.shape
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    src_x = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    src_y = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]

    x0 = np.floor(src_x)
    y0 = np.floor(src_y)
    wx = src_x - x0
    wy = src_y - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    x1 = x0 + 1
    y1 = y0 + 1

    def gather(yi, xi):
        valid = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        yc = np.clip(yi, 0, h - 1)
        xc = np.clip(xi, 0, w - 1)
        vals = planes[:, yc, xc].astype(np.float64)
        vals[:, ~valid] = 0.0
        return vals

    out = (1.0 - wy) * ((1.0 - wx) * gather(y0, x0) + wx * gather(y0, x1)) + wy * (
        (1.0 - wx) * gather(y1, x0) + wx * gather(y1, x1)
    )
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def apply_affine(img: Image, p: AffineParams) -> Image:
    """Warp an image by one composed affine map; shape is preserved."""
    c, h, w = img.shape
    inv = _invert_affine(_affine_matrix(p, h, w))
    return Image(_warp_arrays(img.data, inv))


def apply_affine_batch(batch: Batch, p: AffineParams) -> Batch:
    """Warp every image of a batch with the same parameter set."""
    b, c, h, w = batch.data.shape
    inv = _invert_affine(_affine_matrix(p, h, w))
    warped = _warp_arrays(batch.data.reshape(b * c, h, w), inv)
    return Batch(warped.reshape(b, c, h, w))


def add_noise(img: Image, epsilon: float, rng: RngStream) -> Image:
    """Brighten by per-element noise drawn from U(0, epsilon), clamped to [0, 1]."""
    if not math.isfinite(epsilon) or not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    delta = rng.uniform_array(0.0, epsilon, img.data.shape)
    out = np.clip(img.data.astype(np.float64) + delta, 0.0, 1.0)
    return Image(out.astype(np.float32))


def resize_bilinear(img: Image, out_h: int, out_w: int) -> Image:
    """Bilinear resample with half-pixel centers and edge clamping."""
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be at least 1")
    c, h, w = img.shape
    src_y = np.clip((np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1)
    src_x = np.clip((np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1)

    y0 = np.floor(src_y).astype(np.int64)
    x0 = np.floor(src_x).astype(np.int64)
    wy = (src_y - y0)[:, None]
    wx = (src_x - x0)[None, :]
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)

    planes = img.data.astype(np.float64)
    top = (1.0 - wx) * planes[:, y0[:, None], x0[None, :]] + wx * planes[:, y0[:, None], x1[None, :]]
    bot = (1.0 - wx) * planes[:, y1[:, None], x0[None, :]] + wx * planes[:, y1[:, None], x1[None, :]]
    out = (1.0 - wy) * top + wy * bot
    return Image(np.clip(out, 0.0, 1.0).astype(np.float32))
