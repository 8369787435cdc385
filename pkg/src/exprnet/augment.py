"""Image decoding and seeded training-time augmentation.

All randomness is routed through per-sample draws derived from
(seed, epoch, row index), so outputs never depend on batch composition or
worker count. The evaluation path uses decode + resize + normalize only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image


class AugmentError(ValueError):
    pass


@dataclass
class AugmentConfig:
    flip_probability: float = 0.5
    max_rotation_degrees: float = 10.0
    normalize_mean: tuple = (0.5, 0.5, 0.5)
    normalize_std: tuple = (0.5, 0.5, 0.5)
    target_size: int = 224
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.flip_probability <= 1.0:
            raise AugmentError("flip_probability must be in [0, 1]")
        if self.max_rotation_degrees < 0:
            raise AugmentError("max_rotation_degrees must be >= 0")
        if any(s <= 0 for s in self.normalize_std):
            raise AugmentError("normalize_std components must be > 0")


def sample_draws(seed: int, epoch: int, row_index: int, n: int = 2) -> np.ndarray:
    """Counter-style per-sample uniforms in [0, 1), independent of iteration order."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, epoch, row_index]))
    return rng.random(n)


def bilinear_resize(image: np.ndarray, target: int) -> np.ndarray:
    """Resize C×H×W to C×target×target, bilinear, pixel-center alignment."""
    c, h, w = image.shape
    if (h, w) == (target, target):
        return image
    ys = (np.arange(target) + 0.5) * (h / target) - 0.5
    xs = (np.arange(target) + 0.5) * (w / target) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)
    wx = np.clip(xs - x0, 0.0, 1.0)
    top = image[:, y0][:, :, x0] * (1 - wx) + image[:, y0][:, :, x1] * wx
    bot = image[:, y1][:, :, x0] * (1 - wx) + image[:, y1][:, :, x1] * wx
    return (top * (1 - wy[None, :, None]) + bot * wy[None, :, None]).astype(image.dtype)


def decode_and_resize(path, target_size: int) -> np.ndarray:
    """Decode an 8-bit image to 3×S×S float32 in [0, 1]; grayscale is replicated."""
    try:
        with Image.open(path) as img:
            if img.mode not in ("RGB", "L"):
                img = img.convert("RGB")
            arr = np.asarray(img, dtype=np.float32) / 255.0
    except Exception as exc:
        raise AugmentError(f"cannot decode image {path}: {exc}") from exc
    if arr.ndim == 2:
        arr = np.stack([arr, arr, arr], axis=0)
    else:
        arr = arr.transpose(2, 0, 1)
    return bilinear_resize(np.ascontiguousarray(arr), target_size)


def random_flip(image: np.ndarray, p: float, rng_draw: float) -> np.ndarray:
    if rng_draw < p:
        return np.ascontiguousarray(image[:, :, ::-1])
    return image


def random_rotation(image: np.ndarray, max_deg: float, rng_draw: float) -> np.ndarray:
    """Rotate by (2*draw - 1)*max_deg about the image center.

    Inverse-mapped bilinear sampling; source coordinates outside the image
    read as 0 (black after [0,1] scaling).
    """
    theta = np.deg2rad((2.0 * rng_draw - 1.0) * max_deg)
    if abs(theta) < 1e-12:
        return image
    c, h, w = image.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    # inverse rotation of the output grid back into source coordinates
    src_y = cos_t * ys + sin_t * xs + cy
    src_x = -sin_t * ys + cos_t * xs + cx
    y0 = np.floor(src_y).astype(int)
    x0 = np.floor(src_x).astype(int)
    fy = (src_y - y0).astype(image.dtype)
    fx = (src_x - x0).astype(image.dtype)

    def fetch(yy, xx):
        valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        out = np.zeros((c, h, w), dtype=image.dtype)
        out[:, valid] = image[:, yy[valid], xx[valid]]
        return out

    out = (fetch(y0, x0) * (1 - fy) * (1 - fx)
           + fetch(y0, x0 + 1) * (1 - fy) * fx
           + fetch(y0 + 1, x0) * fy * (1 - fx)
           + fetch(y0 + 1, x0 + 1) * fy * fx)
    return np.ascontiguousarray(out)


def normalize(image: np.ndarray, mean, std) -> np.ndarray:
    mean = np.asarray(mean, dtype=image.dtype).reshape(-1, 1, 1)
    std = np.asarray(std, dtype=image.dtype).reshape(-1, 1, 1)
    if np.any(std <= 0):
        raise AugmentError("normalize std must be > 0")
    return (image - mean) / std


def load_train_sample(path, config: AugmentConfig, epoch: int, row_index: int) -> np.ndarray:
    """flip -> rotate -> normalize, with seeded per-sample draws."""
    image = decode_and_resize(path, config.target_size)
    flip_draw, rot_draw = sample_draws(config.seed, epoch, row_index)
    image = random_flip(image, config.flip_probability, flip_draw)
    image = random_rotation(image, config.max_rotation_degrees, rot_draw)
    return normalize(image, config.normalize_mean, config.normalize_std)


def load_eval_sample(path, config: AugmentConfig) -> np.ndarray:
    image = decode_and_resize(path, config.target_size)
    return normalize(image, config.normalize_mean, config.normalize_std)
