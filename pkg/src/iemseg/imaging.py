"""Image and mask primitives: decoding, preprocessing, convolution, morphology.

Images are float64 arrays of shape ``(C, H, W)`` with values in ``[0, 1]``.
Masks are ``uint8`` arrays of shape ``(H, W)`` holding only 0 and 1, where 1
marks the foreground.  Functions never modify their inputs.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage


class ImageDecodeError(ValueError):
    """Raised when a file cannot be decoded into a supported 8-bit image."""


# 8-bit modes we can map onto gray or RGB without losing information we care about
_GRAY_MODES = {"L", "1"}
_RGB_MODES = {"RGB", "P", "RGBA", "LA", "CMYK", "YCbCr"}

_NEIGHBORS_8 = np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]], dtype=np.int32)


def load_image(path: str | Path, channels: int | None = None) -> np.ndarray:
    """Decode a PNG/JPEG file into a ``(C, H, W)`` float image in ``[0, 1]``.

    Grayscale files decode to one channel.  Pass ``channels=3`` to replicate a
    gray image across three channels; RGB files are never reduced.
    """
    try:
        with PILImage.open(path) as pil:
            pil.load()
            mode = pil.mode
            if mode in _GRAY_MODES:
                pil = pil.convert("L")
            elif mode in _RGB_MODES:
                pil = pil.convert("RGB")
            else:
                raise ImageDecodeError(f"{path}: unsupported mode {mode!r} (need 8-bit gray or RGB)")
            data = np.asarray(pil, dtype=np.uint8)
    except ImageDecodeError:
        raise
    except (OSError, SyntaxError, ValueError) as exc:
        raise ImageDecodeError(f"{path}: cannot decode image ({exc})") from exc

    if data.ndim == 2:
        data = data[None]
    else:
        data = np.moveaxis(data, -1, 0)
    if min(data.shape[1:]) == 0:
        raise ImageDecodeError(f"{path}: zero-sized image")
    if channels is not None and channels != data.shape[0]:
        if data.shape[0] == 1:
            data = np.repeat(data, channels, axis=0)
        else:
            raise ImageDecodeError(f"{path}: cannot reduce {data.shape[0]} channels to {channels}")
    return data.astype(np.float64) / 255.0


def load_mask(path: str | Path, threshold: int = 128) -> np.ndarray:
    """Read an 8-bit mask image; gray values ``>= threshold`` become foreground."""
    img = load_image(path)
    gray = np.rint(img.mean(axis=0) * 255.0)
    return (gray >= threshold).astype(np.uint8)


def save_mask(mask: np.ndarray, path: str | Path) -> None:
    mask = as_mask(mask)
    PILImage.fromarray(mask * np.uint8(255), mode="L").save(path, format="PNG")


def save_image(img: np.ndarray, path: str | Path) -> None:
    data = np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    if data.shape[0] == 1:
        pil = PILImage.fromarray(data[0], mode="L")
    else:
        pil = PILImage.fromarray(np.moveaxis(data, 0, -1), mode="RGB")
    pil.save(path, format="PNG")


def as_mask(mask: np.ndarray) -> np.ndarray:
    """Validate a binary mask and return it as a ``uint8`` array."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    if not np.all((mask == 0) | (mask == 1)):
        raise ValueError("mask must contain only 0 and 1")
    return mask.astype(np.uint8)


def complement(mask: np.ndarray) -> np.ndarray:
    return (1 - as_mask(mask)).astype(np.uint8)


def _resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    out = np.empty((img.shape[0], height, width), dtype=np.float64)
    for c, plane in enumerate(img):
        pil = PILImage.fromarray(plane.astype(np.float32), mode="F")
        out[c] = np.asarray(pil.resize((width, height), PILImage.BILINEAR), dtype=np.float64)
    return out


def preprocess(img: np.ndarray, target: int = 128) -> np.ndarray:
    """Resize the shorter side to ``target`` (bilinear) and center-crop a square.

    Crop offsets are rounded down.  Inputs whose shorter side already equals
    ``target`` are only cropped, so no interpolation error is introduced.
    """
    img = np.asarray(img, dtype=np.float64)
    _, h, w = img.shape
    if h < 1 or w < 1:
        raise ValueError("image dimensions must be positive")
    if min(h, w) != target:
        scale = target / min(h, w)
        new_h = target if h <= w else max(target, int(h * scale))
        new_w = target if w <= h else max(target, int(w * scale))
        img = _resize_bilinear(img, new_h, new_w)
        _, h, w = img.shape
    top = (h - target) // 2
    left = (w - target) // 2
    return img[:, top:top + target, left:left + target].copy()


def convolve2d(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Zero-padded 'same' 2-D convolution applied over the last two axes.

    Works on ``(H, W)``, ``(C, H, W)`` or any array with leading batch axes.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
        raise ValueError(f"kernel must be 2-D with odd sides, got shape {kernel.shape}")
    img = np.asarray(img, dtype=np.float64)
    full = kernel.reshape((1,) * (img.ndim - 2) + kernel.shape)
    return ndimage.convolve(img, full, mode="constant", cval=0.0)


def extract_boundary(mask: np.ndarray) -> np.ndarray:
    """Boolean map of pixels with an in-bounds 4-neighbor of the opposite value.

    Pixels on both sides of every 0/1 interface are included.  Positions
    outside the image never count as neighbors.
    """
    m = as_mask(mask)
    out = np.zeros(m.shape, dtype=bool)
    diff_v = m[1:, :] != m[:-1, :]
    diff_h = m[:, 1:] != m[:, :-1]
    out[1:, :] |= diff_v
    out[:-1, :] |= diff_v
    out[:, 1:] |= diff_h
    out[:, :-1] |= diff_h
    return out


def smooth_mask(mask: np.ndarray) -> np.ndarray:
    """Majority vote over the 8-neighborhood (center excluded, edges replicated).

    A pixel becomes 1 when more than four of its eight neighbors are 1.
    """
    m = as_mask(mask).astype(np.int32)
    counts = ndimage.correlate(m, _NEIGHBORS_8, mode="nearest")
    return (counts > 4).astype(np.uint8)
