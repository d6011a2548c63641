"""Gaussian kernels and the mask-normalized Gaussian inpainter."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

EPS = 1e-8


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel geometry.

    With ``stacked=True`` the filter is realized as two passes of a kernel of
    side ``(size + 1) // 2`` and scale ``sigma / sqrt(2)``; the composition has
    the same footprint and variance as the direct kernel.
    """

    size: int = 21
    sigma: float = 5.0
    stacked: bool = True

    def __post_init__(self):
        if self.size < 1 or self.size % 2 == 0:
            raise ValueError(f"kernel size must be odd and positive, got {self.size}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.stacked and self.sub_size % 2 == 0:
            raise ValueError(f"stacked kernel of size {self.size} needs an odd sub-kernel, got {self.sub_size}")

    @property
    def sub_size(self) -> int:
        return (self.size + 1) // 2

    @property
    def sub_sigma(self) -> float:
        return self.sigma / math.sqrt(2.0)


def gaussian_kernel_1d(size: int, sigma: float) -> np.ndarray:
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2
    k = np.exp(-offsets ** 2 / (2.0 * sigma ** 2))
    return k / k.sum()


def gaussian_kernel(spec: KernelSpec) -> np.ndarray:
    """Direct ``size x size`` Gaussian kernel, normalized to sum to one.

    The 2-D Gaussian factorizes, so the truncated-and-renormalized 2-D kernel
    is exactly the outer product of the normalized 1-D kernels.  ``stacked``
    is ignored here; see :func:`effective_kernel`.
    """
    k = gaussian_kernel_1d(spec.size, spec.sigma)
    return np.outer(k, k)


def effective_kernel(spec: KernelSpec) -> np.ndarray:
    """The 2-D kernel actually applied by :func:`gaussian_filter`."""
    if not spec.stacked:
        return gaussian_kernel(spec)
    k = gaussian_kernel_1d(spec.sub_size, spec.sub_sigma)
    k = np.convolve(k, k)
    return np.outer(k, k)


def gaussian_filter(arr: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Zero-padded separable Gaussian filtering over the last two axes.

    The operator is self-adjoint (symmetric kernel, zero padding), which the
    gradient code relies on.
    """
    if spec.stacked:
        k = gaussian_kernel_1d(spec.sub_size, spec.sub_sigma)
        passes = 2
    else:
        k = gaussian_kernel_1d(spec.size, spec.sigma)
        passes = 1
    out = np.asarray(arr, dtype=np.float64)
    for _ in range(passes):
        out = ndimage.correlate1d(out, k, axis=-1, mode="constant", cval=0.0)
        out = ndimage.correlate1d(out, k, axis=-2, mode="constant", cval=0.0)
    return out


@dataclass
class InpaintResult:
    inpainted: np.ndarray
    # K * m_keep before any guarding
    support: np.ndarray
    # K * x_masked
    weighted: np.ndarray


def inpaint(
    x_masked: np.ndarray,
    m_keep: np.ndarray,
    spec: KernelSpec,
    eps: float = EPS,
    fallback: str = "mean",
) -> InpaintResult:
    """Predict every pixel as the Gaussian-weighted mean of the kept pixels.

    ``x_masked`` must already be zero outside ``m_keep`` (shape ``(..., C, H, W)``);
    ``m_keep`` has shape ``(..., H, W)`` and may be relaxed to ``[0, 1]``.

    Where the kernel window holds no kept pixel (support ``<= eps``) the ratio
    is undefined.  ``fallback="mean"`` predicts the plain mean of all kept
    pixels there; ``fallback="zero"`` predicts 0.
    """
    x_masked = np.asarray(x_masked, dtype=np.float64)
    m_keep = np.asarray(m_keep, dtype=np.float64)
    if x_masked.shape[-2:] != m_keep.shape[-2:] or x_masked.shape[:-3] != m_keep.shape[:-2]:
        raise ValueError(f"shape mismatch: image {x_masked.shape} vs mask {m_keep.shape}")
    if fallback not in ("mean", "zero"):
        raise ValueError(f"unknown fallback {fallback!r}")

    num, support = _filter_pair(x_masked, m_keep, spec)
    inpainted = num / np.maximum(support, eps)[..., None, :, :]
    if fallback == "mean":
        far = _kept_mean(x_masked, m_keep, eps)
        inpainted = np.where((support > eps)[..., None, :, :], inpainted, far[..., None, None])
    return InpaintResult(inpainted=inpainted, support=support, weighted=num)


def inpaint_vjp(
    x_masked: np.ndarray,
    m_keep: np.ndarray,
    upstream: np.ndarray,
    spec: KernelSpec,
    eps: float = EPS,
    fallback: str = "mean",
    forward: InpaintResult | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Pull ``upstream`` (d loss / d inpainted) back to ``x_masked`` and ``m_keep``.

    Guards are treated as constants where active.  Single instance only.
    Pass the matching ``forward`` result to skip re-filtering.
    """
    x_masked = np.asarray(x_masked, dtype=np.float64)
    m_keep = np.asarray(m_keep, dtype=np.float64)
    if forward is None:
        num, support = _filter_pair(x_masked, m_keep, spec)
    else:
        num, support = forward.weighted, forward.support
    local = support > eps
    denom = np.maximum(support, eps)
    through_ratio = upstream if fallback == "zero" else np.where(local, upstream, 0.0)

    d_num = through_ratio / denom
    d_support = np.where(local, -(through_ratio * num).sum(axis=0) / denom ** 2, 0.0)
    d_xm, d_mk = _filter_pair(d_num, d_support, spec)

    if fallback == "mean":
        mass = m_keep.sum()
        if mass > eps:
            far = _kept_mean(x_masked, m_keep, eps)
            w = np.where(local, 0.0, upstream).sum(axis=(-2, -1))
            d_xm = d_xm + (w / mass)[:, None, None]
            d_mk = d_mk - float(w @ far) / mass
    return d_xm, d_mk


def _filter_pair(img: np.ndarray, mask: np.ndarray, spec: KernelSpec) -> tuple[np.ndarray, np.ndarray]:
    # one filtering call for image channels and mask together
    out = gaussian_filter(np.concatenate([img, mask[..., None, :, :]], axis=-3), spec)
    return out[..., :-1, :, :], out[..., -1, :, :]


def _kept_mean(x_masked: np.ndarray, m_keep: np.ndarray, eps: float) -> np.ndarray:
    mass = m_keep.sum(axis=(-2, -1))
    return x_masked.sum(axis=(-2, -1)) / np.maximum(mass, eps)[..., None]
