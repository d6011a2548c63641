"""Synthetic layered images with planted masks, and an exhaustive optimum oracle.

Foreground and background layers are drawn from independent streams of a
counter-based generator (Philox), so corpora are reproducible across
platforms and numpy versions that keep the Philox stream stable.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import IemConfig
from .inpaint import KernelSpec, gaussian_filter
from .objective import iem_objective

LAYER_KINDS = ("constant", "gradient", "texture")
SHAPES = ("square", "ellipse", "freeform")


@dataclass(frozen=True)
class LayerModel:
    """How one layer is painted.

    ``constant`` fills with ``color``; ``gradient`` ramps linearly from
    ``color`` to ``color2`` along ``angle``; ``texture`` adds smoothed noise of
    standard deviation ``amplitude`` (correlation length ``scale`` pixels) to
    ``color``.
    """

    kind: str = "constant"
    color: tuple[float, ...] = (0.5, 0.5, 0.5)
    color2: tuple[float, ...] = (0.5, 0.5, 0.5)
    angle: float = 0.0
    amplitude: float = 0.1
    scale: float = 1.5

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")


@dataclass(frozen=True)
class SynthSpec:
    side: int = 128
    shape: str = "square"
    # square side, or ellipse/freeform diameter, in pixels
    size: int = 40
    # offset of the shape center from the image center (rows, cols)
    offset: tuple[int, int] = (0, 0)
    fg: LayerModel = field(default_factory=lambda: LayerModel(color=(0.9, 0.2, 0.2)))
    bg: LayerModel = field(default_factory=lambda: LayerModel(color=(0.2, 0.3, 0.8)))
    seed: int = 0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}")
        if not 0 < self.size < self.side:
            raise ValueError(f"shape size must be in (0, side), got {self.size}")
        if len(self.fg.color) != len(self.bg.color):
            raise ValueError("foreground and background must have the same channel count")


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, stream]))


def _planted_mask(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.side
    cy = (n - 1) / 2 + spec.offset[0]
    cx = (n - 1) / 2 + spec.offset[1]
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    if spec.shape == "square":
        top = int(round(cy - (spec.size - 1) / 2))
        left = int(round(cx - (spec.size - 1) / 2))
        mask = np.zeros((n, n), dtype=np.uint8)
        mask[max(top, 0):top + spec.size, max(left, 0):left + spec.size] = 1
        return mask
    r = spec.size / 2
    if spec.shape == "ellipse":
        aspect = rng.uniform(0.6, 1.0)
        theta = rng.uniform(0, np.pi)
        u = (xx - cx) * np.cos(theta) + (yy - cy) * np.sin(theta)
        v = -(xx - cx) * np.sin(theta) + (yy - cy) * np.cos(theta)
        return ((u / r) ** 2 + (v / (r * aspect)) ** 2 <= 1.0).astype(np.uint8)
    # freeform: a disc whose radius is modulated by a few random harmonics
    angle = np.arctan2(yy - cy, xx - cx)
    radius = np.full_like(angle, r)
    for k in (2, 3, 5):
        radius += r * rng.uniform(0.0, 0.12) * np.cos(k * angle + rng.uniform(0, 2 * np.pi))
    return (np.hypot(yy - cy, xx - cx) <= radius).astype(np.uint8)


def _paint(layer: LayerModel, n: int, rng: np.random.Generator) -> np.ndarray:
    base = np.asarray(layer.color, dtype=np.float64)[:, None, None]
    if layer.kind == "constant":
        img = np.broadcast_to(base, (base.shape[0], n, n)).copy()
    elif layer.kind == "gradient":
        end = np.asarray(layer.color2, dtype=np.float64)[:, None, None]
        yy, xx = np.mgrid[0:n, 0:n] / max(n - 1, 1)
        t = np.cos(layer.angle) * xx + np.sin(layer.angle) * yy
        t = (t - t.min()) / max(t.max() - t.min(), 1e-12)
        img = base + (end - base) * t[None]
    else:
        noise = rng.standard_normal((base.shape[0], n, n))
        if layer.scale > 0:
            size = 2 * int(np.ceil(3 * layer.scale)) + 1
            noise = gaussian_filter(noise, KernelSpec(size, layer.scale, stacked=False))
            noise /= max(noise.std(), 1e-12)
        img = base + layer.amplitude * noise
    return np.clip(img, 0.0, 1.0)


def gen_layered(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray]:
    """Compose independently drawn layers through a planted mask.

    Returns ``(image, mask)`` with ``image = fg * mask + bg * (1 - mask)``.
    """
    n = spec.side
    mask = _planted_mask(spec, _rng(spec.seed, 0))
    fg = _paint(spec.fg, n, _rng(spec.seed, 1))
    bg = _paint(spec.bg, n, _rng(spec.seed, 2))
    image = fg * mask[None] + bg * (1 - mask)[None]
    return image, mask


def layered_components(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The foreground layer, background layer and mask behind :func:`gen_layered`."""
    n = spec.side
    return (
        _paint(spec.fg, n, _rng(spec.seed, 1)),
        _paint(spec.bg, n, _rng(spec.seed, 2)),
        _planted_mask(spec, _rng(spec.seed, 0)),
    )


def enumerate_masks(h: int, w: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Masks for indices in ``[start, stop)``; pixel (0, 0) is the most significant bit.

    Index order is therefore lexicographic order of the row-major flattened mask.
    """
    n = h * w
    stop = 2 ** n if stop is None else stop
    idx = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1, h, w)


def brute_force_optimum(
    x: np.ndarray,
    cfg: IemConfig,
    max_pixels: int = 16,
    chunk: int = 8192,
    rel_tol: float = 1e-12,
) -> tuple[np.ndarray, float]:
    """Exhaustive argmax of the IEM objective over all non-degenerate masks.

    Values within ``rel_tol`` of the maximum count as ties, resolved toward
    the lexicographically smallest mask.
    """
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape[1:]
    n = h * w
    if n > max_pixels:
        raise ValueError(f"instance has {n} pixels; exhaustive search is capped at {max_pixels}")
    values = np.empty(2 ** n - 2)
    # skip index 0 (empty) and the last index (full)
    for lo in range(1, 2 ** n - 1, chunk):
        hi = min(lo + chunk, 2 ** n - 1)
        masks = enumerate_masks(h, w, lo, hi)
        values[lo - 1:hi - 1] = iem_objective(np.broadcast_to(x, (len(masks),) + x.shape), masks, cfg)
    best = values.max()
    first = int(np.flatnonzero(values >= best - rel_tol * max(1.0, abs(best)))[0])
    return enumerate_masks(h, w, first + 1, first + 2)[0], float(values[first])


def corpus_specs(
    count: int,
    seed: int,
    side: int = 128,
    kind: str = "mixed",
    shapes: tuple[str, ...] = SHAPES,
) -> list[SynthSpec]:
    """Deterministic planted-shape corpus.

    ``kind`` is ``"constant"`` (flat layers), ``"textured"`` (both layers
    carry fine-grained noise, stronger in the background) or ``"mixed"`` (alternating, constant first).
    Colors are resampled until the two layers differ by at least 0.35 in
    Euclidean RGB distance.  Shapes cycle through ``shapes``.
    """
    if kind not in ("constant", "textured", "mixed"):
        raise ValueError(f"unknown corpus kind {kind!r}")
    if not shapes or any(s not in SHAPES for s in shapes):
        raise ValueError(f"shapes must be drawn from {SHAPES}, got {shapes}")
    rng = _rng(seed, 99)
    specs = []
    for i in range(count):
        fg_color = rng.uniform(0.1, 0.9, 3)
        bg_color = rng.uniform(0.1, 0.9, 3)
        while np.linalg.norm(fg_color - bg_color) < 0.35:
            bg_color = rng.uniform(0.1, 0.9, 3)
        shape = shapes[i % len(shapes)]
        size = int(rng.integers(side * 5 // 16, side * 15 // 32 + 1))
        offset = tuple(int(v) for v in rng.integers(-side // 16, side // 16 + 1, 2))
        textured = kind == "textured" or (kind == "mixed" and i % 2 == 1)
        if textured:
            # fine-grained clutter, busier in the background than on the object
            fg = LayerModel("texture", tuple(fg_color), amplitude=float(rng.uniform(0.06, 0.12)),
                            scale=float(rng.uniform(0.5, 1.0)))
            bg = LayerModel("texture", tuple(bg_color), amplitude=float(rng.uniform(0.15, 0.25)),
                            scale=float(rng.uniform(0.5, 1.0)))
        else:
            fg = LayerModel("constant", tuple(fg_color))
            bg = LayerModel("constant", tuple(bg_color))
        specs.append(SynthSpec(side=side, shape=shape, size=size, offset=offset, fg=fg, bg=bg,
                               seed=seed * 100003 + i))
    return specs
