"""Greedy boundary-flip ascent on the IEM objective, with multi-start selection."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT_VARIANT, IemConfig
from .imaging import as_mask, extract_boundary, smooth_mask
from .objective import evaluate, inpainting_loss, is_degenerate

log = logging.getLogger(__name__)


class DegenerateMaskError(ValueError):
    """The mask is empty or full, so the normalized objective is undefined."""


@dataclass
class SegResult:
    mask: np.ndarray
    init_size: int
    # (iteration, L_IEM, L_inp); iteration 0 is the initial mask
    objective_trace: list[tuple[int, float, float]] = field(default_factory=list)
    converged_at: int | None = None
    degenerate: bool = False
    # multi-init selection score of the final mask
    score: float = float("nan")

    @property
    def final_inpainting(self) -> float:
        return self.objective_trace[-1][2] if self.objective_trace else float("nan")

    @property
    def final_objective(self) -> float:
        return self.objective_trace[-1][1] if self.objective_trace else float("nan")


def init_square_mask(side: int, size: int) -> np.ndarray:
    if not 0 < size < side:
        raise ValueError(f"init size must satisfy 0 < size < side, got size={size}, side={side}")
    mask = np.zeros((side, side), dtype=np.uint8)
    start = (side - size) // 2
    mask[start:start + size, start:start + size] = 1
    return mask


def _apply_step(m: np.ndarray, grad: np.ndarray, cfg: IemConfig) -> np.ndarray:
    # infinite step size: positive gradient -> 1, negative -> 0, zero keeps the pixel
    target = np.where(grad > 0, 1, np.where(grad < 0, 0, m)).astype(np.uint8)
    if cfg.boundary_restricted:
        target = np.where(extract_boundary(m), target, m).astype(np.uint8)
    if cfg.smoothing:
        target = smooth_mask(target)
    return target


def iem_step(x: np.ndarray, m: np.ndarray, cfg: IemConfig) -> np.ndarray:
    """One projected ascent step with infinite step size, then optional smoothing."""
    m = as_mask(m)
    if is_degenerate(m, cfg.epsilon):
        raise DegenerateMaskError("cannot step from an empty or full mask")
    return _apply_step(m, evaluate(x, m, cfg).grad, cfg)


def run_iem(x: np.ndarray, init: np.ndarray, cfg: IemConfig) -> SegResult:
    """Iterate :func:`iem_step` from ``init``.

    Stops at a fixed point (unless ``cfg.strict_iterations``) or when an
    iterate becomes empty or full; in the latter case the last valid mask is
    returned and the result is flagged degenerate.
    """
    x = np.asarray(x, dtype=np.float64)
    m = as_mask(init)
    if m.shape != x.shape[1:]:
        raise ValueError(f"init mask {m.shape} does not match image {x.shape[1:]}")
    size = int(round(np.sqrt(m.sum())))
    result = SegResult(mask=m, init_size=size)
    if is_degenerate(m, cfg.epsilon):
        result.degenerate = True
        return result

    ev = evaluate(x, m, cfg)
    result.objective_trace.append((0, ev.objective, ev.inpainting))
    for t in range(1, cfg.iterations + 1):
        new = _apply_step(m, ev.grad, cfg)
        if is_degenerate(new, cfg.epsilon):
            log.debug("iterate %d degenerate; keeping previous mask", t)
            result.degenerate = True
            break
        unchanged = np.array_equal(new, m)
        m = new
        ev = evaluate(x, m, cfg)
        result.objective_trace.append((t, ev.objective, ev.inpainting))
        if unchanged:
            if result.converged_at is None:
                result.converged_at = t
            if not cfg.strict_iterations:
                break
    result.mask = m
    return result


def _selection_score(x: np.ndarray, res: SegResult, cfg: IemConfig) -> float:
    if not res.objective_trace:
        return float("-inf")
    if cfg.selection == "objective":
        return res.final_objective
    if cfg.variant == DEFAULT_VARIANT:
        return res.final_inpainting
    return inpainting_loss(x, res.mask, cfg, variant=DEFAULT_VARIANT)


def multi_init_run(x: np.ndarray, cfg: IemConfig) -> SegResult:
    """Run from every centered-square init and keep the highest-scoring result.

    The score is the final unregularized inpainting loss under the default
    variant (or the regularized objective with ``cfg.selection="objective"``).
    Ties go to the smaller init; degenerate runs only win if all are degenerate.
    """
    x = np.asarray(x, dtype=np.float64)
    side = x.shape[-1]
    if x.shape[-2] != side:
        raise ValueError(f"image must be square, got {x.shape[1:]}")
    results = []
    for size in sorted(cfg.init_sizes):
        res = run_iem(x, init_square_mask(side, size), cfg)
        res.init_size = size
        res.score = _selection_score(x, res, cfg)
        results.append(res)
    pool = [r for r in results if not r.degenerate] or results
    best = pool[0]
    for r in pool[1:]:
        if r.score > best.score:
            best = r
    return best
