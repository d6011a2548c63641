"""Normalized inpainting loss, diversity penalty, and their mask gradient.

All forward functions accept leading batch axes: images ``(..., C, H, W)``
with masks ``(..., H, W)``.  Masks may be relaxed to real values in ``[0, 1]``.
The gradient is computed for a single instance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_VARIANT, Denominator, IemConfig, Norm, ObjectiveVariant
from .inpaint import InpaintResult, inpaint, inpaint_vjp

_SPATIAL = (-2, -1)
_ALL = (-3, -2, -1)


@dataclass
class _Term:
    """Cached forward pass of one half of the loss: inpaint region `a` from `b`."""

    x: np.ndarray
    a: np.ndarray
    b: np.ndarray
    fwd: InpaintResult
    diff: np.ndarray
    resid: np.ndarray
    num: np.ndarray
    den: np.ndarray
    value: np.ndarray


def _term(x, a, b, cfg: IemConfig, variant: ObjectiveVariant) -> _Term:
    eps = cfg.epsilon
    fwd = inpaint(x * b[..., None, :, :], b, cfg.kernel, eps, cfg.fallback)
    diff = x - fwd.inpainted
    resid = a[..., None, :, :] * diff
    if variant.numerator is Norm.L1:
        num = np.abs(resid).sum(axis=_ALL)
    else:
        num = np.sqrt((resid ** 2).sum(axis=_ALL))
    if variant.denominator is Denominator.MASK_COUNT:
        den = a.sum(axis=_SPATIAL)
    elif variant.denominator is Denominator.IMG_L1:
        # a >= 0, so |x * a| = |x| * a
        den = (np.abs(x) * a[..., None, :, :]).sum(axis=_ALL)
    else:
        den = np.sqrt(((x * a[..., None, :, :]) ** 2).sum(axis=_ALL))
    value = num / np.maximum(den, eps)
    return _Term(x, a, b, fwd, diff, resid, num, den, value)


def _term_grad(t: _Term, cfg: IemConfig, variant: ObjectiveVariant) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of one term with respect to its region mask `a` and source mask `b`."""
    eps = cfg.epsilon
    den = max(float(t.den), eps)
    if variant.numerator is Norm.L1:
        d_resid = np.sign(t.resid)
    else:
        d_resid = t.resid / t.num if t.num > 0 else np.zeros_like(t.resid)
    d_resid = d_resid / den

    grad_a = (d_resid * t.diff).sum(axis=0)
    if t.den > eps:
        d_den = -float(t.value) / den
        if variant.denominator is Denominator.MASK_COUNT:
            grad_a += d_den
        elif variant.denominator is Denominator.IMG_L1:
            grad_a += d_den * np.abs(t.x).sum(axis=0)
        else:
            grad_a += d_den * (t.x ** 2).sum(axis=0) * t.a / float(t.den)

    # resid = a * (x - psi)  ->  d psi = -a * d resid
    d_psi = -t.a[None] * d_resid
    d_xm, d_mk = inpaint_vjp(t.x * t.b[None], t.b, d_psi, cfg.kernel, eps, cfg.fallback, t.fwd)
    grad_b = (d_xm * t.x).sum(axis=0) + d_mk
    return grad_a, grad_b


def _prepare(x, m):
    x = np.asarray(x, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if x.shape[-2:] != m.shape[-2:]:
        raise ValueError(f"shape mismatch: image {x.shape} vs mask {m.shape}")
    return x, m


def is_degenerate(m: np.ndarray, eps: float = 1e-8) -> bool:
    """True when the mask or its complement has (numerically) no mass."""
    m = np.asarray(m, dtype=np.float64)
    total = m.sum()
    return bool(total <= eps or m.size - total <= eps)


def inpainting_loss(x, m, cfg: IemConfig, variant: ObjectiveVariant | None = None):
    """Sum of both normalized inpainting errors: mask from complement and back."""
    x, m = _prepare(x, m)
    variant = cfg.variant if variant is None else variant
    mc = 1.0 - m
    total = _term(x, m, mc, cfg, variant).value + _term(x, mc, m, cfg, variant).value
    return float(total) if np.ndim(total) == 0 else total


def _spread(x, a, eps):
    mass = a.sum(axis=_SPATIAL)
    mean = (x * a[..., None, :, :]).sum(axis=_SPATIAL) / np.maximum(mass, eps)[..., None]
    dev = x - mean[..., None, None]
    return ((a[..., None, :, :] * dev) ** 2).sum(axis=_ALL), mass, dev


def _spread_grad(x, a, eps):
    _, mass, dev = _spread(x, a, eps)
    grad = 2.0 * a * (dev ** 2).sum(axis=0)
    if mass > eps:
        d_mean = -2.0 * ((a ** 2)[None] * dev).sum(axis=_SPATIAL)
        grad += (d_mean[:, None, None] * dev).sum(axis=0) / mass
    return grad


def diversity_penalty(x, m, eps: float = 1e-8):
    """Within-region squared deviation from the per-channel region mean, both regions."""
    x, m = _prepare(x, m)
    total = _spread(x, m, eps)[0] + _spread(x, 1.0 - m, eps)[0]
    return float(total) if np.ndim(total) == 0 else total


def iem_objective(x, m, cfg: IemConfig):
    return inpainting_loss(x, m, cfg) - 0.5 * cfg.effective_lam * diversity_penalty(x, m, cfg.epsilon)


@dataclass
class Evaluation:
    inpainting: float
    penalty: float
    objective: float
    grad: np.ndarray | None = None


def evaluate(x, m, cfg: IemConfig, with_grad: bool = True) -> Evaluation:
    """Objective pieces and (optionally) the gradient from one shared forward pass."""
    x, m = _prepare(x, m)
    variant = cfg.variant
    mc = 1.0 - m
    fg = _term(x, m, mc, cfg, variant)
    bg = _term(x, mc, m, cfg, variant)
    l_inp = float(fg.value + bg.value)
    lam = cfg.effective_lam
    penalty = float(_spread(x, m, cfg.epsilon)[0] + _spread(x, mc, cfg.epsilon)[0])
    ev = Evaluation(l_inp, penalty, l_inp - 0.5 * lam * penalty)
    if with_grad:
        fg_a, fg_b = _term_grad(fg, cfg, variant)
        bg_a, bg_b = _term_grad(bg, cfg, variant)
        grad = fg_a - fg_b - bg_a + bg_b
        if lam:
            grad -= 0.5 * lam * (_spread_grad(x, m, cfg.epsilon) - _spread_grad(x, mc, cfg.epsilon))
        ev.grad = grad
    return ev


def iem_gradient(x, m, cfg: IemConfig) -> np.ndarray:
    """Exact gradient of :func:`iem_objective` with respect to a relaxed mask.

    Differentiates through the outer mask factors, the masked image and
    support inside the inpainter, the normalizers and the region means.  The
    L1 subgradient uses sign(0) = 0.
    """
    x, m = _prepare(x, m)
    if x.ndim != 3 or m.ndim != 2:
        raise ValueError("iem_gradient expects a single (C, H, W) image and (H, W) mask")
    return evaluate(x, m, cfg).grad


def diversity_gradient(x, m, eps: float = 1e-8) -> np.ndarray:
    x, m = _prepare(x, m)
    return _spread_grad(x, m, eps) - _spread_grad(x, 1.0 - m, eps)


__all__ = [
    "DEFAULT_VARIANT",
    "Evaluation",
    "diversity_gradient",
    "diversity_penalty",
    "evaluate",
    "iem_gradient",
    "iem_objective",
    "inpainting_loss",
    "is_degenerate",
]
