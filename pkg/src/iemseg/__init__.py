"""Unsupervised foreground/background segmentation by inpainting error maximization."""
from .config import DEFAULT_VARIANT, Denominator, IemConfig, Norm, ObjectiveVariant
from .imaging import (
    ImageDecodeError,
    complement,
    convolve2d,
    extract_boundary,
    load_image,
    load_mask,
    preprocess,
    save_mask,
    smooth_mask,
)
from .inpaint import InpaintResult, KernelSpec, gaussian_kernel, inpaint
from .metrics import BatchMetrics, Metrics, accuracy, dice, evaluate_batch, iou
from .objective import diversity_penalty, iem_gradient, iem_objective, inpainting_loss, is_degenerate
from .optimizer import DegenerateMaskError, SegResult, iem_step, init_square_mask, multi_init_run, run_iem
from .synth import LayerModel, SynthSpec, brute_force_optimum, gen_layered

__version__ = "0.1.0"
