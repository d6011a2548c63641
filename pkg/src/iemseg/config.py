"""Hyperparameters and objective variants."""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

from .inpaint import EPS, KernelSpec


class Norm(str, enum.Enum):
    L1 = "l1"
    L2 = "l2"


class Denominator(str, enum.Enum):
    MASK_COUNT = "mask"
    IMG_L1 = "imgl1"
    IMG_L2 = "imgl2"


@dataclass(frozen=True)
class ObjectiveVariant:
    """Residual norm and normalizer used by each half of the inpainting loss."""

    numerator: Norm = Norm.L1
    denominator: Denominator = Denominator.MASK_COUNT

    @property
    def name(self) -> str:
        return f"{self.numerator.value}-{self.denominator.value}"

    @classmethod
    def from_name(cls, name: str) -> "ObjectiveVariant":
        try:
            num, den = name.split("-", 1)
            return cls(Norm(num), Denominator(den))
        except ValueError:
            raise ValueError(f"unknown objective variant {name!r}; choose from {', '.join(VARIANT_NAMES)}") from None


DEFAULT_VARIANT = ObjectiveVariant()

VARIANT_NAMES = ("l1-mask", "l2-mask", "l1-imgl1", "l2-imgl2")


@dataclass(frozen=True)
class IemConfig:
    kernel: KernelSpec = field(default_factory=KernelSpec)
    lam: float = 0.001
    variant: ObjectiveVariant = DEFAULT_VARIANT
    iterations: int = 150
    init_sizes: tuple[int, ...] = (44, 78, 92)
    regularizer: bool = True
    smoothing: bool = True
    boundary_restricted: bool = True
    # keep stepping after a fixed point so traces always hold `iterations` steps
    strict_iterations: bool = False
    # multi-init selection score: "inpainting" (unregularized, default variant) or "objective"
    selection: str = "inpainting"
    # prediction where no kept pixel lies under the kernel: "mean" or "zero"
    fallback: str = "mean"
    epsilon: float = EPS

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not self.init_sizes:
            raise ValueError("init_sizes must not be empty")
        if any(s < 1 for s in self.init_sizes):
            raise ValueError(f"init sizes must be positive, got {self.init_sizes}")
        if self.lam < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if self.selection not in ("inpainting", "objective"):
            raise ValueError(f"unknown selection {self.selection!r}")
        if self.fallback not in ("mean", "zero"):
            raise ValueError(f"unknown fallback {self.fallback!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        object.__setattr__(self, "init_sizes", tuple(int(s) for s in self.init_sizes))

    @property
    def effective_lam(self) -> float:
        return self.lam if self.regularizer else 0.0

    def to_flat(self) -> dict[str, str]:
        """Flat string mapping, the format stored in run manifests."""
        flat = {}
        for key, value in asdict(self).items():
            if key == "kernel":
                flat["kernel_size"] = str(self.kernel.size)
                flat["sigma"] = repr(self.kernel.sigma)
                flat["stacked"] = str(self.kernel.stacked)
            elif key == "variant":
                flat["objective"] = self.variant.name
            elif key == "init_sizes":
                flat["init_sizes"] = ",".join(str(s) for s in self.init_sizes)
            elif isinstance(value, float):
                flat[key] = repr(value)
            else:
                flat[key] = str(value)
        return flat

    @classmethod
    def from_flat(cls, flat: dict[str, str]) -> "IemConfig":
        def flag(key, default):
            return flat[key] == "True" if key in flat else default

        base = cls()
        return cls(
            kernel=KernelSpec(
                size=int(flat.get("kernel_size", base.kernel.size)),
                sigma=float(flat.get("sigma", base.kernel.sigma)),
                stacked=flag("stacked", base.kernel.stacked),
            ),
            lam=float(flat.get("lam", base.lam)),
            variant=ObjectiveVariant.from_name(flat.get("objective", base.variant.name)),
            iterations=int(flat.get("iterations", base.iterations)),
            init_sizes=tuple(int(s) for s in flat.get("init_sizes", "44,78,92").split(",")),
            regularizer=flag("regularizer", base.regularizer),
            smoothing=flag("smoothing", base.smoothing),
            boundary_restricted=flag("boundary_restricted", base.boundary_restricted),
            strict_iterations=flag("strict_iterations", base.strict_iterations),
            selection=flat.get("selection", base.selection),
            fallback=flat.get("fallback", base.fallback),
            epsilon=float(flat.get("epsilon", base.epsilon)),
        )
