"""Coarse-to-fine blur diffusion: forward blurring chains, score oracles and
the reverse deblurring sampler on desk-scale data."""

from .errors import FingerprintMismatch, InvalidInput, InvalidParameter, InvalidState
from .spectral import (
    BlurOperator,
    GaussianKernel1D,
    SpectralField,
    apply_power,
    build_blur_operator,
    build_kernel,
    default_support,
    to_pixel,
    to_spectral,
)
from .schedule import (
    BlurSchedule,
    DiffusionSchedule,
    NoiseSchedule,
    blur_schedule,
    linear_betas,
    make_schedule,
)

__version__ = "0.1.0"

__all__ = [
    "BlurOperator",
    "BlurSchedule",
    "DiffusionSchedule",
    "FingerprintMismatch",
    "GaussianKernel1D",
    "InvalidInput",
    "InvalidParameter",
    "InvalidState",
    "NoiseSchedule",
    "SpectralField",
    "apply_power",
    "blur_schedule",
    "build_blur_operator",
    "build_kernel",
    "default_support",
    "linear_betas",
    "make_schedule",
    "to_pixel",
    "to_spectral",
]
