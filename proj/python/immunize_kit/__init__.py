"""Image immunization toolkit.

Optimizes imperceptible perturbations that make text-guided diffusion edits
fail (semantic mismatch or perceptual degradation), and evaluates the outcome
with classical metrics plus a strict-agreement judge protocol (ISR).
"""

from ._core import (
    CapabilityError,
    ConfigError,
    IoError,
    ShapeError,
    ToyBackend,
    aggregate_strict,
    apply_perturbation,
    build_judge_prompt,
    compute_isr,
    immunize,
    linf_project,
    load_image,
    loss_dist,
    loss_norm,
    loss_sifm_t,
    parse_verdict,
    pgd_step,
    psnr,
    save_image,
    ssim,
    __version__,
)

__all__ = [
    "CapabilityError",
    "ConfigError",
    "IoError",
    "ShapeError",
    "ToyBackend",
    "aggregate_strict",
    "apply_perturbation",
    "build_judge_prompt",
    "compute_isr",
    "immunize",
    "linf_project",
    "load_image",
    "loss_dist",
    "loss_norm",
    "loss_sifm_t",
    "parse_verdict",
    "pgd_step",
    "psnr",
    "save_image",
    "ssim",
    "__version__",
]
