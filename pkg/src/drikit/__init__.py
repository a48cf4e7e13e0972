"""Measure whether mixing an auxiliary degradation into training helps an anchor restoration task."""
from .analysis import dpd_decide, evaluate, pearson, proportion_sweep, psnr, ssim
from .degrade import build_paired_dataset
from .dri import DriConfig, DriData, Schedule, run_dri
from .models import ModelConfig, init_model
from .numcore import SgdConfig

__all__ = [
    "DriConfig", "DriData", "ModelConfig", "Schedule", "SgdConfig", "build_paired_dataset",
    "dpd_decide", "evaluate", "init_model", "pearson", "proportion_sweep", "psnr", "run_dri", "ssim",
]
