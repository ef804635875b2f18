"""Sparse-view parallel-beam CT reconstruction toolkit.

Two reconstruction routes from the same sinogram: classical filtered
back projection, and a learned mapping that back projects each view
separately and feeds the stacked result to a convolutional network.
Includes phantom synthesis, from-scratch training, and quantitative
evaluation.
"""

from .estimators import DeepBackProjection, FilteredBackProjection
from .metrics import MetricsReport, evaluate, psnr, ssim
from .nn import Network, TrainingDivergedError
from .phantom import PhantomSpec, generate_dataset, generate_phantom
from .pipeline import (
    SplitManifest,
    TrainConfig,
    extract_patches,
    lr_schedule,
    reconstruct_dbp,
    train,
)
from .projection import (
    BpTensor,
    ProjectionGeometry,
    Sinogram,
    back_project_view,
    build_bp_tensor,
    fbp,
    project_view,
    radon,
    ramp_filter,
    uniform_angles,
)

__version__ = "0.1.0"

__all__ = [
    "BpTensor",
    "DeepBackProjection",
    "FilteredBackProjection",
    "MetricsReport",
    "Network",
    "PhantomSpec",
    "ProjectionGeometry",
    "Sinogram",
    "SplitManifest",
    "TrainConfig",
    "TrainingDivergedError",
    "back_project_view",
    "build_bp_tensor",
    "evaluate",
    "extract_patches",
    "fbp",
    "generate_dataset",
    "generate_phantom",
    "lr_schedule",
    "project_view",
    "psnr",
    "radon",
    "ramp_filter",
    "reconstruct_dbp",
    "ssim",
    "train",
    "uniform_angles",
]
