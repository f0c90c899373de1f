"""Robust generative restricted kernel machines.

Weighted kernel PCA through conjugate feature duality, with MCD-based
down-weighting of latent outliers, jointly trained feature/pre-image maps,
and latent-space generation/denoising.
"""

from .checkpointing import Checkpoint, load_checkpoint, save_checkpoint
from .data_io import DatasetHandle, contaminate, load_csv, load_idx
from .feature_maps import (
    LossBreakdown,
    MapParams,
    combined_loss,
    decode,
    encode,
    generated_feature,
    grad_combined_loss,
    init_params,
)
from .generate_eval import (
    EvalReport,
    LatentGaussian,
    denoise,
    evaluate_denoising,
    fit_latent_gaussian,
    latent_diagnostics,
    sample_and_decode,
)
from .kernels import GramMatrix, KernelSpec, center, gram
from .rkm_core import (
    LatentModel,
    RkmHyper,
    dual_objective,
    fenchel_gap,
    project_oos,
    solve_weighted_eig,
    stationarity_residuals,
)
from .robust_stats import (
    McdEstimate,
    WeightVector,
    chi2_quantile,
    compute_weights,
    fast_mcd,
    mahalanobis_sq,
)
from .trainer import TrainConfig, TrainReport, TrainResult, resume, train

__version__ = "0.1.0"
