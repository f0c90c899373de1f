"""Desk-scale denoising benchmark on handwritten digits.

Trains a robust and a non-robust model on the same contaminated training set
and compares the test-set denoising error and the latent skewness. Real MNIST
image files are used when a path is supplied (or RRKM_MNIST env var); the
bundled scikit-learn 8x8 digits are the self-contained fallback. Either way
the images flow through the IDX container so the binary loader is exercised.
"""

import os
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data_io import DatasetHandle, contaminate, load_idx, save_idx
from .generate_eval import denoise, latent_diagnostics, mean_absolute_error
from .trainer import TrainConfig, train

MNIST_ENV = "RRKM_MNIST"


def load_digit_images(n_images: int, mnist_path: str | None = None):
    """Return (rows in [0,1], source name) for a digit dataset of n_images."""
    path = mnist_path or os.environ.get(MNIST_ENV)
    if path and Path(path).exists():
        return load_idx(path, limit=n_images).rows, "mnist"
    from sklearn.datasets import load_digits

    images = load_digits().images / 16.0  # (1797, 8, 8) with max 16
    if n_images > images.shape[0]:
        raise ValueError(f"only {images.shape[0]} bundled digit images available")
    flat = images.reshape(images.shape[0], -1)[:n_images]
    # round trip through the binary image container
    with tempfile.TemporaryDirectory() as tmp:
        idx_path = Path(tmp) / "digits-idx3-ubyte"
        save_idx(idx_path, flat, side=(8, 8))
        rows = load_idx(idx_path, limit=n_images).rows
    return rows, "sklearn-digits"


def digits_config(d: int, seed: int) -> TrainConfig:
    """Training settings scaled down to the 8x8 digit images.

    The dense desk-scale maps want a higher learning rate than full-scale
    convolutional ones; reweighting early leaves most epochs to train on the
    cleaned weights."""
    return TrainConfig(
        epochs=25,
        minibatch=200,
        lr=1e-3,
        c_stab=0.01,
        c_acc=100.0,
        eta=1.0,
        lambda_reg=1.0,
        latent_dim=10,
        alpha=0.975,
        mcd_fraction=0.75,
        reweight_epoch=5,
        seed=seed,
        feature_dim=128,
        enc_hidden=(256,),
        dec_hidden=(256,),
    )


@dataclass(frozen=True)
class DenoisingRun:
    """Per-seed outcome of the robust vs non-robust comparison."""

    seed: int
    mae_robust: float
    mae_plain: float
    skew_robust_inlier: float
    skew_plain_all: float
    fraction_downweighted: float


def denoising_benchmark(
    seed: int,
    n_train: int = 1000,
    n_test: int = 300,
    contamination: float = 0.2,
    noise_mean: float = 0.5,
    noise_sd: float = 0.5,
    cfg: TrainConfig | None = None,
    mnist_path: str | None = None,
) -> DenoisingRun:
    """One seed of the contaminated-training experiment.

    Both models see the identical training set where a random 20% of images
    carry additive Gaussian noise; the test set is disjoint, fully noised for
    the denoising pass, and scored against its clean version.
    """
    rows, _ = load_digit_images(n_train + n_test, mnist_path=mnist_path)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(rows.shape[0])
    train_clean = rows[perm[:n_train]]
    test_clean = rows[perm[n_train : n_train + n_test]]

    train_handle, _ = contaminate(
        DatasetHandle(rows=train_clean, source="digits"),
        fraction=contamination,
        noise_mean=noise_mean,
        noise_sd=noise_sd,
        seed=seed + 1,
    )
    test_handle, _ = contaminate(
        DatasetHandle(rows=test_clean, source="digits-test"),
        fraction=1.0,
        noise_mean=noise_mean,
        noise_sd=noise_sd,
        seed=seed + 2,
    )

    base_cfg = cfg or digits_config(train_clean.shape[1], seed)
    base_cfg = replace(base_cfg, seed=seed)
    robust = train(train_handle.rows, replace(base_cfg, robust=True))
    plain = train(train_handle.rows, replace(base_cfg, robust=False))

    out_r = denoise(test_handle.rows, robust.model, robust.params, u=robust.interconnection)
    out_p = denoise(test_handle.rows, plain.model, plain.params, u=plain.interconnection)
    mae_r, _ = mean_absolute_error(test_clean, out_r)
    mae_p, _ = mean_absolute_error(test_clean, out_p)

    diag_r = latent_diagnostics(robust.model, robust.weights)
    diag_p = latent_diagnostics(plain.model, plain.weights)
    skew_r = float(np.nanmean(np.abs(diag_r.skew_inlier)))
    skew_p = float(np.nanmean(np.abs(diag_p.skew_all)))
    return DenoisingRun(
        seed=seed,
        mae_robust=mae_r,
        mae_plain=mae_p,
        skew_robust_inlier=skew_r,
        skew_plain_all=skew_p,
        fraction_downweighted=diag_r.fraction_downweighted,
    )
