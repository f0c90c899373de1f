"""Latent-space generation, out-of-sample denoising, and evaluation metrics.

Generation fits a Gaussian to the learned latents and decodes samples drawn
from it; denoising projects a test point onto the latent space and decodes its
generated feature vector. Diagnostics report per-dimension skewness of the
latent cloud (a skewed cloud is the footprint of encoded outliers) and the
mean absolute error of reconstructions.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DataValidationError, FitError
from .feature_maps import MapParams, decode, encode, generated_feature
from .rkm_core import LatentModel, RkmHyper, interconnection, project_oos
from .robust_stats import WeightVector

HIST_BINS = 64
HIST_SPAN_SD = 4.0


@dataclass(frozen=True)
class LatentGaussian:
    """Gaussian over latent space with a cached Cholesky factor."""

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray
    jitter_applied: bool = False


def _cholesky_with_rescue(cov: np.ndarray) -> tuple[np.ndarray, bool]:
    if not np.any(cov):
        raise FitError(
            "generate_eval.fit_latent_gaussian: zero covariance (all latents equal); "
            "a point mass cannot be sampled"
        )
    try:
        return np.linalg.cholesky(cov), False
    except np.linalg.LinAlgError:
        pass
    jittered = cov + 1e-9 * np.eye(cov.shape[0])
    try:
        chol = np.linalg.cholesky(jittered)
    except np.linalg.LinAlgError as exc:
        raise FitError(
            "generate_eval.fit_latent_gaussian: covariance singular even after "
            "1e-9 jitter"
        ) from exc
    warnings.warn("latent covariance was singular; added 1e-9 identity jitter once")
    return chol, True


def latent_gaussian(mean: np.ndarray, cov: np.ndarray) -> LatentGaussian:
    """Build a LatentGaussian from moments, rescuing near-singular covariances
    with a single 1e-9 identity jitter (reported on the result)."""
    mean = np.asarray(mean, dtype=float).reshape(-1)
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    cov = 0.5 * (cov + cov.T)
    chol, jittered = _cholesky_with_rescue(cov)
    return LatentGaussian(mean=mean, cov=cov, chol=chol, jitter_applied=jittered)


def fit_latent_gaussian(
    model: LatentModel,
    weights: WeightVector | None = None,
    robust: bool = False,
    diag: bool = False,
) -> LatentGaussian:
    """Gaussian fit to the latent columns of H.

    robust=False: plain sample mean/covariance (1/N normalization).
    robust=True: weighted moments using the outlier weights, so down-weighted
    points barely contribute. With all weights 1 the two fits coincide.
    diag=True keeps only the diagonal of the covariance.
    """
    pts = model.H.T  # rows are latent vectors
    if robust:
        w = (weights.weights if weights is not None else model.weight_array).astype(float)
        if w.shape[0] != pts.shape[0]:
            raise DataValidationError("generate_eval.fit_latent_gaussian: weight length")
        total = w.sum()
        mean = (w[:, None] * pts).sum(axis=0) / total
        centered = pts - mean
        cov = (w[:, None] * centered).T @ centered / total
    else:
        mean = pts.mean(axis=0)
        centered = pts - mean
        cov = centered.T @ centered / pts.shape[0]
    if diag:
        cov = np.diag(np.diag(cov))
    return latent_gaussian(mean, cov)


def sample_latents(g: LatentGaussian, n: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, g.mean.shape[0]))
    return g.mean[None, :] + z @ g.chol.T


def decode_latents(h_star: np.ndarray, u: np.ndarray, params: MapParams) -> np.ndarray:
    """Decode latent codes through the interconnection matrix: psi(U h*)."""
    h_star = np.atleast_2d(np.asarray(h_star, dtype=float))
    return decode(h_star @ u.T, params)


def sample_and_decode(
    g: LatentGaussian,
    n: int,
    model: LatentModel,
    params: MapParams,
    training_data: np.ndarray | None = None,
    seed: int = 0,
    u: np.ndarray | None = None,
) -> np.ndarray:
    """Draw n latent codes, map them to generated feature vectors through the
    trained latents, and decode. Deterministic for a fixed seed; outputs lie
    strictly in (0, 1). Pass either the training data (features are re-encoded)
    or a precomputed interconnection matrix u."""
    if n == 0:
        return np.empty((0, params.decoder_sizes[-1]))
    h_star = sample_latents(g, n, seed)
    if u is None:
        u = _u_from_training(model, params, training_data)
    return decode_latents(h_star, u, params)


def _u_from_training(model, params, training_data) -> np.ndarray:
    if training_data is None:
        raise DataValidationError(
            "generate_eval: need training_data or a precomputed interconnection matrix"
        )
    features = encode(training_data, params)
    return interconnection(features.T, model.H, model.hyper.eta)


def project_latents(
    x_star_batch: np.ndarray, u: np.ndarray, eigvals: np.ndarray, params: MapParams
) -> np.ndarray:
    """Out-of-sample latents h* = Lambda^{-1} U^T phi(x*), per component."""
    features = encode(x_star_batch, params)
    return (features @ u) / np.asarray(eigvals, dtype=float)[None, :]


def denoise(
    x_star_batch: np.ndarray,
    model: LatentModel,
    params: MapParams,
    training_data: np.ndarray | None = None,
    hyper: RkmHyper | None = None,
    u: np.ndarray | None = None,
) -> np.ndarray:
    """Project out-of-sample points onto the latent space and decode them back.

    Deterministic: no sampling is involved. The latent bottleneck keeps the
    dominant structure and discards what the training latents do not span.
    """
    hyper = hyper or model.hyper
    x_star_batch = np.atleast_2d(np.asarray(x_star_batch, dtype=float))
    if u is None:
        h_star = project_oos(
            x_star_batch, training_data, model.H, params, hyper, model.eigvals
        )
        features = encode(training_data, params)
        phi_hat = generated_feature(features, model.H, h_star, hyper.eta)
        return decode(phi_hat, params)
    h_star = project_latents(x_star_batch, u, model.eigvals, params)
    return decode_latents(h_star, u, params)


def traverse(
    model: LatentModel,
    params: MapParams,
    training_data: np.ndarray | None = None,
    dim: int = 0,
    steps: int = 9,
    span_sd: float = 2.0,
    u: np.ndarray | None = None,
) -> np.ndarray:
    """Decode a linear grid along one latent coordinate, all others held at
    the latent mean (a point-mass sweep; no sampling)."""
    if not 0 <= dim < model.s:
        raise DataValidationError("generate_eval.traverse: latent dim out of range")
    pts = model.H.T
    mean = pts.mean(axis=0)
    sd = pts[:, dim].std()
    grid = np.linspace(mean[dim] - span_sd * sd, mean[dim] + span_sd * sd, steps)
    h_star = np.tile(mean, (steps, 1))
    h_star[:, dim] = grid
    if u is None:
        u = _u_from_training(model, params, training_data)
    return decode_latents(h_star, u, params)


def skewness(values: np.ndarray) -> float:
    """Sample skewness m3 / m2^(3/2); NaN when undefined (fewer than 3 points
    or zero variance)."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] < 3 or np.var(values) == 0.0:
        return float("nan")
    return float(stats.skew(values, bias=True))


@dataclass(frozen=True)
class LatentDiagnostics:
    """Per-dimension skewness (all points vs weight-1 points) and histogram
    counts over +/- 4 robust standard deviations."""

    skew_all: np.ndarray
    skew_inlier: np.ndarray
    hist_counts: np.ndarray  # (s, HIST_BINS)
    hist_edges: np.ndarray  # (s, HIST_BINS + 1)
    fraction_downweighted: float


def latent_diagnostics(model: LatentModel, weights: WeightVector) -> LatentDiagnostics:
    pts = model.H.T
    inlier = weights.weights == 1.0
    s = pts.shape[1]
    skew_all = np.array([skewness(pts[:, j]) for j in range(s)])
    skew_in = np.array([skewness(pts[inlier, j]) for j in range(s)])
    counts = np.empty((s, HIST_BINS))
    edges = np.empty((s, HIST_BINS + 1))
    for j in range(s):
        centre = pts[inlier, j].mean() if inlier.any() else pts[:, j].mean()
        sd = pts[inlier, j].std() if inlier.any() else pts[:, j].std()
        if sd == 0.0:
            sd = 1.0
        edges[j] = np.linspace(centre - HIST_SPAN_SD * sd, centre + HIST_SPAN_SD * sd,
                               HIST_BINS + 1)
        counts[j], _ = np.histogram(pts[:, j], bins=edges[j])
    frac = float(np.mean(~inlier))
    return LatentDiagnostics(skew_all, skew_in, counts, edges, frac)


@dataclass(frozen=True)
class EvalReport:
    """Denoising quality plus latent-shape diagnostics."""

    mae: float
    per_sample_errors: np.ndarray
    latent_skewness: np.ndarray
    fraction_downweighted: float


def mean_absolute_error(reference: np.ndarray, reconstructed: np.ndarray) -> tuple[float, np.ndarray]:
    """MAE over pixels and samples, plus the per-sample mean absolute errors."""
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    reconstructed = np.atleast_2d(np.asarray(reconstructed, dtype=float))
    if reference.shape != reconstructed.shape:
        raise DataValidationError("generate_eval.mean_absolute_error: shape mismatch")
    per_sample = np.mean(np.abs(reference - reconstructed), axis=1)
    return float(per_sample.mean()), per_sample


def evaluate_denoising(
    clean: np.ndarray,
    noisy: np.ndarray,
    model: LatentModel,
    params: MapParams,
    weights: WeightVector,
    training_data: np.ndarray | None = None,
    u: np.ndarray | None = None,
) -> EvalReport:
    """Denoise the noisy batch and score it against the clean reference."""
    reconstructed = denoise(noisy, model, params, training_data, u=u)
    mae, per_sample = mean_absolute_error(clean, reconstructed)
    diag = latent_diagnostics(model, weights)
    return EvalReport(
        mae=mae,
        per_sample_errors=per_sample,
        latent_skewness=diag.skew_inlier,
        fraction_downweighted=diag.fraction_downweighted,
    )
