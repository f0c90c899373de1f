"""Weighted conjugate feature duality: dual objective, weighted eigenproblem,
stationarity diagnostics, and out-of-sample latent projection.

The training-side identity implemented here: pairing a quadratic error term
with dual latent variables through the weighted Fenchel-Young inequality turns
weighted kernel PCA into the eigenproblem (1/eta) [D K] H^T = H^T Lambda, and
at any eigensolution the dual objective evaluates to zero.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .errors import DataValidationError, EigFailure, ShortSpectrum
from .kernels import GramMatrix, KernelSpec, kernel_matrix
from .robust_stats import WeightVector


@dataclass(frozen=True)
class RkmHyper:
    """Regularization weights and latent dimension of the kernel machine."""

    eta: float = 1.0
    lambda_reg: float = 1.0
    latent_dim: int = 2

    def __post_init__(self):
        if not self.eta > 0:
            raise DataValidationError("rkm_core.RkmHyper: eta must be > 0")
        if not self.lambda_reg > 0:
            raise DataValidationError("rkm_core.RkmHyper: lambda_reg must be > 0")
        if int(self.latent_dim) < 1:
            raise DataValidationError("rkm_core.RkmHyper: latent_dim must be >= 1")


@dataclass(frozen=True)
class LatentModel:
    """Trained latent space: H (s x N, columns are per-sample latents),
    eigenvalues sorted non-increasing, the weights used at solve time, and
    the hyperparameters. weights is the WeightVector from the robust step
    when there was one, otherwise the plain positive array that was used."""

    H: np.ndarray
    eigvals: np.ndarray
    weights: WeightVector | np.ndarray
    hyper: RkmHyper

    @property
    def n(self) -> int:
        return self.H.shape[1]

    @property
    def s(self) -> int:
        return self.H.shape[0]

    @property
    def weight_array(self) -> np.ndarray:
        w = self.weights
        return w.weights if isinstance(w, WeightVector) else np.asarray(w, dtype=float)


def _as_weight_array(d, n: int) -> np.ndarray:
    w = d.weights if isinstance(d, WeightVector) else np.asarray(d, dtype=float)
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.shape[0] != n:
        raise DataValidationError("rkm_core: weight vector length mismatch")
    if not np.all(w > 0):
        raise DataValidationError("rkm_core: weights must be strictly positive")
    return w


def fenchel_gap(e: np.ndarray, h: np.ndarray, d, lam: float) -> float:
    """Slack of the weighted Fenchel-Young inequality.

    (1/2 lam) e^T D e + (lam/2) h^T D^{-1} h - e^T h, which is >= 0 for any
    positive diagonal D and lam > 0; zero exactly when e = lam D^{-1} h.
    """
    e = np.asarray(e, dtype=float).reshape(-1)
    h = np.asarray(h, dtype=float).reshape(-1)
    if e.shape != h.shape:
        raise DataValidationError("rkm_core.fenchel_gap: e and h must match in length")
    w = _as_weight_array(d, e.shape[0])
    if not lam > 0:
        raise DataValidationError("rkm_core.fenchel_gap: lam must be > 0")
    return float(
        0.5 / lam * np.dot(e * w, e) + 0.5 * lam * np.dot(h / w, h) - np.dot(e, h)
    )


def dual_objective(
    features: np.ndarray,
    u: np.ndarray,
    h: np.ndarray,
    d,
    hyper: RkmHyper,
    eigvals: np.ndarray | None = None,
) -> float:
    """Dual training objective
    sum_i { -phi_i^T U h_i + (lam_i/2) D_ii^{-1} h_i^T h_i } + (eta/2) tr(U^T U).

    features: d_f x N (columns phi_i), u: d_f x s, h: s x N.
    With eigvals given, the quadratic latent term uses the per-component
    eigenvalue lambda_j in place of the scalar hyper.lambda_reg; each
    eigenpair of the weighted eigenproblem then contributes exactly zero,
    so the whole objective vanishes at an eigensolution.
    """
    features = np.asarray(features, dtype=float)
    u = np.asarray(u, dtype=float)
    h = np.asarray(h, dtype=float)
    n = features.shape[1]
    if h.shape[1] != n or u.shape[0] != features.shape[0] or u.shape[1] != h.shape[0]:
        raise DataValidationError("rkm_core.dual_objective: inconsistent shapes")
    w = _as_weight_array(d, n)
    lam = hyper.lambda_reg * np.ones(h.shape[0]) if eigvals is None else np.asarray(eigvals)
    cross = -float(np.sum((u.T @ features) * h))
    quad = 0.5 * float(np.sum((lam[:, None] * h * h) / w[None, :]))
    reg = 0.5 * hyper.eta * float(np.sum(u * u))
    return cross + quad + reg


def solve_weighted_eig(
    k: GramMatrix | np.ndarray,
    d,
    hyper: RkmHyper,
    normalize_by_eigenvalue: bool = False,
) -> LatentModel:
    """Top-s eigenpairs of (1/eta) D K via the equivalent symmetric problem.

    With M = D^{1/2} K D^{1/2} / eta, an eigenvector v of M maps to an
    eigenvector w = D^{1/2} v of (1/eta) D K with the same eigenvalue. The
    returned rows of H are the w, unit-normalized (or scaled by sqrt(lambda_j)
    when normalize_by_eigenvalue is set), with signs fixed so each vector's
    largest-magnitude entry is positive.

    Raises
    ------
    ShortSpectrum
        If fewer than s eigenvalues exceed 1e-12 * trace(M); carries the
        achievable dimension.
    EigFailure
        If the solver fails or a returned pair violates the residual bound
        ||(1/eta) D K w - lambda w|| <= 1e-8 ||(1/eta) D K||_F.
    """
    kv = k.values if isinstance(k, GramMatrix) else np.asarray(k, dtype=float)
    n = kv.shape[0]
    s = int(hyper.latent_dim)
    if s > n:
        raise DataValidationError("rkm_core.solve_weighted_eig: latent_dim exceeds N")
    w = _as_weight_array(d, n)
    root = np.sqrt(w)
    m = (root[:, None] * kv * root[None, :]) / hyper.eta
    m = 0.5 * (m + m.T)
    try:
        vals, vecs = eigh(m)
    except np.linalg.LinAlgError as exc:
        raise EigFailure("rkm_core.solve_weighted_eig: symmetric eigensolver failed") from exc
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    usable = int(np.sum(vals > 1e-12 * np.trace(m)))
    if usable < s:
        raise ShortSpectrum(
            f"rkm_core.solve_weighted_eig: only {usable} usable eigenvalues for "
            f"latent_dim={s}",
            achievable=usable,
        )
    vals, vecs = vals[:s], vecs[:, :s]
    ht = root[:, None] * vecs  # columns are eigenvectors w of (1/eta) D K
    ht /= np.linalg.norm(ht, axis=0, keepdims=True)
    # reproducible sign: largest-magnitude entry positive
    flip = ht[np.argmax(np.abs(ht), axis=0), np.arange(s)] < 0
    ht[:, flip] *= -1.0
    weighted_k = (w[:, None] * kv) / hyper.eta
    resid = np.linalg.norm(weighted_k @ ht - ht * vals[None, :], axis=0)
    if np.any(resid > 1e-8 * np.linalg.norm(weighted_k)):
        raise EigFailure(
            "rkm_core.solve_weighted_eig: eigenpair residual exceeds contract bound"
        )
    if normalize_by_eigenvalue:
        ht = ht * np.sqrt(vals)[None, :]
    kept = d if isinstance(d, WeightVector) else w
    return LatentModel(H=ht.T, eigvals=vals, weights=kept, hyper=hyper)


def interconnection(features: np.ndarray, h: np.ndarray, eta: float) -> np.ndarray:
    """U = (1/eta) sum_i phi_i h_i^T for features d_f x N and latents s x N."""
    return (np.asarray(features, dtype=float) @ np.asarray(h, dtype=float).T) / eta


def stationarity_residuals(
    features: np.ndarray, model: LatentModel, d, u: np.ndarray | None = None
) -> tuple[float, float]:
    """How far a latent model sits from the stationarity conditions.

    r1 = max_i || Lambda D_ii^{-1} h_i - U^T phi_i ||; r2 = ||U - (1/eta)
    Phi H^T||_F. With u omitted, U is rebuilt from the closed form and r2 is
    zero by construction (kept as a plumbing self-check); passing a trainer's
    own U makes r2 measure its drift from the closed form.
    """
    features = np.asarray(features, dtype=float)
    n = features.shape[1]
    w = _as_weight_array(d, n)
    u_closed = interconnection(features, model.H, model.hyper.eta)
    if u is None:
        u = u_closed
    lhs = model.eigvals[:, None] * model.H / w[None, :]
    rhs = u.T @ features
    r1 = float(np.max(np.linalg.norm(lhs - rhs, axis=0)))
    r2 = float(np.linalg.norm(u - u_closed))
    return r1, r2


def project_oos(
    x_star: np.ndarray,
    training_data: np.ndarray,
    h: np.ndarray,
    spec,
    hyper: RkmHyper,
    eigvals: np.ndarray,
) -> np.ndarray:
    """Latent projection of out-of-sample points:
    h*_j = (1 / (lambda_j eta)) sum_i H_{j,i} k(x_i, x*).

    The divisor uses the per-component eigenvalue lambda_j. `spec` is either a
    KernelSpec (implicit path), a MapParams (explicit path, where
    k(x, y) = phi(x)^T phi(y) through the trained feature map), or any
    callable feature map.

    Returns an (m, s) array for m query points; a single vector in gives a
    single latent vector out.
    """
    x_star = np.asarray(x_star, dtype=float)
    single = x_star.ndim == 1
    xq = np.atleast_2d(x_star)
    training_data = np.atleast_2d(np.asarray(training_data, dtype=float))
    if isinstance(spec, KernelSpec):
        krow = kernel_matrix(xq, training_data, spec)
    else:
        if callable(spec):
            encode_fn = spec
        else:
            from .feature_maps import encode  # deferred: feature_maps imports us

            encode_fn = lambda x: encode(x, spec)
        krow = encode_fn(xq) @ encode_fn(training_data).T
    lam = np.asarray(eigvals, dtype=float)
    out = (krow @ h.T) / (lam[None, :] * hyper.eta)
    return out[0] if single else out
