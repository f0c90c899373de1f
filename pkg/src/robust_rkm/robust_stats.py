"""Robust location/scatter estimation of latent variables and outlier weights.

The estimator is the minimum covariance determinant (MCD): find the subset of
n_mcd points whose sample covariance has the smallest determinant, via random
(s+1)-point starts refined by concentration steps. Points are then flagged by
their squared Mahalanobis distance against a chi-squared cutoff, and flagged
points receive a small positive weight (1e-4) instead of zero so the diagonal
weighting matrix stays positive definite.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.linalg import solve_triangular

from .errors import DataValidationError, DegenerateScatter, SubsetTooSmall

DOWNWEIGHT = 1e-4

# C-step iteration controls: stop when the determinant's relative decrease
# falls below DET_RTOL or after MAX_CSTEPS iterations.
DET_RTOL = 1e-12
MAX_CSTEPS = 100


@dataclass(frozen=True)
class McdEstimate:
    """Robust mean/covariance with the support subset that produced them.

    cov carries the consistency correction (see consistency_factor); raw_cov
    is the plain sample covariance over the support.
    """

    mean: np.ndarray
    cov: np.ndarray
    raw_cov: np.ndarray
    support: np.ndarray
    det_raw: float
    consistency: float
    det_traces: tuple[tuple[float, ...], ...] = ()


@dataclass(frozen=True)
class WeightVector:
    """Per-sample weights in {1, 1e-4} plus the distances/threshold behind them."""

    weights: np.ndarray
    distances_sq: np.ndarray
    threshold: float
    alpha: float
    n_mcd: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        d = np.asarray(self.distances_sq, dtype=float)
        if w.shape != d.shape:
            raise DataValidationError("robust_stats.WeightVector: shape mismatch")
        if not np.all((w == 1.0) | (w == DOWNWEIGHT)):
            raise DataValidationError("robust_stats.WeightVector: weights must be 1 or 1e-4")
        if not np.array_equal(w == 1.0, d <= self.threshold):
            raise DataValidationError(
                "robust_stats.WeightVector: weights inconsistent with distances/threshold"
            )
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "distances_sq", d)

    @classmethod
    def uniform(cls, n: int) -> "WeightVector":
        """All-ones weights (no robust step yet)."""
        return cls(
            weights=np.ones(n),
            distances_sq=np.zeros(n),
            threshold=np.inf,
            alpha=1.0,
            n_mcd=n,
        )

    def take(self, idx: np.ndarray) -> "WeightVector":
        """Consistent sub-vector for a minibatch."""
        return WeightVector(
            weights=self.weights[idx],
            distances_sq=self.distances_sq[idx],
            threshold=self.threshold,
            alpha=self.alpha,
            n_mcd=self.n_mcd,
        )

    def __len__(self) -> int:
        return self.weights.shape[0]


def chi2_cdf(dof: int, x) -> np.ndarray:
    """Chi-squared CDF, i.e. the regularized lower incomplete gamma P(dof/2, x/2)."""
    return special.gammainc(dof / 2.0, np.asarray(x, dtype=float) / 2.0)


def chi2_quantile(dof: int, p: float) -> float:
    """Inverse chi-squared CDF by safeguarded Newton on the incomplete gamma.

    Absolute tolerance 1e-9 on the CDF value.
    """
    if dof < 1:
        raise DataValidationError("robust_stats.chi2_quantile: dof must be >= 1")
    if not 0.0 < p < 1.0:
        raise DataValidationError("robust_stats.chi2_quantile: p must lie in (0, 1)")
    lo, hi = 0.0, float(dof)
    while chi2_cdf(dof, hi) < p:
        hi *= 2.0
        if hi > 1e12:
            break
    x = 0.5 * (lo + hi)
    half = dof / 2.0
    log_norm = special.gammaln(half) + half * np.log(2.0)
    for _ in range(300):
        f = float(chi2_cdf(dof, x)) - p
        if f > 0:
            hi = x
        else:
            lo = x
        if abs(f) <= 1e-12:
            break
        # chi2 pdf at x, computed in log space to survive extreme quantiles
        log_pdf = (half - 1.0) * np.log(x) - x / 2.0 - log_norm if x > 0 else -np.inf
        pdf = np.exp(log_pdf)
        step_ok = pdf > 0 and np.isfinite(pdf)
        x_new = x - f / pdf if step_ok else 0.5 * (lo + hi)
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        # relative-only stop: an absolute floor would end bisection while
        # far-tail quantiles (q << 1) still miss the CDF tolerance
        if abs(x_new - x) <= 1e-15 * x_new:
            x = x_new
            break
        x = x_new
    return float(x)


def _chol(cov: np.ndarray) -> np.ndarray:
    """Cholesky factor of cov, or raise DegenerateScatter."""
    if not np.all(np.isfinite(cov)):
        raise DegenerateScatter("robust_stats: covariance has non-finite entries")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise DegenerateScatter(
            "robust_stats: covariance is singular (points may lie on a hyperplane "
            "or be duplicated)"
        ) from exc


def _mahal_sq(points: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    # one triangular solve against the Cholesky factor; never form an inverse
    centered = points - mean
    t = solve_triangular(chol, centered.T, lower=True, check_finite=False)
    return np.sum(t * t, axis=0)


def mahalanobis_sq(points: np.ndarray, est: McdEstimate) -> np.ndarray:
    """Squared Mahalanobis distances d_i^2 = (h_i - mean)^T cov^{-1} (h_i - mean).

    Computed through the Cholesky factor of est.cov (triangular solve plus a
    squared norm); the inverse is never formed.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    chol = _chol(est.cov)
    d = _mahal_sq(points, est.mean, chol)
    return np.maximum(d, 0.0)


def _subset_stats(points: np.ndarray, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    sub = points[idx]
    mean = sub.mean(axis=0)
    cov = np.cov(sub, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    sign, logdet = np.linalg.slogdet(cov)
    det = sign * np.exp(logdet) if sign > 0 else 0.0
    return mean, cov, float(det)


def consistency_factor(fraction: float, dim: int) -> float:
    """Scale factor restoring Fisher consistency of the raw MCD covariance.

    The covariance of the most central `fraction` of a Gaussian underestimates
    the true scatter; dividing the chi-squared mass identity gives
    c = fraction / CDF_{chi2(dim+2)}(q) with q the chi2(dim) quantile at
    `fraction`. Applied before thresholding so cutoffs live on the calibrated
    scale.
    """
    if fraction >= 1.0:
        return 1.0
    q = chi2_quantile(dim, fraction)
    return float(fraction / chi2_cdf(dim + 2, q))


def _c_steps(
    points: np.ndarray,
    mean: np.ndarray,
    cov: np.ndarray,
    n_mcd: int,
    max_steps: int,
) -> tuple[np.ndarray, np.ndarray, float, np.ndarray, list[float]]:
    """Iterate concentration steps from an initial (mean, cov) estimate.

    Returns (mean, cov, det, support, determinant trace). Each step keeps the
    n_mcd points closest in Mahalanobis distance and refits; the determinant
    never increases (checked every iteration).
    """
    dets: list[float] = []
    support = None
    det = np.inf
    for _ in range(max_steps):
        chol = _chol(cov)
        d = _mahal_sq(points, mean, chol)
        new_support = np.sort(np.argpartition(d, n_mcd - 1)[:n_mcd])
        mean, cov, new_det = _subset_stats(points, new_support)
        if new_det <= 0 or not np.isfinite(new_det):
            raise DegenerateScatter(
                "robust_stats.fast_mcd: subset covariance determinant collapsed to zero"
            )
        if dets:
            assert new_det <= dets[-1] * (1.0 + 1e-9), "C-step determinant increased"
        dets.append(new_det)
        converged = det < np.inf and (det - new_det) <= DET_RTOL * det
        same = support is not None and np.array_equal(support, new_support)
        support, det = new_support, new_det
        if converged or same:
            break
    return mean, cov, det, support, dets


def fast_mcd(
    points: np.ndarray,
    n_mcd: int,
    restarts: int = 50,
    seed: int = 0,
    keep_best: int = 10,
) -> McdEstimate:
    """Minimum covariance determinant by random starts plus concentration steps.

    Each restart draws a random (s+1)-point subset, refines it with two
    concentration steps, and the `keep_best` restarts with the lowest
    determinants are iterated to convergence. The winner is selected by
    (determinant, restart index), so the result is deterministic for a fixed
    seed regardless of evaluation order.

    Raises
    ------
    SubsetTooSmall
        If n_mcd is below floor((N+s+1)/2), the breakdown-optimal minimum.
    DegenerateScatter
        If every restart collapses onto a singular covariance.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, s = points.shape
    if not np.all(np.isfinite(points)):
        raise DataValidationError("robust_stats.fast_mcd: non-finite points")
    lower = (n + s + 1) // 2
    if n_mcd < lower:
        raise SubsetTooSmall(
            f"robust_stats.fast_mcd: n_mcd={n_mcd} below breakdown minimum {lower}"
        )
    if n_mcd > n:
        raise DataValidationError("robust_stats.fast_mcd: n_mcd exceeds sample count")
    if n <= s:
        raise DegenerateScatter(
            "robust_stats.fast_mcd: need more points than dimensions (N > s)"
        )
    if n_mcd == n:
        mean, cov, det = _subset_stats(points, np.arange(n))
        _chol(cov)
        c = consistency_factor(1.0, s)
        return McdEstimate(mean, cov * c, cov, np.arange(n), det, c, ())

    rng = np.random.default_rng(seed)
    fraction = n_mcd / n
    survivors = []  # (det, restart index, mean, cov, support, trace)
    traces: dict[int, list[float]] = {}
    for r in range(restarts):
        idx = rng.choice(n, size=s + 1, replace=False)
        try:
            mean, cov, det = _subset_stats(points, idx)
            # grow degenerate starting subsets until the covariance is usable
            while True:
                try:
                    _chol(cov)
                    break
                except DegenerateScatter:
                    if len(idx) >= n:
                        raise
                    extra = rng.choice(np.setdiff1d(np.arange(n), idx), size=1)
                    idx = np.concatenate([idx, extra])
                    mean, cov, det = _subset_stats(points, idx)
            mean, cov, det, support, dets = _c_steps(points, mean, cov, n_mcd, max_steps=2)
        except DegenerateScatter:
            continue
        traces[r] = dets
        survivors.append((det, r, mean, cov, support))
    if not survivors:
        raise DegenerateScatter(
            "robust_stats.fast_mcd: all restarts produced singular covariances"
        )
    survivors.sort(key=lambda t: (t[0], t[1]))

    best = None
    for det, r, mean, cov, support in survivors[: max(1, keep_best)]:
        try:
            mean, cov, det, support, dets = _c_steps(points, mean, cov, n_mcd, MAX_CSTEPS)
        except DegenerateScatter:
            continue
        traces[r] = traces[r] + dets
        if best is None or (det, r) < (best[0], best[1]):
            best = (det, r, mean, cov, support)
    if best is None:
        raise DegenerateScatter(
            "robust_stats.fast_mcd: refinement collapsed onto singular covariances"
        )
    det, _, mean, cov, support = best
    _chol(cov)
    c = consistency_factor(fraction, s)
    det_traces = tuple(tuple(traces[r]) for r in sorted(traces))
    return McdEstimate(mean, cov * c, cov, support, det, c, det_traces)


def compute_weights(
    points: np.ndarray,
    alpha: float = 0.975,
    n_mcd_fraction: float = 0.75,
    seed: int = 0,
    restarts: int = 50,
) -> WeightVector:
    """Down-weight latent outliers: weight 1 if d_i^2 <= chi2(s, alpha), else 1e-4."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, s = points.shape
    if not 0.5 <= n_mcd_fraction <= 1.0:
        raise DataValidationError(
            "robust_stats.compute_weights: n_mcd_fraction must lie in [0.5, 1]"
        )
    n_mcd = int(np.floor(n * n_mcd_fraction))
    est = fast_mcd(points, n_mcd=n_mcd, restarts=restarts, seed=seed)
    d_sq = mahalanobis_sq(points, est)
    threshold = chi2_quantile(s, alpha)
    weights = np.where(d_sq <= threshold, 1.0, DOWNWEIGHT)
    return WeightVector(
        weights=weights,
        distances_sq=d_sq,
        threshold=threshold,
        alpha=alpha,
        n_mcd=n_mcd,
    )
