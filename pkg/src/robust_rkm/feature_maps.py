"""Explicit feature map and pre-image map as small dense networks.

Hidden layers use PReLU with a fixed slope (0.2 by default); the encoder's
output layer is linear and the decoder's output layer is a sigmoid, so decoded
samples always land in (0, 1). Forward and reverse passes are written out by
hand; gradients of the combined training loss treat the per-batch latents and
eigenvalues as constants (the eigenproblem is re-solved between steps, not
differentiated through).
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import DataValidationError, NumericalFault
from .kernels import KernelSpec, gram
from .rkm_core import RkmHyper, dual_objective, interconnection, solve_weighted_eig
from .robust_stats import WeightVector


@dataclass(frozen=True)
class MapParams:
    """Architecture plus flat parameter vectors for the two maps.

    encoder_sizes runs input -> feature space, decoder_sizes feature space ->
    input; each consecutive pair is a dense layer (weights then bias in the
    flat vectors, layer by layer).
    """

    encoder_sizes: tuple[int, ...]
    decoder_sizes: tuple[int, ...]
    theta: np.ndarray
    zeta: np.ndarray
    prelu_alpha: float = 0.2

    def __post_init__(self):
        enc = tuple(int(v) for v in self.encoder_sizes)
        dec = tuple(int(v) for v in self.decoder_sizes)
        if len(enc) < 2 or len(dec) < 2:
            raise DataValidationError("feature_maps.MapParams: need at least one layer per map")
        if dec[0] != enc[-1]:
            raise DataValidationError(
                "feature_maps.MapParams: decoder input dim must equal encoder output dim"
            )
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        zeta = np.asarray(self.zeta, dtype=float).reshape(-1)
        if theta.shape[0] != param_count(enc) or zeta.shape[0] != param_count(dec):
            raise DataValidationError(
                "feature_maps.MapParams: parameter vector length does not match arch"
            )
        object.__setattr__(self, "encoder_sizes", enc)
        object.__setattr__(self, "decoder_sizes", dec)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "zeta", zeta)

    @property
    def input_dim(self) -> int:
        return self.encoder_sizes[0]

    @property
    def feature_dim(self) -> int:
        return self.encoder_sizes[-1]

    def with_vectors(self, theta: np.ndarray, zeta: np.ndarray) -> "MapParams":
        return replace(self, theta=theta, zeta=zeta)


@dataclass(frozen=True)
class LossBreakdown:
    """Terms of the combined training loss; total = j_t + stab + recon."""

    j_t: float
    stab: float
    recon: float
    total: float
    c_stab: float
    c_acc: float


def param_count(sizes: tuple[int, ...]) -> int:
    return sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))


def unpack(flat: np.ndarray, sizes: tuple[int, ...]) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a flat parameter vector into per-layer (weight, bias) views."""
    layers = []
    pos = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = flat[pos : pos + fan_out * fan_in].reshape(fan_out, fan_in)
        pos += fan_out * fan_in
        b = flat[pos : pos + fan_out]
        pos += fan_out
        layers.append((w, b))
    return layers


def init_params(
    encoder_sizes: tuple[int, ...],
    decoder_sizes: tuple[int, ...],
    seed: int = 0,
    prelu_alpha: float = 0.2,
) -> MapParams:
    """Uniform Glorot initialization for weights, zero biases."""
    rng = np.random.default_rng(seed)

    def _init(sizes):
        parts = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            parts.append(rng.uniform(-bound, bound, size=fan_out * fan_in))
            parts.append(np.zeros(fan_out))
        return np.concatenate(parts)

    return MapParams(
        encoder_sizes=tuple(encoder_sizes),
        decoder_sizes=tuple(decoder_sizes),
        theta=_init(encoder_sizes),
        zeta=_init(decoder_sizes),
        prelu_alpha=prelu_alpha,
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward(x, layers, alpha: float, sigmoid_out: bool):
    a = x
    caches = []
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = a @ w.T + b
        caches.append((a, z))
        if i < last:
            a = np.where(z > 0, z, alpha * z)
        elif sigmoid_out:
            a = _sigmoid(z)
        else:
            a = z
    return a, caches


def _backward(dout, layers, caches, out, alpha: float, sigmoid_out: bool):
    """Reverse pass. Returns (flat parameter gradient, gradient w.r.t. input)."""
    grads = [None] * len(layers)
    last = len(layers) - 1
    da = dout
    for i in range(last, -1, -1):
        a_in, z = caches[i]
        if i == last:
            dz = da * out * (1.0 - out) if sigmoid_out else da
        else:
            dz = da * np.where(z > 0, 1.0, alpha)
        dw = dz.T @ a_in
        db = dz.sum(axis=0)
        grads[i] = (dw, db)
        da = dz @ layers[i][0]
    flat = np.concatenate([np.concatenate([dw.ravel(), db]) for dw, db in grads])
    return flat, da


def _check_params(params: MapParams):
    if not (np.all(np.isfinite(params.theta)) and np.all(np.isfinite(params.zeta))):
        raise NumericalFault("feature_maps: non-finite map parameters")


def encode(x: np.ndarray, params: MapParams) -> np.ndarray:
    """Feature map phi applied to a batch (rows are samples)."""
    _check_params(params)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out, _ = _forward(x, unpack(params.theta, params.encoder_sizes), params.prelu_alpha, False)
    if not np.all(np.isfinite(out)):
        raise NumericalFault("feature_maps.encode: non-finite output")
    return out


def decode(f: np.ndarray, params: MapParams) -> np.ndarray:
    """Pre-image map psi applied to a batch of feature vectors; outputs in (0, 1)."""
    _check_params(params)
    f = np.atleast_2d(np.asarray(f, dtype=float))
    out, _ = _forward(f, unpack(params.zeta, params.decoder_sizes), params.prelu_alpha, True)
    if not np.all(np.isfinite(out)):
        raise NumericalFault("feature_maps.decode: non-finite output")
    return out


def generated_feature(
    features: np.ndarray, h: np.ndarray, h_star: np.ndarray, eta: float
) -> np.ndarray:
    """Feature-space point induced by a latent code:
    phi_hat(x*) = [ (1/eta) sum_i phi_i h_i^T ] h*.

    features holds the training features as rows (N x d_f), h is s x N.
    Accepts a single latent vector or a batch of rows.
    """
    features = np.asarray(features, dtype=float)
    h = np.asarray(h, dtype=float)
    h_star = np.asarray(h_star, dtype=float)
    return (h_star @ h @ features) / eta


def batch_latents(
    features: np.ndarray, d_batch, hyper: RkmHyper
) -> tuple[np.ndarray, np.ndarray]:
    """Latents/eigenvalues of the linear-kernel eigenproblem on a feature batch."""
    k = gram(features, KernelSpec(kind="linear"))
    model = solve_weighted_eig(k, d_batch, hyper)
    return model.H, model.eigvals


def _loss_forward(batch, params, d_batch, hyper, c_stab, c_acc, latents):
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    m = batch.shape[0]
    w = d_batch.weights if isinstance(d_batch, WeightVector) else np.asarray(d_batch, float)
    enc_layers = unpack(params.theta, params.encoder_sizes)
    dec_layers = unpack(params.zeta, params.decoder_sizes)
    features, enc_cache = _forward(batch, enc_layers, params.prelu_alpha, False)
    if latents is None:
        h, lam = batch_latents(features, d_batch, hyper)
    else:
        h, lam = latents
    u = interconnection(features.T, h, hyper.eta)
    # scalar-lambda objective: the latent quadratic term is a constant w.r.t.
    # the maps, and j_t drifting negative as features grow is what the
    # squared stability term pushes back against
    j_t = dual_objective(features.T, u, h, w, hyper)
    phi_hat = h.T @ u.T
    xhat, dec_cache = _forward(phi_hat, dec_layers, params.prelu_alpha, True)
    per_sample = np.mean((batch - xhat) ** 2, axis=1)
    recon = c_acc / m * float(np.dot(w, per_sample))
    stab = 0.5 * c_stab * j_t**2
    total = j_t + stab + recon
    if not np.isfinite(total):
        raise NumericalFault("feature_maps.combined_loss: non-finite loss")
    breakdown = LossBreakdown(j_t, stab, recon, total, c_stab, c_acc)
    state = (batch, m, w, enc_layers, dec_layers, features, enc_cache, h, lam, u, phi_hat,
             xhat, dec_cache)
    return breakdown, state


def combined_loss(
    batch: np.ndarray,
    params: MapParams,
    d_batch,
    hyper: RkmHyper,
    c_stab: float,
    c_acc: float,
    latents: tuple[np.ndarray, np.ndarray] | None = None,
) -> LossBreakdown:
    """Combined training loss
    J = j_t + (c_stab/2) j_t^2 + (c_acc/m) sum_i D_ii mse(x_i, psi(phi_hat_i)),

    where j_t is the scalar-lambda dual objective and each sample is
    reconstructed through the latent bottleneck: its own latent code maps to a
    generated feature vector which the decoder inverts. When `latents` is
    omitted the per-batch eigenproblem on the encoded features supplies
    (H, eigenvalues); passing them explicitly freezes the latents, which is
    the convention under which gradients are defined.
    """
    _check_params(params)
    breakdown, _ = _loss_forward(batch, params, d_batch, hyper, c_stab, c_acc, latents)
    return breakdown


def loss_value_and_grad(
    batch: np.ndarray,
    params: MapParams,
    d_batch,
    hyper: RkmHyper,
    c_stab: float,
    c_acc: float,
    latents: tuple[np.ndarray, np.ndarray] | None = None,
):
    """Combined loss plus its gradient over (theta, zeta).

    The batch latents and eigenvalues are held fixed while differentiating
    (they are re-solved per step by the caller); under that convention the
    dual objective's pull-back onto the features has the closed form
    d j_t / d features = -(1/eta) H^T H features.

    Returns (LossBreakdown, gradient, info) with info carrying the latents,
    eigenvalues and reconstructions of the batch.
    """
    _check_params(params)
    breakdown, state = _loss_forward(batch, params, d_batch, hyper, c_stab, c_acc, latents)
    (batch, m, w, enc_layers, dec_layers, features, enc_cache, h, lam, u, phi_hat,
     xhat, dec_cache) = state
    d = batch.shape[1]
    dxhat = (breakdown.c_acc / m) * w[:, None] * (2.0 / d) * (xhat - batch)
    grad_zeta, dphi_hat = _backward(
        dxhat, dec_layers, dec_cache, xhat, params.prelu_alpha, True
    )
    hth_scaled = h.T @ h / hyper.eta
    d_features = (1.0 + breakdown.c_stab * breakdown.j_t) * (
        -hth_scaled @ features
    ) + hth_scaled @ dphi_hat
    grad_theta, _ = _backward(
        d_features, enc_layers, enc_cache, features, params.prelu_alpha, False
    )
    grad = np.concatenate([grad_theta, grad_zeta])
    if not np.all(np.isfinite(grad)):
        raise NumericalFault("feature_maps.grad_combined_loss: non-finite gradient")
    info = {"latents": h, "eigvals": lam, "reconstruction": xhat}
    return breakdown, grad, info


def grad_combined_loss(
    batch: np.ndarray,
    params: MapParams,
    d_batch,
    hyper: RkmHyper,
    c_stab: float,
    c_acc: float,
    latents: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Gradient of the combined loss w.r.t. the flat (theta, zeta) vector."""
    _, grad, _ = loss_value_and_grad(batch, params, d_batch, hyper, c_stab, c_acc, latents)
    return grad
