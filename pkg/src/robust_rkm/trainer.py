"""Two-phase training: alternating per-batch eigensolves and gradient steps on
the combined loss, with a robust reweighting pass that replaces the sample
weights partway through training.

Per minibatch the encoded features define a linear-kernel Gram matrix whose
weighted eigenproblem supplies the batch latents; one Adam step then updates
the map parameters. At the reweighting epoch the full training set is encoded,
the full eigenproblem solved, and the MCD-based weights computed on the
resulting latents replace the current weights. After the last epoch one more
full-set eigensolve produces the returned latent model.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataValidationError, DegenerateScatter, DivergenceAbort, UsageError
from .feature_maps import (
    LossBreakdown,
    MapParams,
    encode,
    init_params,
    loss_value_and_grad,
)
from .kernels import KernelSpec, gram
from .rkm_core import LatentModel, RkmHyper, interconnection, solve_weighted_eig
from .robust_stats import WeightVector, compute_weights

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run depends on; config files use these exact keys."""

    epochs: int = 30
    minibatch: int = 200
    lr: float = 1e-4
    c_stab: float = 0.01
    c_acc: float = 100.0
    eta: float = 1.0
    lambda_reg: float = 1.0
    latent_dim: int = 10
    alpha: float = 0.975
    mcd_fraction: float = 0.75
    reweight_epoch: int = -1  # -1 resolves to epochs // 2
    reweight_iterations: int = 1
    seed: int = 0
    robust: bool = True
    feature_dim: int = 128
    enc_hidden: tuple[int, ...] = (256,)
    dec_hidden: tuple[int, ...] = (256,)
    mcd_restarts: int = 50

    def resolved_reweight_epoch(self) -> int:
        return self.epochs // 2 if self.reweight_epoch < 0 else self.reweight_epoch

    def validate(self, n: int | None = None):
        if self.epochs < 0:
            raise UsageError("trainer.TrainConfig: epochs must be >= 0")
        if self.minibatch < 1:
            raise UsageError("trainer.TrainConfig: minibatch must be >= 1")
        if n is not None and self.minibatch > n:
            raise UsageError(
                f"trainer.TrainConfig: minibatch {self.minibatch} exceeds dataset size {n}"
            )
        if not self.lr > 0:
            raise UsageError("trainer.TrainConfig: lr must be > 0")
        if self.epochs > 0 and self.latent_dim > self.minibatch:
            raise UsageError(
                "trainer.TrainConfig: latent_dim cannot exceed minibatch (the "
                "per-batch eigenproblem needs at least latent_dim samples)"
            )
        if self.c_stab < 0 or self.c_acc < 0:
            raise UsageError("trainer.TrainConfig: c_stab and c_acc must be >= 0")
        if not 0 < self.alpha < 1:
            raise UsageError("trainer.TrainConfig: alpha must lie in (0, 1)")
        if not 0.5 <= self.mcd_fraction <= 1.0:
            raise UsageError("trainer.TrainConfig: mcd_fraction must lie in [0.5, 1]")
        if self.resolved_reweight_epoch() > self.epochs:
            raise UsageError("trainer.TrainConfig: reweight_epoch must be <= epochs")
        if self.reweight_iterations < 1:
            raise UsageError("trainer.TrainConfig: reweight_iterations must be >= 1")

    def hyper(self) -> RkmHyper:
        return RkmHyper(eta=self.eta, lambda_reg=self.lambda_reg, latent_dim=self.latent_dim)


@dataclass
class AdamState:
    """First/second moment estimates and the step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), t=0)

    def step(self, flat: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = ADAM_BETA1 * self.m + (1.0 - ADAM_BETA1) * grad
        self.v = ADAM_BETA2 * self.v + (1.0 - ADAM_BETA2) * grad * grad
        m_hat = self.m / (1.0 - ADAM_BETA1**self.t)
        v_hat = self.v / (1.0 - ADAM_BETA2**self.t)
        return flat - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


@dataclass
class TrainReport:
    """Per-epoch aggregates of one training segment."""

    epoch_losses: list[LossBreakdown] = field(default_factory=list)
    eigval_trace: list[np.ndarray] = field(default_factory=list)
    final_weights: WeightVector | None = None
    wall_clock: float = 0.0
    seed: int = 0
    subset_indices: np.ndarray | None = None


@dataclass
class TrainResult:
    """Outputs of train()/resume(): the trained maps, the full-set latent
    model, the final weights, the report, plus the state needed to continue
    training from here (optimizer moments, RNG state, epoch counter).
    interconnection is U = (1/eta) Phi H^T over the full training set, which
    is all generation and denoising need once training data is gone."""

    params: MapParams
    model: LatentModel
    weights: WeightVector
    report: TrainReport
    optimizer: AdamState
    rng_state: dict
    epochs_done: int
    reweighted: bool
    config: TrainConfig
    interconnection: np.ndarray | None = None


def _validate_data(data: np.ndarray) -> np.ndarray:
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if not np.all(np.isfinite(data)):
        raise DataValidationError("trainer.train: data contains non-finite entries")
    if data.min() < 0.0 or data.max() > 1.0:
        raise DataValidationError("trainer.train: data must lie in [0, 1]; normalize first")
    return data


def _full_model(data, params, weights, hyper) -> tuple[LatentModel, np.ndarray]:
    features = encode(data, params)
    model = solve_weighted_eig(gram(features, KernelSpec(kind="linear")), weights, hyper)
    return model, interconnection(features.T, model.H, hyper.eta)


def _reweight(data, cfg: TrainConfig, params, weights, rng) -> WeightVector:
    hyper = cfg.hyper()
    for _ in range(cfg.reweight_iterations):
        model, _ = _full_model(data, params, weights, hyper)
        seed = int(rng.integers(0, 2**63 - 1))
        try:
            weights = compute_weights(
                model.H.T,
                alpha=cfg.alpha,
                n_mcd_fraction=cfg.mcd_fraction,
                seed=seed,
                restarts=cfg.mcd_restarts,
            )
        except DegenerateScatter as exc:
            raise DegenerateScatter(
                f"{exc} (during reweighting; a lower mcd_fraction admits a "
                f"tighter, non-degenerate support subset)"
            ) from exc
    return weights


def _run(
    data: np.ndarray,
    cfg: TrainConfig,
    params: MapParams,
    weights: WeightVector,
    adam: AdamState,
    rng: np.random.Generator,
    epochs_done: int,
    reweighted: bool,
) -> TrainResult:
    start = time.perf_counter()
    n = data.shape[0]
    hyper = cfg.hyper()
    reweight_at = cfg.resolved_reweight_epoch()
    report = TrainReport(seed=cfg.seed)
    initial_total: float | None = None

    for epoch in range(epochs_done, cfg.epochs):
        # >= rather than ==: a resumed run whose reweight epoch already passed
        # (say robust was switched on over a plain checkpoint) still reweights
        if cfg.robust and not reweighted and epoch >= reweight_at:
            weights = _reweight(data, cfg, params, weights, rng)
            reweighted = True
        perm = rng.permutation(n)
        sums = np.zeros(3)
        eig_sum = np.zeros(cfg.latent_dim)
        batches = 0
        for lo in range(0, n, cfg.minibatch):
            idx = perm[lo : lo + cfg.minibatch]
            if idx.shape[0] < max(2, cfg.latent_dim):
                continue  # remainder too small to carry an eigenproblem
            breakdown, grad, info = loss_value_and_grad(
                data[idx], params, weights.take(idx), hyper, cfg.c_stab, cfg.c_acc
            )
            if initial_total is None:
                initial_total = max(abs(breakdown.total), 1e-12)
            if breakdown.total > DIVERGENCE_FACTOR * initial_total:
                raise DivergenceAbort(
                    f"trainer.train: loss diverged at epoch {epoch} "
                    f"(total={breakdown.total:.3e})",
                    epoch=epoch,
                )
            flat = np.concatenate([params.theta, params.zeta])
            flat = adam.step(flat, grad, cfg.lr)
            params = params.with_vectors(
                flat[: params.theta.shape[0]], flat[params.theta.shape[0] :]
            )
            sums += (breakdown.j_t, breakdown.stab, breakdown.recon)
            eig_sum += info["eigvals"]
            batches += 1
        j_t, stab, recon = sums / max(batches, 1)
        report.epoch_losses.append(
            LossBreakdown(j_t, stab, recon, j_t + stab + recon, cfg.c_stab, cfg.c_acc)
        )
        report.eigval_trace.append(eig_sum / max(batches, 1))

    # a reweighting epoch equal to `epochs` means: once, after the last epoch
    if cfg.robust and not reweighted and cfg.epochs > 0 and reweight_at == cfg.epochs:
        weights = _reweight(data, cfg, params, weights, rng)
        reweighted = True

    model, u = _full_model(data, params, weights, hyper)
    report.final_weights = weights
    report.wall_clock = time.perf_counter() - start
    return TrainResult(
        params=params,
        model=model,
        weights=weights,
        report=report,
        optimizer=adam,
        rng_state=rng.bit_generator.state,
        epochs_done=cfg.epochs,
        reweighted=reweighted,
        config=cfg,
        interconnection=u,
    )


def train(data: np.ndarray, cfg: TrainConfig) -> TrainResult:
    """Train feature and pre-image maps on data in [0,1]^d.

    Deterministic for a fixed seed: two runs with the same config produce
    bit-identical loss traces and parameters.
    """
    data = _validate_data(data)
    cfg.validate(n=data.shape[0])
    rng = np.random.default_rng(cfg.seed)
    init_seed = int(rng.integers(0, 2**63 - 1))
    d = data.shape[1]
    params = init_params(
        (d, *cfg.enc_hidden, cfg.feature_dim),
        (cfg.feature_dim, *cfg.dec_hidden, d),
        seed=init_seed,
    )
    weights = WeightVector.uniform(data.shape[0])
    adam = AdamState.zeros(params.theta.shape[0] + params.zeta.shape[0])
    return _run(data, cfg, params, weights, adam, rng, epochs_done=0, reweighted=False)


def resume(checkpoint, data: np.ndarray, cfg_overrides: dict | None = None) -> TrainResult:
    """Continue training from a checkpoint with restored moments, weights and
    RNG state. Overrides are applied on top of the stored config; raising
    `epochs` trains further, and a split run equals an unbroken one."""
    data = _validate_data(data)
    cfg = checkpoint.config
    if cfg_overrides:
        unknown = set(cfg_overrides) - set(cfg.__dataclass_fields__)
        if unknown:
            raise UsageError(f"trainer.resume: unknown config overrides {sorted(unknown)}")
        cfg = replace(cfg, **cfg_overrides)
    cfg.validate(n=data.shape[0])
    if checkpoint.params.input_dim != data.shape[1]:
        raise DataValidationError(
            "trainer.resume: checkpoint input dim does not match the data"
        )
    if len(checkpoint.weights) != data.shape[0]:
        raise DataValidationError(
            "trainer.resume: checkpoint weight count does not match the data"
        )
    rng = np.random.default_rng(cfg.seed)
    rng.bit_generator.state = checkpoint.rng_state
    adam = AdamState(
        m=checkpoint.moments_m.copy(), v=checkpoint.moments_v.copy(), t=checkpoint.adam_t
    )
    return _run(
        data,
        cfg,
        checkpoint.params,
        checkpoint.weights,
        adam,
        rng,
        epochs_done=checkpoint.epochs_done,
        reweighted=checkpoint.reweighted,
    )
