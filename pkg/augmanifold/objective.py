"""
Triplet objective for the parameterized encoder and its SGD training loop.

For a batch of B triplets (anchor, positive view of the same sample, view of a
different sample) drawn from m samples the loss is

    s * sum_b w_b ||z_b - z_b^-||^2                    unsupervised
    + lambda1 * s * sum_b ||z_b - z_b^+||^2            self-supervised
    + lambda2 * sum_{l1 <= l2} (G[l1, l2] - I[l1, l2])^2   regularization

with s = m / B, z = encoder(anchor) and G = s * sum_b z_b z_b^T. Every term is
the batch estimate of the corresponding sum over all m samples. An epoch never
yields a batch smaller than ``batch_size``: the remainder joins the last batch.
"""

import logging
import math
from collections.abc import Iterator
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from augmanifold.encoder import EncoderGradient, EncoderParams, backward, encoder_layout, forward, init_params
from augmanifold.errors import ConfigurationError, NumericalError, TrainingError
from augmanifold.manifolds import MultiViewDataset
from augmanifold.rng import stream


logger = logging.getLogger(__name__)

COMPONENTS = ("unsup", "selfsup", "reg")
TRAJECTORY_COLUMNS = ["epoch", "total", *COMPONENTS]


@dataclass(frozen=True)
class LossConfig:
    lambda1: float = 100.0
    lambda2: float = 200.0
    bandwidth_t: float = 1.0
    batch_size: int = 64
    learning_rate: float = 2e-5
    epochs: int = 200
    seed: int = 0
    lr_decay: float = 1.0
    output_scale: float | None = None

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigurationError(f"lambda1 and lambda2 must be non-negative, got {self.lambda1}, {self.lambda2}")
        if not self.bandwidth_t > 0:
            raise ConfigurationError(f"bandwidth t must be positive, got {self.bandwidth_t}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch size must be at least 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ConfigurationError(f"learning rate must be non-negative, got {self.learning_rate}")
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be non-negative, got {self.epochs}")
        if not 0 < self.lr_decay <= 1:
            raise ConfigurationError(f"learning-rate decay must lie in (0, 1], got {self.lr_decay}")

    def describe(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TripletBatch:
    """Anchor, positive and negative views, one row per triplet."""

    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray
    neg_weights: np.ndarray
    sample_scale: float = 1.0
    anchor_index: np.ndarray | None = None
    negative_index: np.ndarray | None = None

    def __post_init__(self):
        size = len(self.anchors)
        if size == 0:
            raise ConfigurationError("triplet batch is empty")
        if not (len(self.positives) == len(self.negatives) == len(self.neg_weights) == size):
            raise ConfigurationError("triplet batch arrays must have equal length")
        if np.any(self.neg_weights < 0) or np.any(self.neg_weights > 1):
            raise ConfigurationError("negative weights must lie in [0, 1]")

    @property
    def size(self) -> int:
        return len(self.anchors)


@dataclass(frozen=True)
class LossValue:
    unsup: float
    selfsup: float
    reg: float

    @property
    def total(self) -> float:
        return self.unsup + self.selfsup + self.reg

    def as_row(self) -> dict:
        return {"total": self.total, "unsup": self.unsup, "selfsup": self.selfsup, "reg": self.reg}


@dataclass(frozen=True)
class TrainingResult:
    params: EncoderParams
    trajectory: pd.DataFrame


def _check_views(dataset: MultiViewDataset) -> None:
    if dataset.n < 2:
        raise ConfigurationError("the self-supervised term needs at least two views per sample (n >= 2)")


def _build_triplets(dataset: MultiViewDataset, anchors: np.ndarray, t: float, rng: np.random.Generator) -> TripletBatch:
    m, n = dataset.m, dataset.n
    size = len(anchors)
    view = rng.integers(0, n, size)
    positive_view = (view + rng.integers(1, n, size)) % n
    negative = (anchors + rng.integers(1, m, size)) % m
    negative_view = rng.integers(0, n, size)

    points = dataset.points
    anchor_x = points[anchors, view]
    negative_x = points[negative, negative_view]
    weights = np.exp(-np.sum((anchor_x - negative_x) ** 2, axis=1) / t)
    return TripletBatch(
        anchors=anchor_x,
        positives=points[anchors, positive_view],
        negatives=negative_x,
        neg_weights=weights,
        sample_scale=m / size,
        anchor_index=anchors,
        negative_index=negative,
    )


def epoch_batches(
    dataset: MultiViewDataset, batch_size: int, t: float, seed: int, epoch: int = 0
) -> Iterator[TripletBatch]:
    """One sweep: every sample is an anchor exactly once, in shuffled batches.

    Batches hold ``batch_size`` anchors except the last, which also takes the
    remainder of m / batch_size.
    """
    _check_views(dataset)
    if batch_size < 1:
        raise ConfigurationError(f"batch size must be at least 1, got {batch_size}")
    rng = stream(seed, "triplets", epoch)
    order = rng.permutation(dataset.m)
    count = max(1, dataset.m // batch_size)
    bounds = [k * batch_size for k in range(count)] + [dataset.m]
    for start, stop in zip(bounds[:-1], bounds[1:], strict=True):
        yield _build_triplets(dataset, order[start:stop], t, rng)


def sample_triplets(dataset: MultiViewDataset, batch_size: int, t: float, seed: int) -> TripletBatch:
    """First batch of the seeded sweep; anchors are drawn without replacement."""
    if batch_size > dataset.m:
        raise ConfigurationError(f"batch size {batch_size} exceeds the sample count {dataset.m}")
    if not t > 0:
        raise ConfigurationError(f"bandwidth t must be positive, got {t}")
    return next(epoch_batches(dataset, batch_size, t, seed))


def _encode_batch(params: EncoderParams, batch: TripletBatch):
    stacked = np.concatenate([batch.anchors, batch.positives, batch.negatives])
    out, cache = forward(params, stacked)
    size = batch.size
    return out[:size], out[size : 2 * size], out[2 * size :], cache


def _gram_residual(z: np.ndarray, scale: float) -> np.ndarray:
    return scale * (z.T @ z) - np.eye(z.shape[1])


def _components(z_a, z_p, z_n, batch: TripletBatch, cfg: LossConfig) -> LossValue:
    scale = batch.sample_scale
    residual = np.triu(_gram_residual(z_a, scale))
    value = LossValue(
        unsup=float(scale * np.sum(batch.neg_weights * np.sum((z_a - z_n) ** 2, axis=1))),
        selfsup=float(cfg.lambda1 * scale * np.sum((z_a - z_p) ** 2)),
        reg=float(cfg.lambda2 * np.sum(residual**2)),
    )
    if not all(math.isfinite(v) for v in (value.unsup, value.selfsup, value.reg)):
        raise NumericalError("loss is not finite")
    return value


def loss(params: EncoderParams, batch: TripletBatch, cfg: LossConfig) -> LossValue:
    """Loss on one batch; ``.total`` is the sum of the three components."""
    z_a, z_p, z_n, _ = _encode_batch(params, batch)
    return _components(z_a, z_p, z_n, batch, cfg)


def loss_gradient(
    params: EncoderParams,
    batch: TripletBatch,
    cfg: LossConfig,
    components: tuple[str, ...] = COMPONENTS,
) -> EncoderGradient:
    """Analytic gradient of the selected loss components with respect to all parameters."""
    unknown = set(components) - set(COMPONENTS)
    if unknown:
        raise ConfigurationError(f"unknown loss components {sorted(unknown)}")
    z_a, z_p, z_n, cache = _encode_batch(params, batch)
    _components(z_a, z_p, z_n, batch, cfg)
    scale = batch.sample_scale

    grad_a = np.zeros_like(z_a)
    grad_p = np.zeros_like(z_p)
    grad_n = np.zeros_like(z_n)
    if "unsup" in components:
        diff = 2.0 * scale * batch.neg_weights[:, None] * (z_a - z_n)
        grad_a += diff
        grad_n -= diff
    if "selfsup" in components:
        diff = 2.0 * cfg.lambda1 * scale * (z_a - z_p)
        grad_a += diff
        grad_p -= diff
    if "reg" in components:
        upper = 2.0 * np.triu(_gram_residual(z_a, scale))
        grad_a += cfg.lambda2 * scale * z_a @ (upper + upper.T)

    return backward(params, cache, np.concatenate([grad_a, grad_p, grad_n]))


def _standardisation(dataset: MultiViewDataset) -> tuple[np.ndarray, float]:
    flat = dataset.points.reshape(-1, dataset.D)
    shift = flat.mean(axis=0)
    scale = float(np.sqrt(np.mean(np.sum((flat - shift) ** 2, axis=1)) / dataset.D))
    return shift, scale if scale > 0 else 1.0


def _sgd_step(params: EncoderParams, grad: EncoderGradient, rate: float) -> EncoderParams:
    return params.with_flat(params.flat() - rate * grad.flat())


def initial_params(dataset: MultiViewDataset, arch: list[int] | tuple[int, ...], cfg: LossConfig) -> EncoderParams:
    """Initial encoder: standardised inputs and an output multiplier of 1/sqrt(m), the target spread.

    Pre-scaled outputs are then O(1) wherever the scaled Gram matrix is the identity.
    """
    dims = tuple(int(a) for a in arch)
    if len(dims) < 2 or dims[0] != dataset.D:
        raise ConfigurationError(f"architecture {dims} must start with the input dimension {dataset.D}")
    shift, scale = _standardisation(dataset)
    output_scale = cfg.output_scale if cfg.output_scale is not None else 1.0 / math.sqrt(dataset.m)
    return init_params(dims, cfg.seed, shift, scale, output_scale)


def train(
    dataset: MultiViewDataset,
    arch: list[int] | tuple[int, ...],
    cfg: LossConfig,
    params: EncoderParams | None = None,
) -> TrainingResult:
    """Mini-batch SGD over epoch sweeps.

    Row 0 of the trajectory holds the loss of the initial parameters; row e
    holds the mean batch loss seen during epoch e, each evaluated just before
    that batch's update.
    """
    _check_views(dataset)
    if params is None:
        params = initial_params(dataset, arch, cfg)
    logger.info(
        f"Training encoder {params.layer_dims} on m={dataset.m} n={dataset.n} "
        f"for {cfg.epochs} epochs (batch={cfg.batch_size}, lr={cfg.learning_rate:g})"
    )

    def evaluate(epoch: int) -> dict:
        try:
            values = [loss(params, b, cfg) for b in epoch_batches(dataset, cfg.batch_size, cfg.bandwidth_t, cfg.seed, epoch)]
        except NumericalError as exc:
            raise TrainingError(str(exc), epoch) from exc
        return {"epoch": epoch, **pd.DataFrame([v.as_row() for v in values]).mean().to_dict()}

    rows = [evaluate(0)]
    for epoch in range(1, cfg.epochs + 1):
        rate = cfg.learning_rate * cfg.lr_decay ** (epoch - 1)
        values = []
        for batch in epoch_batches(dataset, cfg.batch_size, cfg.bandwidth_t, cfg.seed, epoch):
            try:
                values.append(loss(params, batch, cfg))
                params = _sgd_step(params, loss_gradient(params, batch, cfg), rate)
            except NumericalError as exc:
                raise TrainingError(f"training diverged: {exc}", epoch) from exc
        row = {"epoch": epoch, **pd.DataFrame([v.as_row() for v in values]).mean().to_dict()}
        logger.debug(
            f"epoch {epoch}: total={row['total']:.6g} unsup={row['unsup']:.6g} "
            f"selfsup={row['selfsup']:.6g} reg={row['reg']:.6g}"
        )
        rows.append(row)

    trajectory = pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS).astype({"epoch": int})
    logger.info(f"Training finished: loss {trajectory['total'].iloc[0]:.6g} -> {trajectory['total'].iloc[-1]:.6g}")
    return TrainingResult(params=params, trajectory=trajectory)


def invariance_ratio(params: EncoderParams, batch: TripletBatch) -> float:
    """Mean squared positive-pair distance over mean squared negative-pair distance."""
    z_a, z_p, z_n, _ = _encode_batch(params, batch)
    negative = np.mean(np.sum((z_a - z_n) ** 2, axis=1))
    if negative == 0:
        raise NumericalError("all negative pairs coincide in representation space")
    return float(np.mean(np.sum((z_a - z_p) ** 2, axis=1)) / negative)


def gram_singular_values(params: EncoderParams, x: np.ndarray, m: int) -> np.ndarray:
    """Singular values of (m / B) * Z^T Z for representations Z of the batch ``x``."""
    z, _ = forward(params, x)
    return np.linalg.svd((m / len(z)) * (z.T @ z), compute_uv=False)


def default_architecture(input_dim: int, output_dim: int, hidden: list[int] | tuple[int, ...] = (64, 64)):
    return encoder_layout(input_dim, hidden, output_dim)
