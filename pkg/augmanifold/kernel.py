"""
Integrated augmentation-invariant kernel.

The weight between two samples averages the Gaussian kernel over every pair of
their views:

    W[i1, i2] = (1 / n^2) * sum_{j1, j2} exp(-||X[i1, j1] - X[i2, j2]||^2 / t)

The diagonal is kept. Only the upper triangle is computed; it is mirrored so the
matrix is exactly symmetric. Rows are processed in blocks to bound memory; the
per-block reduction always sums views in the same order, so the result does not
depend on the block size.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial.distance import cdist

from augmanifold.errors import ConfigurationError, DataError
from augmanifold.manifolds import MultiViewDataset
from augmanifold.rng import stream


logger = logging.getLogger(__name__)

# Upper bound on kernel entries held at once by one block (float64 count).
_BLOCK_ENTRIES = 8_000_000
MEDIAN_MAX_PAIRS = 10_000


@dataclass(frozen=True)
class WeightMatrix:
    """Symmetric m x m integrated kernel matrix with its bandwidth."""

    values: np.ndarray
    bandwidth_t: float
    n_views: int

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ConfigurationError(f"weight matrix must be square, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("weight matrix has non-finite entries")
        if not np.array_equal(values, values.T):
            raise ConfigurationError("weight matrix must be symmetric")
        if np.any(values < 0.0) or np.any(values > 1.0):
            raise ConfigurationError("weight matrix entries must lie in [0, 1]")
        if self.bandwidth_t <= 0:
            raise ConfigurationError(f"bandwidth t must be positive, got {self.bandwidth_t}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return self.values.shape[0]


def _check_bandwidth(t: float) -> float:
    if not (isinstance(t, int | float | np.floating) and math.isfinite(t) and t > 0):
        raise ConfigurationError(f"bandwidth t must be a positive real, got {t!r}")
    return float(t)


def _flat_views(points: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(points)):
        raise DataError("point coordinates must be finite")
    m, n, dim = points.shape
    return points.reshape(m * n, dim)


def integrated_block(left: np.ndarray, right: np.ndarray, t: float) -> np.ndarray:
    """Integrated weights between samples of ``left`` (a, n1, D) and ``right`` (b, n2, D)."""
    a, n1, dim = left.shape
    b, n2, _ = right.shape
    sq = cdist(left.reshape(a * n1, dim), right.reshape(b * n2, dim), "sqeuclidean")
    kernel = np.exp(-sq / t).reshape(a, n1, b, n2)
    return kernel.sum(axis=(1, 3)) / (n1 * n2)


def integrated_weights(dataset: MultiViewDataset, t: float, block_rows: int | None = None) -> WeightMatrix:
    """Compute the integrated weight matrix of ``dataset`` at bandwidth ``t``."""
    t = _check_bandwidth(t)
    points = dataset.points
    _flat_views(points)
    m, n, _ = points.shape
    if block_rows is None:
        block_rows = max(1, _BLOCK_ENTRIES // (n * n * m))

    upper = np.zeros((m, m))
    for start in range(0, m, block_rows):
        stop = min(start + block_rows, m)
        upper[start:stop, start:] = integrated_block(points[start:stop], points[start:], t)

    values = np.triu(upper) + np.triu(upper, 1).T
    logger.debug(f"Integrated weights m={m} n={n} t={t:.6g}")
    return WeightMatrix(values=values, bandwidth_t=t, n_views=n)


def cross_weights(queries: np.ndarray, train: MultiViewDataset, t: float) -> np.ndarray:
    """Integrated weights between query samples (q, n_q, D) and every training sample."""
    t = _check_bandwidth(t)
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim == 2:
        queries = queries[None]
    if queries.ndim != 3 or queries.shape[2] != train.D:
        raise ConfigurationError(f"query views must have shape (q, n_q, {train.D}), got {queries.shape}")
    if queries.shape[1] < 1:
        raise ConfigurationError("a query needs at least one view")
    _flat_views(queries)
    return integrated_block(queries, train.points, t)


class BandwidthKind(str, Enum):
    THEORY_RATE = "theory_rate"
    LOG_RATE = "log_rate"
    MEDIAN = "median"
    FIXED = "fixed"


@dataclass(frozen=True)
class BandwidthRule:
    """How to choose t. Rate rules need the intrinsic dimension d."""

    kind: BandwidthKind
    d: int | None = None
    value: float | None = None
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind in (BandwidthKind.THEORY_RATE, BandwidthKind.LOG_RATE) and (self.d is None or self.d < 1):
            raise ConfigurationError(f"{self.kind.value} bandwidth needs an intrinsic dimension d >= 1, got {self.d}")
        if self.kind is BandwidthKind.FIXED and (self.value is None or self.value <= 0):
            raise ConfigurationError(f"fixed bandwidth needs a positive value, got {self.value}")
        if self.scale <= 0:
            raise ConfigurationError(f"bandwidth scale must be positive, got {self.scale}")

    def describe(self) -> dict:
        return {"rule": self.kind.value, "d": self.d, "value": self.value, "scale": self.scale}


def theory_rate(d: int, scale: float = 1.0) -> BandwidthRule:
    return BandwidthRule(BandwidthKind.THEORY_RATE, d=d, scale=scale)


def log_rate(d: int, scale: float = 1.0) -> BandwidthRule:
    return BandwidthRule(BandwidthKind.LOG_RATE, d=d, scale=scale)


def median_heuristic(scale: float = 1.0, seed: int = 0) -> BandwidthRule:
    return BandwidthRule(BandwidthKind.MEDIAN, scale=scale, seed=seed)


def fixed(value: float) -> BandwidthRule:
    return BandwidthRule(BandwidthKind.FIXED, value=value)


def _median_sq_distance(points: np.ndarray, seed: int) -> float:
    m, n, _ = points.shape
    total = m * (m - 1) // 2 * n * n
    if total <= MEDIAN_MAX_PAIRS:
        i1, i2 = np.triu_indices(m, k=1)
        j1, j2 = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        left = points[i1[:, None], j1.ravel()[None, :]]
        right = points[i2[:, None], j2.ravel()[None, :]]
    else:
        rng = stream(seed, "median-heuristic")
        i1 = rng.integers(0, m, MEDIAN_MAX_PAIRS)
        i2 = (i1 + rng.integers(1, m, MEDIAN_MAX_PAIRS)) % m
        left = points[i1, rng.integers(0, n, MEDIAN_MAX_PAIRS)]
        right = points[i2, rng.integers(0, n, MEDIAN_MAX_PAIRS)]
    return float(np.median(np.sum((left - right) ** 2, axis=-1)))


def bandwidth_heuristic(dataset: MultiViewDataset, rule: BandwidthRule) -> float:
    """Return the bandwidth t chosen by ``rule`` for ``dataset``."""
    m = dataset.m
    if rule.kind is BandwidthKind.THEORY_RATE:
        t = m ** (-1.0 / (rule.d + 4))
    elif rule.kind is BandwidthKind.LOG_RATE:
        t = (math.log(m) / m) ** (2.0 / (4 * rule.d + 13))
    elif rule.kind is BandwidthKind.MEDIAN:
        _flat_views(dataset.points)
        t = _median_sq_distance(dataset.points, rule.seed)
        if t <= 0:
            raise DataError("median squared distance is zero; views coincide")
    else:
        t = rule.value
    return float(t * rule.scale)


def degree_vector(weights: WeightMatrix | np.ndarray) -> np.ndarray:
    """Row sums of W."""
    values = weights.values if isinstance(weights, WeightMatrix) else np.asarray(weights, dtype=np.float64)
    return values.sum(axis=1)
