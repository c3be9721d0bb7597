"""
k-nearest-neighbour classification over interchangeable representations.

Neighbours are ranked by Euclidean distance with ties broken by ascending
training index. The binary rule is the strict majority: +1 only when more than
k/2 of the k nearest labels are +1, so an even split returns -1.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial.distance import cdist

from augmanifold.errors import ConfigurationError
from augmanifold.manifolds import LabeledDataset


logger = logging.getLogger(__name__)


class KRule(str, Enum):
    FIXED = "fixed"
    RATE = "rate"


@dataclass(frozen=True)
class KnnConfig:
    """Fixed k, or k = round(s^(2a / (2a + dim))) clamped to [1, s]."""

    rule: KRule = KRule.RATE
    k: int | None = None
    holder_alpha: float = 1.0
    dim: int | None = None

    def __post_init__(self):
        if self.rule is KRule.FIXED and (self.k is None or self.k < 1):
            raise ConfigurationError(f"fixed k must be a positive integer, got {self.k}")
        if self.holder_alpha <= 0:
            raise ConfigurationError(f"Hölder exponent must be positive, got {self.holder_alpha}")
        if self.dim is not None and self.dim < 1:
            raise ConfigurationError(f"rate-rule dimension must be at least 1, got {self.dim}")

    def resolve(self, s: int, dim: int | None = None) -> int:
        """Concrete k for a training set of size s."""
        if s < 1:
            raise ConfigurationError("empty training set")
        if self.rule is KRule.FIXED:
            k = self.k
        else:
            dim = self.dim if self.dim is not None else dim
            if dim is None:
                raise ConfigurationError("the rate rule needs the representation dimension")
            k = round(s ** (2.0 * self.holder_alpha / (2.0 * self.holder_alpha + dim)))
        clamped = min(max(int(k), 1), s)
        if clamped != k:
            logger.warning(f"k={k} clamped to {clamped} for s={s}")
        return clamped


def fixed_k(k: int) -> KnnConfig:
    return KnnConfig(rule=KRule.FIXED, k=k)


def rate_rule(holder_alpha: float = 1.0, dim: int | None = None) -> KnnConfig:
    return KnnConfig(rule=KRule.RATE, holder_alpha=holder_alpha, dim=dim)


def _neighbours(train_features: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    train_features = np.asarray(train_features, dtype=np.float64)
    if train_features.ndim != 2 or len(train_features) == 0:
        raise ConfigurationError("empty training set")
    if not 1 <= k <= len(train_features):
        raise ConfigurationError(f"k must lie in [1, {len(train_features)}], got {k}")
    distances = cdist(np.atleast_2d(queries), train_features)
    # stable sort keeps equal distances in training-index order
    return np.argsort(distances, axis=1, kind="stable")[:, :k]


def knn_predict(train_features: np.ndarray, train_labels: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    """Strict-majority +-1 predictions for a batch of queries."""
    train_labels = np.asarray(train_labels)
    nearest = train_labels[_neighbours(train_features, queries, k)]
    positives = np.sum(nearest == 1, axis=1)
    return np.where(positives > k / 2.0, 1, -1)


def knn_classify(train_features: np.ndarray, train_labels: np.ndarray, query: np.ndarray, k: int) -> int:
    """Predicted +-1 label of a single query."""
    return int(knn_predict(train_features, train_labels, np.asarray(query, dtype=np.float64)[None, :], k)[0])


def knn_vote(train_features: np.ndarray, train_labels: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    """Plurality vote for integer class labels.

    A tie between classes goes to the tied class whose member appears first in
    the neighbour ranking.
    """
    train_labels = np.asarray(train_labels)
    ranked = train_labels[_neighbours(train_features, queries, k)]
    predictions = np.empty(len(ranked), dtype=train_labels.dtype)
    for row, labels in enumerate(ranked):
        classes, first_seen, counts = np.unique(labels, return_index=True, return_counts=True)
        tied = counts == counts.max()
        predictions[row] = classes[tied][np.argmin(first_seen[tied])]
    return predictions


class RepresentationKind(str, Enum):
    RAW = "raw"
    SPECTRAL = "spectral"
    ENCODER = "encoder"


@dataclass(frozen=True)
class RepresentationMap:
    """A feature map from sample views to a fixed-dimension vector.

    ``transform`` takes (q, n_q, D) views and returns (q, output_dim). Raw
    features use the first view only; spectral maps use Nyström extension over
    all views; encoders use the first view. ``in_sample`` optionally provides
    precomputed rows for the samples a representation was fitted on.
    """

    kind: RepresentationKind
    output_dim: int
    transform: Callable[[np.ndarray], np.ndarray]
    in_sample: np.ndarray | None = None
    name: str = ""

    def features(self, views: np.ndarray, sample_index: np.ndarray | None = None) -> np.ndarray:
        if self.in_sample is not None and sample_index is not None:
            out = self.in_sample[np.asarray(sample_index, dtype=np.intp)]
        else:
            out = np.asarray(self.transform(np.asarray(views, dtype=np.float64)), dtype=np.float64)
        if out.ndim != 2 or out.shape[1] != self.output_dim or not np.all(np.isfinite(out)):
            raise ConfigurationError(f"representation {self.name or self.kind.value} produced invalid features")
        return out


def raw_representation(dim: int) -> RepresentationMap:
    return RepresentationMap(RepresentationKind.RAW, dim, lambda views: views[:, 0, :], name="raw")


def misclassification_error(
    rep: RepresentationMap,
    train: LabeledDataset,
    test: LabeledDataset,
    cfg: KnnConfig,
    train_views: np.ndarray | None = None,
    test_views: np.ndarray | None = None,
    rate_dim: int | None = None,
    multiclass: bool = False,
) -> float:
    """Fraction of test samples whose kNN prediction differs from the label.

    Features come from the representation's in-sample rows when the labeled
    sets carry sample indices, otherwise from ``transform`` on the given views
    (defaulting to the labeled sets' stored features as single views).
    """

    def featurize(labeled: LabeledDataset, views: np.ndarray | None) -> np.ndarray:
        if views is None:
            views = np.asarray(labeled.features, dtype=np.float64)[:, None, :]
        return rep.features(views, labeled.sample_index)

    train_x = featurize(train, train_views)
    test_x = featurize(test, test_views)
    k = cfg.resolve(train.s, rate_dim if rate_dim is not None else rep.output_dim)
    if multiclass:
        predictions = knn_vote(train_x, train.labels, test_x, k)
    else:
        predictions = knn_predict(train_x, train.labels, test_x, k)
    return float(np.mean(predictions != np.asarray(test.labels)))


def standard_error(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 2:
        return math.nan
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))
