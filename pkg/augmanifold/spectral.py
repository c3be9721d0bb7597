"""
Augmentation-invariant Laplacian eigenmaps and diffusion maps.

Both methods reduce to the generalized problem (Dk - K) v = lam Dk v for a
kernel K with degrees Dk:

- Laplacian eigenmaps: K = W, eigenvalues are the generalized lam in [0, 2].
- Diffusion maps: K = W_alpha = D^-alpha W D^-alpha. The transition matrix
  P_alpha = Dk^-1 K has eigenvalues mu = 1 - lam; the reported eigenvalues are
  lam / t = (1 - mu) / t, and coordinates are scaled by exp(-l * lam / t).

The trivial pair (lam = 0, constant vector) is removed. When the graph is
disconnected the null space is larger than one; the constant direction is then
projected out of it and the remaining null vectors are kept, with a warning.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.stats import rankdata

from augmanifold.errors import ConfigurationError, ExtensionError, NumericalError
from augmanifold.kernel import WeightMatrix, cross_weights, degree_vector
from augmanifold.manifolds import MultiViewDataset


logger = logging.getLogger(__name__)

TRIVIAL_TOL = 1e-8
CONSTANCY_TOL = 1e-6
EXTENSION_MIN_MU = 1e-8

LAPLACIAN_EIGENMAPS = "laplacian_eigenmaps"
DIFFUSION_MAPS = "diffusion_maps"


@dataclass(frozen=True)
class Embedding:
    """Per-sample spectral coordinates and the spectrum they came from."""

    coords: np.ndarray
    eigenvalues: np.ndarray
    method: str
    bandwidth_t: float
    vectors: np.ndarray
    transition_eigenvalues: np.ndarray
    alpha: float = 0.0
    diffusion_time: float = 0.0
    skipped_trivial: bool = True
    warnings: tuple[str, ...] = field(default_factory=tuple)

    @property
    def m(self) -> int:
        return self.coords.shape[0]

    @property
    def N(self) -> int:  # noqa: N802
        return self.coords.shape[1]

    def scaling(self) -> np.ndarray:
        """Per-component factor applied to the eigenvectors (1 for eigenmaps)."""
        if self.method == DIFFUSION_MAPS:
            return np.exp(-self.diffusion_time * self.eigenvalues)
        return np.ones_like(self.eigenvalues)

    def metadata(self) -> dict:
        return {
            "method": self.method,
            "alpha": self.alpha if self.method == DIFFUSION_MAPS else None,
            "l": self.diffusion_time if self.method == DIFFUSION_MAPS else None,
            "t": self.bandwidth_t,
            "N": self.N,
            "m": self.m,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "transition_eigenvalues": [float(v) for v in self.transition_eigenvalues],
            "skipped_trivial": self.skipped_trivial,
            "warnings": list(self.warnings),
        }


def _diagonal(b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if b.ndim == 2:
        if b.shape[0] != b.shape[1] or np.count_nonzero(b - np.diag(np.diag(b))):
            raise ConfigurationError("B must be diagonal")
        b = np.diag(b).copy()
    if not np.all(np.isfinite(b)) or np.any(b <= 0.0):
        raise NumericalError("B must have strictly positive diagonal entries")
    return b


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _whitened_spectrum(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full ascending spectrum of B^-1/2 A B^-1/2; returns (values, whitened vectors, B^-1/2)."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] != b.shape[0]:
        raise ConfigurationError(f"A must be square and match B, got {a.shape} and {b.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.max(np.abs(a))))):
        raise ConfigurationError("A must be symmetric")
    inv_sqrt = 1.0 / np.sqrt(b)
    whitened = a * np.outer(inv_sqrt, inv_sqrt)
    whitened = 0.5 * (whitened + whitened.T)
    if not np.all(np.isfinite(whitened)):
        raise NumericalError("whitened matrix has non-finite entries")
    values, vectors = eigh(whitened, driver="ev")
    return values, vectors, inv_sqrt


def solve_generalized_symmetric_eigen(a: np.ndarray, b: np.ndarray, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Smallest ``count`` eigenpairs of A v = lam B v for diagonal positive B.

    Returns ascending eigenvalues and B-orthonormal eigenvectors as columns,
    each with its largest-magnitude entry positive.
    """
    b = _diagonal(b)
    m = b.shape[0]
    if count < 1 or count > m:
        raise ConfigurationError(f"requested {count} eigenpairs from a {m} x {m} problem")
    values, vectors, inv_sqrt = _whitened_spectrum(a, b)
    return values[:count], _fix_signs(inv_sqrt[:, None] * vectors[:, :count])


def _drop_trivial(
    values: np.ndarray, vectors: np.ndarray, degrees: np.ndarray, count: int
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Remove the constant mode from a whitened ascending spectrum, keep ``count`` pairs."""
    warnings: list[str] = []
    trivial = np.sqrt(degrees)
    trivial /= np.linalg.norm(trivial)
    null_dim = int(np.argmax(np.abs(values) >= TRIVIAL_TOL)) if np.any(np.abs(values) >= TRIVIAL_TOL) else len(values)

    if null_dim >= 2:
        message = f"graph appears disconnected: {null_dim} eigenvalues below {TRIVIAL_TOL:g}"
        logger.warning(message)
        warnings.append(message)
        block = vectors[:, :null_dim]
        block = block - np.outer(trivial, trivial @ block)
        basis, _, _ = np.linalg.svd(block, full_matrices=False)
        vectors = np.hstack([basis[:, : null_dim - 1], vectors[:, null_dim:]])
        values = values[1:]
    else:
        if null_dim == 0:
            message = f"smallest eigenvalue {values[0]:.3g} is not below {TRIVIAL_TOL:g}"
            logger.warning(message)
            warnings.append(message)
        constant = vectors[:, 0] / trivial
        variation = np.std(constant) / abs(np.mean(constant))
        if variation >= CONSTANCY_TOL:
            message = f"trivial eigenvector deviates from constant (coefficient of variation {variation:.3g})"
            logger.warning(message)
            warnings.append(message)
        vectors = vectors[:, 1:]
        values = values[1:]
    return values[:count], vectors[:, :count], warnings


def _check_dimension(weights: WeightMatrix, n_components: int) -> None:
    if n_components < 1:
        raise ConfigurationError(f"N must be at least 1, got {n_components}")
    if n_components + 1 > weights.m:
        raise ConfigurationError(f"N = {n_components} needs at least N + 1 = {n_components + 1} samples, have {weights.m}")


def _spectral_basis(kernel: np.ndarray, n_components: int) -> tuple[np.ndarray, np.ndarray, list[str]]:
    degrees = kernel.sum(axis=1)
    if np.any(degrees <= 0.0):
        raise NumericalError("a sample has zero degree")
    laplacian = np.diag(degrees) - kernel
    values, whitened, inv_sqrt = _whitened_spectrum(laplacian, degrees)
    values, whitened, warnings = _drop_trivial(values, whitened, degrees, n_components)
    return values, _fix_signs(inv_sqrt[:, None] * whitened), warnings


def laplacian_eigenmaps(weights: WeightMatrix, n_components: int) -> Embedding:
    """Solve L eta = lam D eta and keep the N smallest non-trivial pairs.

    No density correction is applied, so the spectrum follows the empirical
    sampling density: a density ripple of relative amplitude e in the second
    harmonic splits a degenerate circle pair by a factor of about 1 + 4e. For
    m uniform draws e is of order 2 / sqrt(m). Use diffusion maps with
    alpha=1 when the pair has to stay degenerate.
    """
    _check_dimension(weights, n_components)
    values, vectors, warnings = _spectral_basis(weights.values, n_components)
    logger.debug(f"Laplacian eigenmaps N={n_components} eigenvalues={np.round(values, 6).tolist()}")
    return Embedding(
        coords=vectors,
        eigenvalues=values,
        method=LAPLACIAN_EIGENMAPS,
        bandwidth_t=weights.bandwidth_t,
        vectors=vectors,
        transition_eigenvalues=1.0 - values,
        warnings=tuple(warnings),
    )


def alpha_normalize(weights: WeightMatrix | np.ndarray, alpha: float) -> np.ndarray:
    """W_alpha = D^-alpha W D^-alpha."""
    values = weights.values if isinstance(weights, WeightMatrix) else np.asarray(weights, dtype=np.float64)
    scale = degree_vector(values) ** (-alpha)
    return values * np.outer(scale, scale)


def transition_matrix(weights: WeightMatrix | np.ndarray, alpha: float) -> np.ndarray:
    """Row-stochastic P_alpha = D_alpha^-1 W_alpha."""
    normalized = alpha_normalize(weights, alpha)
    return normalized / normalized.sum(axis=1, keepdims=True)


def diffusion_maps(weights: WeightMatrix, n_components: int, alpha: float, diffusion_time: float) -> Embedding:
    """Diffusion-map coordinates exp(-l lam_k) eta_k with lam_k = (1 - mu_k) / t."""
    _check_dimension(weights, n_components)
    if not (0.0 <= alpha <= 1.0):
        raise ConfigurationError(f"alpha must lie in [0, 1], got {alpha}")
    if not (math.isfinite(diffusion_time) and diffusion_time >= 0.0):
        raise ConfigurationError(f"diffusion time l must be non-negative, got {diffusion_time}")
    values, vectors, warnings = _spectral_basis(alpha_normalize(weights, alpha), n_components)
    mu = 1.0 - values
    eigenvalues = values / weights.bandwidth_t
    coords = vectors * np.exp(-diffusion_time * eigenvalues)
    logger.debug(f"Diffusion maps alpha={alpha} l={diffusion_time} N={n_components} mu={np.round(mu, 6).tolist()}")
    return Embedding(
        coords=coords,
        eigenvalues=eigenvalues,
        method=DIFFUSION_MAPS,
        bandwidth_t=weights.bandwidth_t,
        vectors=vectors,
        transition_eigenvalues=mu,
        alpha=float(alpha),
        diffusion_time=float(diffusion_time),
        warnings=tuple(warnings),
    )


def extend_from_weights(embedding: Embedding, weights: WeightMatrix, query_weights: np.ndarray) -> np.ndarray:
    """Nyström extension given integrated weights from queries to training samples.

    With w_i the weight to training sample i and D_i its degree,

        eta_k(x) = sum_i (w_i / D_i^a) eta_k,i / (mu_k * sum_i w_i / D_i^a)

    where a = alpha for diffusion maps and 0 for eigenmaps, mu_k the transition
    eigenvalue. For a training sample this reproduces (P eta_k)_i / mu_k = eta_k,i.
    Diffusion coordinates are then scaled by exp(-l lam_k).
    """
    query_weights = np.atleast_2d(np.asarray(query_weights, dtype=np.float64))
    if query_weights.shape[1] != embedding.m or weights.m != embedding.m:
        raise ConfigurationError("query weights, weight matrix and embedding disagree on the number of samples")
    for k, mu in enumerate(embedding.transition_eigenvalues):
        if mu < EXTENSION_MIN_MU:
            raise ExtensionError(f"transition eigenvalue {mu:.3g} too small for a stable extension", component=k)
    alpha = embedding.alpha if embedding.method == DIFFUSION_MAPS else 0.0
    normalized = query_weights * degree_vector(weights) ** (-alpha)
    totals = normalized.sum(axis=1)
    if np.any(totals <= 0.0):
        raise NumericalError("query has zero kernel weight to every training sample")
    eta = (normalized @ embedding.vectors) / (totals[:, None] * embedding.transition_eigenvalues[None, :])
    return eta * embedding.scaling()[None, :]


def nystrom_extend(
    embedding: Embedding, weights: WeightMatrix, train: MultiViewDataset, query_views: np.ndarray
) -> np.ndarray:
    """Coordinates for new samples given their views.

    ``query_views`` is (n_q, D) for one sample, giving an N-vector, or
    (q, n_q, D) for a batch, giving a q x N matrix.
    """
    if train.m < 2:
        raise ConfigurationError("Nyström extension needs at least two training samples")
    if train.m != embedding.m:
        raise ConfigurationError(f"embedding has {embedding.m} rows but training set has {train.m} samples")
    query_views = np.asarray(query_views, dtype=np.float64)
    single = query_views.ndim == 2
    coords = extend_from_weights(embedding, weights, cross_weights(query_views, train, weights.bandwidth_t))
    return coords[0] if single else coords


def circular_rank_correlation(coords: np.ndarray, phi: np.ndarray) -> float:
    """Circular rank correlation between the angle of a 2-D embedding and phi.

    Both angles are replaced by uniform scores 2 pi rank / m; the score is the
    larger of |mean exp(i(a - b))| and |mean exp(i(a + b))|. It is 1 when the
    embedding angle is a rotation or reflection of phi, and O(1/sqrt(m)) for
    unrelated angles. phi only enters through its ranks.
    """
    coords = np.asarray(coords, dtype=np.float64)
    phi = np.mod(np.asarray(phi, dtype=np.float64), 2.0 * math.pi)
    if coords.ndim != 2 or coords.shape[1] < 2 or coords.shape[0] != phi.shape[0]:
        raise ConfigurationError("coords must be m x 2 (or wider) and match phi")
    theta = np.arctan2(coords[:, 1], coords[:, 0])
    scale = 2.0 * math.pi / phi.shape[0]
    a = scale * rankdata(theta)
    b = scale * rankdata(phi)
    same = abs(np.mean(np.exp(1j * (a - b))))
    reflected = abs(np.mean(np.exp(1j * (a + b))))
    return float(max(same, reflected))
