"""
Synthetic product manifolds and multi-view augmented datasets.

A sample is a latent pair (phi, psi): phi is the signal coordinate shared by all
views of a sample, psi is the nuisance coordinate drawn independently for every
view. Four manifolds are provided:

- ``TORUS``: (10 + 5 cos phi) cos psi, (10 + 5 cos phi) sin psi, 5 sin phi
- ``SWISS_ROLL_1``: phi cos phi, phi sin phi, psi  (phi rolls, psi is the height)
- ``SWISS_ROLL_2``: psi cos psi, psi sin psi, phi  (roles swapped)
- ``CLIFFORD_TORUS``: r_s cos phi, r_s sin phi, r_v cos psi, r_v sin psi in R^4,
  an exact isometric product of two circles used for spectrum checks.

Latents are uniform over their ranges. Ranges are sampled half-open [lo, hi).
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from augmanifold.errors import ConfigurationError, DomainError
from augmanifold.rng import stream


logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

# Latents may sit on the closed interval when supplied by hand.
_RANGE_SLACK = 1e-12


class ManifoldKind(str, Enum):
    TORUS = "torus"
    SWISS_ROLL_1 = "swiss_roll_1"
    SWISS_ROLL_2 = "swiss_roll_2"
    CLIFFORD_TORUS = "clifford_torus"


@dataclass(frozen=True)
class ManifoldSpec:
    """Shape of a product manifold N_s x N_v embedded in R^D."""

    kind: ManifoldKind
    phi_range: tuple[float, float]
    psi_range: tuple[float, float]
    major_radius: float = 10.0
    minor_radius: float = 5.0
    r_s: float = 1.0
    r_v: float = 1.0
    d_s: int = 1
    d_v: int = 1

    def __post_init__(self):
        for name, (lo, hi) in (("phi_range", self.phi_range), ("psi_range", self.psi_range)):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ConfigurationError(f"{self.kind.value}: {name} must be a non-empty interval, got ({lo}, {hi})")
        for name in ("major_radius", "minor_radius", "r_s", "r_v"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{self.kind.value}: {name} must be positive")
        if self.D < self.d_s + self.d_v:
            raise ConfigurationError(f"{self.kind.value}: ambient dimension {self.D} below d_s + d_v")

    @property
    def D(self) -> int:  # noqa: N802
        return 4 if self.kind is ManifoldKind.CLIFFORD_TORUS else 3

    @property
    def d(self) -> int:
        return self.d_s + self.d_v

    def describe(self) -> dict:
        """Plain-dict descriptor used in file headers and provenance."""
        return {
            "kind": self.kind.value,
            "phi_range": list(self.phi_range),
            "psi_range": list(self.psi_range),
            "major_radius": self.major_radius,
            "minor_radius": self.minor_radius,
            "r_s": self.r_s,
            "r_v": self.r_v,
        }

    @classmethod
    def from_descriptor(cls, descriptor: dict) -> "ManifoldSpec":
        return cls(
            kind=ManifoldKind(descriptor["kind"]),
            phi_range=tuple(descriptor["phi_range"]),
            psi_range=tuple(descriptor["psi_range"]),
            major_radius=descriptor.get("major_radius", 10.0),
            minor_radius=descriptor.get("minor_radius", 5.0),
            r_s=descriptor.get("r_s", 1.0),
            r_v=descriptor.get("r_v", 1.0),
        )


def torus() -> ManifoldSpec:
    return ManifoldSpec(ManifoldKind.TORUS, (0.0, TWO_PI), (0.0, TWO_PI))


def swiss_roll_1() -> ManifoldSpec:
    return ManifoldSpec(ManifoldKind.SWISS_ROLL_1, (1.5 * math.pi, 4.5 * math.pi), (0.0, 10.0))


def swiss_roll_2() -> ManifoldSpec:
    return ManifoldSpec(ManifoldKind.SWISS_ROLL_2, (0.0, 10.0), (1.5 * math.pi, 4.5 * math.pi))


def clifford_torus(r_s: float = 1.0, r_v: float = 1.0) -> ManifoldSpec:
    return ManifoldSpec(ManifoldKind.CLIFFORD_TORUS, (0.0, TWO_PI), (0.0, TWO_PI), r_s=r_s, r_v=r_v)


SPEC_FACTORIES: dict[str, Callable[[], ManifoldSpec]] = {
    ManifoldKind.TORUS.value: torus,
    ManifoldKind.SWISS_ROLL_1.value: swiss_roll_1,
    ManifoldKind.SWISS_ROLL_2.value: swiss_roll_2,
    ManifoldKind.CLIFFORD_TORUS.value: clifford_torus,
}


def spec_by_name(name: str, **params: float) -> ManifoldSpec:
    """Look up a manifold by its config name, e.g. ``"torus"``."""
    try:
        factory = SPEC_FACTORIES[name]
    except KeyError:
        raise ConfigurationError(f"unknown manifold {name!r}; expected one of {sorted(SPEC_FACTORIES)}")
    if params and name != ManifoldKind.CLIFFORD_TORUS.value:
        raise ConfigurationError(f"manifold {name!r} takes no shape parameters")
    return factory(**params)


@dataclass(frozen=True)
class MultiViewDataset:
    """m samples with n augmented views each; latents kept for oracle checks."""

    points: np.ndarray
    seed: int
    latent_phi: np.ndarray | None = None
    latent_psi: np.ndarray | None = None
    spec: ManifoldSpec | None = None
    labels: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        points = np.ascontiguousarray(self.points, dtype=np.float64)
        if points.ndim != 3:
            raise ConfigurationError(f"points must have shape (m, n, D), got {points.shape}")
        m, n, _ = points.shape
        if m < 2 or n < 1:
            raise ConfigurationError(f"a dataset needs m >= 2 and n >= 1, got m={m}, n={n}")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)
        for name, shape in (("latent_phi", (m,)), ("latent_psi", (m, n))):
            value = getattr(self, name)
            if value is None:
                continue
            value = np.ascontiguousarray(value, dtype=np.float64)
            if value.shape != shape:
                raise ConfigurationError(f"{name} must have shape {shape}, got {value.shape}")
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def D(self) -> int:  # noqa: N802
        return self.points.shape[2]

    def subset(self, indices: np.ndarray) -> "MultiViewDataset":
        """Dataset restricted to the given sample indices (in that order)."""
        indices = np.asarray(indices, dtype=np.intp)
        return MultiViewDataset(
            points=self.points[indices],
            seed=self.seed,
            latent_phi=None if self.latent_phi is None else self.latent_phi[indices],
            latent_psi=None if self.latent_psi is None else self.latent_psi[indices],
            spec=self.spec,
            labels=None if self.labels is None else self.labels[indices],
        )


@dataclass(frozen=True)
class LabeledDataset:
    """Representative features with +-1 labels attached per sample."""

    features: np.ndarray
    labels: np.ndarray
    regression_tag: str
    sample_index: np.ndarray | None = None

    def __post_init__(self):
        if len(self.features) != len(self.labels) or len(self.labels) < 1:
            raise ConfigurationError(
                f"features and labels must have equal non-zero length, got {len(self.features)} and {len(self.labels)}"
            )

    @property
    def s(self) -> int:
        return len(self.labels)

    def subset(self, indices: np.ndarray) -> "LabeledDataset":
        indices = np.asarray(indices, dtype=np.intp)
        return LabeledDataset(
            features=self.features[indices],
            labels=self.labels[indices],
            regression_tag=self.regression_tag,
            sample_index=None if self.sample_index is None else self.sample_index[indices],
        )


@dataclass(frozen=True)
class SineRegression:
    """P(Y = 1 | phi) = |sin(delta * phi)|."""

    delta: int = 1

    def __call__(self, phi):
        return np.abs(np.sin(self.delta * np.asarray(phi, dtype=np.float64)))

    @property
    def tag(self) -> str:
        return f"|sin({self.delta}*phi)|"


def sine_regression(delta: int) -> SineRegression:
    if delta < 1 or int(delta) != delta:
        raise ConfigurationError(f"delta must be a positive integer, got {delta}")
    return SineRegression(int(delta))


def _check_count(m: int, n: int) -> None:
    if m < 2:
        raise ConfigurationError(f"m must be at least 2, got {m}")
    if n < 1:
        raise ConfigurationError(f"n must be at least 1, got {n}")


def sample_latents(spec: ManifoldSpec, m: int, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw phi (m,) and psi (m, n) uniformly; psi uses one stream per sample."""
    _check_count(m, n)
    phi_lo, phi_hi = spec.phi_range
    psi_lo, psi_hi = spec.psi_range
    phi = phi_lo + (phi_hi - phi_lo) * stream(seed, "phi").random(m)
    psi = np.empty((m, n))
    for i in range(m):
        psi[i] = psi_lo + (psi_hi - psi_lo) * stream(seed, "psi", i).random(n)
    return phi, psi


def _check_range(name: str, values: np.ndarray, bounds: tuple[float, float]) -> None:
    lo, hi = bounds
    if values.size and (np.min(values) < lo - _RANGE_SLACK or np.max(values) > hi + _RANGE_SLACK):
        raise DomainError(f"{name} outside [{lo}, {hi}]")


def embed_points(spec: ManifoldSpec, phi, psi) -> np.ndarray:
    """Vectorised embedding; phi and psi broadcast, result has a trailing D axis."""
    phi = np.asarray(phi, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(psi))):
        raise DomainError("latents must be finite")
    _check_range("phi", phi, spec.phi_range)
    _check_range("psi", psi, spec.psi_range)
    phi, psi = np.broadcast_arrays(phi, psi)

    if spec.kind is ManifoldKind.TORUS:
        ring = spec.major_radius + spec.minor_radius * np.cos(phi)
        coords = (ring * np.cos(psi), ring * np.sin(psi), spec.minor_radius * np.sin(phi))
    elif spec.kind is ManifoldKind.SWISS_ROLL_1:
        coords = (phi * np.cos(phi), phi * np.sin(phi), psi)
    elif spec.kind is ManifoldKind.SWISS_ROLL_2:
        coords = (psi * np.cos(psi), psi * np.sin(psi), phi)
    else:
        coords = (spec.r_s * np.cos(phi), spec.r_s * np.sin(phi), spec.r_v * np.cos(psi), spec.r_v * np.sin(psi))
    return np.stack(coords, axis=-1)


def embed_point(spec: ManifoldSpec, phi: float, psi: float) -> np.ndarray:
    """Closed-form embedding of a single latent pair."""
    return embed_points(spec, phi, psi)


def generate_dataset(spec: ManifoldSpec, m: int, n: int, seed: int) -> MultiViewDataset:
    phi, psi = sample_latents(spec, m, n, seed)
    points = embed_points(spec, phi[:, None], psi)
    logger.debug(f"Generated {spec.kind.value} dataset m={m} n={n} seed={seed}")
    return MultiViewDataset(points=points, seed=seed, latent_phi=phi, latent_psi=psi, spec=spec)


def draw_labels(phi: np.ndarray, regression: Callable, seed: int) -> np.ndarray:
    """Y = +1 with probability regression(phi), else -1."""
    prob = np.asarray(regression(phi), dtype=np.float64)
    if prob.shape != np.shape(phi):
        prob = np.broadcast_to(prob, np.shape(phi))
    if not np.all(np.isfinite(prob)) or np.any(prob < 0.0) or np.any(prob > 1.0):
        raise DomainError("regression function must map phi into [0, 1]")
    u = stream(seed, "labels").random(len(phi))
    return np.where(u < prob, 1, -1).astype(np.int64)


def assign_labels(dataset: MultiViewDataset, regression: Callable, seed: int) -> LabeledDataset:
    """Label every sample; its representative feature is view X_{i,1}."""
    if dataset.latent_phi is None:
        raise ConfigurationError("labels from a regression function need the latent phi")
    labels = draw_labels(dataset.latent_phi, regression, seed)
    tag = getattr(regression, "tag", getattr(regression, "__name__", repr(regression)))
    return LabeledDataset(
        features=dataset.points[:, 0, :],
        labels=labels,
        regression_tag=tag,
        sample_index=np.arange(dataset.m),
    )
