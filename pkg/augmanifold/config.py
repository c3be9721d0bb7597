"""
Experiment configuration.

A configuration file is YAML with one flat mapping per section::

    dataset:
      manifold: torus
      m: 400
      n: 3
    kernel:
      rule: median
      scale: 1.0

Missing keys take the defaults below; unknown sections or keys are errors.
Command-line overrides use ``section.key=value`` and parse the value as YAML,
so ``experiment.sizes=[50, 100]`` yields a list. Every value is converted to
the type of its field: ``1e-5`` (a string to YAML) becomes a float, ``400.0``
an int; values that do not convert are configuration errors.
"""

import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, get_args, get_origin, get_type_hints

import yaml

from augmanifold.errors import ConfigurationError
from augmanifold.kernel import BandwidthKind, BandwidthRule
from augmanifold.knn import KnnConfig, KRule
from augmanifold.manifolds import ManifoldSpec, spec_by_name
from augmanifold.objective import LossConfig


logger = logging.getLogger(__name__)

MNIST_DIR_ENV = "AUGMANIFOLD_MNIST_DIR"
REPRESENTATIONS = ("raw", "le", "dm_half", "dm_one", "encoder")


@dataclass(frozen=True)
class DatasetSection:
    manifold: str = "torus"
    m: int = 400
    n: int = 3
    seed: int = 0
    r_s: float | None = None
    r_v: float | None = None
    input: str | None = None

    def spec(self, manifold: str | None = None) -> ManifoldSpec:
        params = {k: v for k, v in (("r_s", self.r_s), ("r_v", self.r_v)) if v is not None}
        return spec_by_name(manifold or self.manifold, **params)


@dataclass(frozen=True)
class KernelSection:
    rule: str = "median"
    d: int | None = None
    value: float | None = None
    scale: float = 1.0

    def bandwidth_rule(self, intrinsic_dim: int, seed: int = 0) -> BandwidthRule:
        try:
            kind = BandwidthKind(self.rule)
        except ValueError as exc:
            raise ConfigurationError(f"unknown bandwidth rule {self.rule!r}") from exc
        return BandwidthRule(kind, d=self.d or intrinsic_dim, value=self.value, scale=self.scale, seed=seed)


@dataclass(frozen=True)
class EmbeddingSection:
    method: str = "laplacian_eigenmaps"
    n_components: int = 2
    alpha: float = 1.0
    diffusion_time: float = 0.1


@dataclass(frozen=True)
class KnnSection:
    rule: str = "rate"
    k: int | None = None
    holder_alpha: float = 1.0
    dim: int | None = None

    def knn_config(self) -> KnnConfig:
        try:
            rule = KRule(self.rule)
        except ValueError as exc:
            raise ConfigurationError(f"unknown k rule {self.rule!r}") from exc
        return KnnConfig(rule=rule, k=self.k, holder_alpha=self.holder_alpha, dim=self.dim)


@dataclass(frozen=True)
class ExperimentSection:
    manifolds: list[str] = field(default_factory=lambda: ["torus"])
    representations: list[str] = field(default_factory=lambda: ["raw", "le", "dm_half", "dm_one"])
    sweep: str = "sample_size"
    sizes: list[int] = field(default_factory=lambda: [50, 100, 200, 300])
    deltas: list[int] = field(default_factory=lambda: [1, 2, 3, 4])
    s: int = 300
    test_size: int = 100
    repeats: int = 100
    seed: int = 0
    workers: int = 1


@dataclass(frozen=True)
class EncoderSection:
    hidden: list[int] = field(default_factory=lambda: [64, 64])
    n_components: int = 2
    lambda1: float = 100.0
    lambda2: float = 200.0
    bandwidth: float | None = None
    batch_size: int = 64
    learning_rate: float = 2e-5
    epochs: int = 200
    lr_decay: float = 1.0
    seed: int = 0

    def loss_config(self, bandwidth_t: float) -> LossConfig:
        return LossConfig(
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            bandwidth_t=self.bandwidth if self.bandwidth is not None else bandwidth_t,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            seed=self.seed,
            lr_decay=self.lr_decay,
        )


@dataclass(frozen=True)
class MnistSection:
    directory: str | None = None
    train_images: str = "train-images-idx3-ubyte.gz"
    train_labels: str = "train-labels-idx1-ubyte.gz"
    test_images: str = "t10k-images-idx3-ubyte.gz"
    test_labels: str = "t10k-labels-idx1-ubyte.gz"
    unlabeled: int = 1000
    views: int = 7
    augmentations: list[str] = field(default_factory=lambda: ["resize_crop", "rotate_resize_crop"])
    sizes: list[int] = field(default_factory=lambda: [50, 100, 200, 400])
    test_size: int = 1000
    repeats: int = 50
    n_components: int = 20
    encoder: bool = True
    encoder_corpus: int = 10000
    encoder_views: int = 2
    seed: int = 0

    def resolve_directory(self) -> Path:
        directory = self.directory or os.environ.get(MNIST_DIR_ENV)
        if not directory:
            raise ConfigurationError(f"set mnist.directory or ${MNIST_DIR_ENV} to the folder holding the IDX files")
        return Path(directory)


@dataclass(frozen=True)
class OutputSection:
    directory: str = "results"
    prefix: str = ""


SECTIONS = {
    "dataset": DatasetSection,
    "kernel": KernelSection,
    "embedding": EmbeddingSection,
    "knn": KnnSection,
    "experiment": ExperimentSection,
    "encoder": EncoderSection,
    "mnist": MnistSection,
    "output": OutputSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    kernel: KernelSection = field(default_factory=KernelSection)
    embedding: EmbeddingSection = field(default_factory=EmbeddingSection)
    knn: KnnSection = field(default_factory=KnnSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    mnist: MnistSection = field(default_factory=MnistSection)
    output: OutputSection = field(default_factory=OutputSection)

    def __post_init__(self):
        validate(self)

    def to_dict(self) -> dict[str, dict[str, Any]]:
        return asdict(self)

    def output_path(self, name: str) -> Path:
        return Path(self.output.directory) / f"{self.output.prefix}{name}"


def _coerce_scalar(target: type, value: Any) -> Any:
    if target is bool:
        if isinstance(value, bool):
            return value
        raise TypeError("expected true or false")
    if isinstance(value, bool):
        raise TypeError(f"expected {target.__name__}, not a boolean")
    if target is int:
        if isinstance(value, int):
            return value
        number = float(value)
        if not number.is_integer():
            raise TypeError("expected an integer")
        return int(number)
    if target is float:
        return float(value)
    if target is str:
        if isinstance(value, str):
            return value
        if isinstance(value, int | float):
            return str(value)
        raise TypeError("expected a string")
    return value


def _coerce(name: str, value: Any, annotation: Any) -> Any:
    """Convert a YAML value to the field's annotated type."""
    args = get_args(annotation)
    optional = type(None) in args
    if optional:
        annotation = next(a for a in args if a is not type(None))
    if value is None:
        if optional:
            return None
        raise ConfigurationError(f"{name} must be set")
    try:
        if get_origin(annotation) is list:
            if not isinstance(value, list | tuple):
                raise TypeError("expected a list")
            (item,) = get_args(annotation)
            return [_coerce_scalar(item, v) for v in value]
        return _coerce_scalar(annotation, value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{name}: cannot use {value!r} ({exc})") from exc


def _section(name: str, values: Any) -> Any:
    cls = SECTIONS.get(name)
    if cls is None:
        raise ConfigurationError(f"unknown configuration section {name!r}; expected one of {sorted(SECTIONS)}")
    if values is None:
        values = {}
    if not isinstance(values, dict):
        raise ConfigurationError(f"section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    hints = get_type_hints(cls)
    coerced = {}
    for key, value in values.items():
        if key not in known:
            raise ConfigurationError(f"unknown key {name}.{key}")
        if isinstance(value, dict):
            raise ConfigurationError(f"{name}.{key} must be a scalar or list, not a mapping")
        coerced[key] = _coerce(f"{name}.{key}", value, hints[key])
    return cls(**coerced)


def from_mapping(mapping: dict[str, Any] | None) -> ExperimentConfig:
    mapping = mapping or {}
    if not isinstance(mapping, dict):
        raise ConfigurationError("a configuration file must contain a mapping of sections")
    try:
        return ExperimentConfig(**{name: _section(name, values) for name, values in mapping.items()})
    except TypeError as exc:
        raise ConfigurationError(f"invalid configuration: {exc}") from exc


def parse_override(text: str) -> tuple[str, str, Any]:
    """Split ``section.key=value`` and parse the value as YAML."""
    target, sep, raw = text.partition("=")
    section, dot, key = target.strip().partition(".")
    if not sep or not dot or not section or not key:
        raise ConfigurationError(f"override {text!r} must look like section.key=value")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse override value {raw!r}: {exc}") from exc
    return section, key, value


def apply_overrides(mapping: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    merged = {name: dict(values or {}) for name, values in mapping.items()}
    for text in overrides:
        section, key, value = parse_override(text)
        merged.setdefault(section, {})[key] = value
    return merged


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> ExperimentConfig:
    """Read a YAML configuration (or start from defaults) and apply overrides."""
    mapping: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"configuration file {path} does not exist")
        try:
            mapping = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(mapping, dict):
            raise ConfigurationError(f"{path} must contain a mapping of sections")
        logger.debug(f"Loaded configuration {path}")
    config = from_mapping(apply_overrides(mapping, overrides or []))
    return config


def _positive(name: str, value: Any) -> None:
    if value is None or value < 1:
        raise ConfigurationError(f"{name} must be a positive integer, got {value}")


def validate(config: ExperimentConfig) -> None:
    """Cross-field checks; module constructors check the rest."""
    ds, exp, emb, enc, mn = config.dataset, config.experiment, config.embedding, config.encoder, config.mnist
    _positive("dataset.n", ds.n)
    if ds.m < 2:
        raise ConfigurationError(f"dataset.m must be at least 2, got {ds.m}")
    _positive("embedding.n_components", emb.n_components)
    if emb.method not in ("laplacian_eigenmaps", "diffusion_maps"):
        raise ConfigurationError(f"unknown embedding method {emb.method!r}")
    if exp.repeats < 1:
        raise ConfigurationError(f"experiment.repeats must be at least 1, got {exp.repeats}")
    _positive("experiment.test_size", exp.test_size)
    _positive("experiment.workers", exp.workers)
    if exp.sweep not in ("sample_size", "delta"):
        raise ConfigurationError(f"experiment.sweep must be sample_size or delta, got {exp.sweep!r}")
    unknown = [r for r in exp.representations if r not in REPRESENTATIONS]
    if unknown or not exp.representations:
        raise ConfigurationError(f"unknown representations {unknown}; expected a subset of {list(REPRESENTATIONS)}")
    for s in [*exp.sizes, exp.s]:
        _positive("training size s", s)
    for delta in exp.deltas:
        _positive("delta", delta)
    _positive("encoder.n_components", enc.n_components)
    if mn.repeats < 1:
        raise ConfigurationError(f"mnist.repeats must be at least 1, got {mn.repeats}")
    for name in ("unlabeled", "views", "test_size", "n_components", "encoder_corpus", "encoder_views"):
        _positive(f"mnist.{name}", getattr(mn, name))
    for s in mn.sizes:
        if not 1 <= s <= mn.unlabeled:
            raise ConfigurationError(f"mnist training size {s} must lie in [1, mnist.unlabeled={mn.unlabeled}]")


def with_section(config: ExperimentConfig, name: str, **values: Any) -> ExperimentConfig:
    """Copy of ``config`` with some keys of one section replaced."""
    return replace(config, **{name: replace(getattr(config, name), **values)})
