"""
Comparison harness: kNN misclassification error of raw coordinates against
spectral and encoder representations.

Simulation protocol, per repeat (each with its own derived seed):

1. draw m unlabeled samples with n views and label them from phi;
2. fit every representation on all m samples;
3. draw a test set of ``test_size`` samples and a disjoint training set of s;
4. record the kNN error of each representation.

The sample-size sweep varies s with the |sin(phi)| regression; the delta sweep
fixes s and varies delta in |sin(delta * phi)|. MNIST follows the same pattern
with augmented image views and a multi-class vote.
"""

import logging
import math
from dataclasses import dataclass, replace
from multiprocessing import Pool

import numpy as np
import pandas as pd
from scipy.integrate import quad

from augmanifold.config import ExperimentConfig
from augmanifold.encoder import EncoderParams, encode
from augmanifold.errors import ConfigurationError
from augmanifold.images import Augmentation, augmented_views, load_idx
from augmanifold.kernel import WeightMatrix, bandwidth_heuristic, integrated_weights
from augmanifold.knn import (
    KnnConfig,
    KRule,
    RepresentationKind,
    RepresentationMap,
    knn_vote,
    misclassification_error,
    raw_representation,
    standard_error,
)
from augmanifold.manifolds import ManifoldSpec, MultiViewDataset, assign_labels, generate_dataset, sine_regression
from augmanifold.objective import LossConfig, default_architecture, train
from augmanifold.rng import derive_seed, stream
from augmanifold.spectral import Embedding, diffusion_maps, laplacian_eigenmaps, nystrom_extend
from augmanifold.storage import RESULT_COLUMNS


logger = logging.getLogger(__name__)

DIFFUSION_TIME = 0.1
EXTENSION_CHUNK = 100
SPECTRAL_PRESETS = {
    "le": None,
    "dm_half": 0.5,
    "dm_one": 1.0,
}


def bayes_error(regression, phi_range: tuple[float, float] = (0.0, 2.0 * math.pi)) -> float:
    """E[min(gamma, 1 - gamma)] for phi uniform over ``phi_range``."""
    lo, hi = phi_range

    def integrand(phi: float) -> float:
        gamma = float(regression(phi))
        return min(gamma, 1.0 - gamma)

    value, _ = quad(integrand, lo, hi, limit=400)
    return value / (hi - lo)


def spectral_representation(
    embedding: Embedding, weights: WeightMatrix, train: MultiViewDataset, name: str = "spectral"
) -> RepresentationMap:
    """In-sample rows are the embedding; new samples are Nyström-extended over their views."""
    return RepresentationMap(
        kind=RepresentationKind.SPECTRAL,
        output_dim=embedding.N,
        transform=lambda views: nystrom_extend(embedding, weights, train, views),
        in_sample=embedding.coords,
        name=name,
    )


def encoder_representation(params: EncoderParams, name: str = "encoder") -> RepresentationMap:
    return RepresentationMap(
        kind=RepresentationKind.ENCODER,
        output_dim=params.output_dim,
        transform=lambda views: encode(params, views[:, 0, :]),
        name=name,
    )


def fit_spectral(name: str, weights: WeightMatrix, n_components: int) -> Embedding:
    if name not in SPECTRAL_PRESETS:
        raise ConfigurationError(f"unknown spectral representation {name!r}")
    alpha = SPECTRAL_PRESETS[name]
    if alpha is None:
        return laplacian_eigenmaps(weights, n_components)
    return diffusion_maps(weights, n_components, alpha, DIFFUSION_TIME)


def fit_representations(
    names: list[str],
    dataset: MultiViewDataset,
    t: float,
    n_components: int,
    loss_cfg: LossConfig | None = None,
    hidden: list[int] | tuple[int, ...] = (64, 64),
) -> dict[str, RepresentationMap]:
    """Fit the named representations on all samples of ``dataset``."""
    reps: dict[str, RepresentationMap] = {}
    weights = integrated_weights(dataset, t) if any(n in SPECTRAL_PRESETS for n in names) else None
    for name in names:
        if name == "raw":
            reps[name] = raw_representation(dataset.D)
        elif name == "encoder":
            if loss_cfg is None:
                raise ConfigurationError("the encoder representation needs a training configuration")
            result = train(dataset, default_architecture(dataset.D, n_components, hidden), loss_cfg)
            encoder = encoder_representation(result.params)
            reps[name] = RepresentationMap(
                encoder.kind, encoder.output_dim, encoder.transform, encoder.transform(dataset.points), name
            )
        else:
            reps[name] = spectral_representation(fit_spectral(name, weights, n_components), weights, dataset, name)
    return reps


def split_indices(m: int, s: int, test_size: int, seed: int, *path) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint (train, test) index sets drawn from m samples."""
    if s + test_size > m:
        raise ConfigurationError(f"training size {s} plus test size {test_size} exceeds the {m} samples")
    order = stream(seed, "split", *path).permutation(m)
    return order[test_size : test_size + s], order[:test_size]


@dataclass(frozen=True)
class RepeatTask:
    """Everything one simulation repeat needs; picklable for worker processes."""

    config: ExperimentConfig
    manifold: str
    repeat: int


def _rate_dim(name: str, spec: ManifoldSpec) -> int:
    return spec.d if name == "raw" else spec.d_s


def resolve_k(knn_cfg: KnnConfig, s: int, dim: int, label: str) -> int:
    """k used for one representation at training size s, logged at INFO."""
    k = knn_cfg.resolve(s, dim)
    logger.info(f"{label}: k={k} at s={s}")
    if knn_cfg.rule is KRule.RATE and k == 1 and s > 1:
        logger.warning(
            f"{label}: the rate rule with dim={knn_cfg.dim or dim} gives k=1 at s={s}; "
            "set knn.rule=fixed and knn.k to choose k"
        )
    return k


def run_repeat(task: RepeatTask) -> list[dict]:
    """Errors of every (representation, s or delta) cell for one repeat."""
    cfg = task.config
    exp, ds = cfg.experiment, cfg.dataset
    seed = derive_seed(exp.seed, task.manifold, task.repeat)
    spec = ds.spec(task.manifold)
    dataset = generate_dataset(spec, ds.m, ds.n, seed)
    t = bandwidth_heuristic(dataset, cfg.kernel.bandwidth_rule(spec.d, seed))
    n_components = cfg.embedding.n_components
    loss_cfg = cfg.encoder.loss_config(t) if "encoder" in exp.representations else None
    if loss_cfg is not None:
        loss_cfg = replace(loss_cfg, seed=derive_seed(seed, "encoder"))
    reps = fit_representations(exp.representations, dataset, t, n_components, loss_cfg, cfg.encoder.hidden)
    knn_cfg: KnnConfig = cfg.knn.knn_config()

    if exp.sweep == "sample_size":
        cells = [(s, s, 1) for s in exp.sizes]
    else:
        cells = [(delta, exp.s, delta) for delta in exp.deltas]

    records = []
    for key, s, delta in cells:
        labeled = assign_labels(dataset, sine_regression(delta), derive_seed(seed, "labels", delta))
        train_idx, test_idx = split_indices(dataset.m, s, exp.test_size, seed, key)
        train_set, test_set = labeled.subset(train_idx), labeled.subset(test_idx)
        for name, rep in reps.items():
            error = misclassification_error(rep, train_set, test_set, knn_cfg, rate_dim=_rate_dim(name, spec))
            records.append(
                {"manifold": task.manifold, "representation": name, "s_or_delta": key, "repeat": task.repeat, "error": error}
            )
    logger.debug(f"{task.manifold} repeat {task.repeat}: t={t:.4g} done")
    return records


def summarise(records: pd.DataFrame, cfg: ExperimentConfig, bayes: dict) -> pd.DataFrame:
    """Mean and standard error per cell, aggregated in repeat order."""
    rows = []
    records = records.sort_values(["manifold", "representation", "s_or_delta", "repeat"], kind="stable")
    for (manifold, rep, key), group in records.groupby(["manifold", "representation", "s_or_delta"], sort=False):
        errors = group["error"].to_numpy()
        rows.append(
            {
                "manifold": manifold,
                "representation": rep,
                "s_or_delta": int(key),
                "mean_error": float(np.mean(errors)),
                "stderr": standard_error(errors),
                "repeats": len(errors),
                "seed": cfg.experiment.seed,
                "bayes_error": bayes[(manifold, int(key))],
            }
        )
    table = pd.DataFrame(rows, columns=RESULT_COLUMNS)
    order = {name: i for i, name in enumerate(cfg.experiment.representations)}
    manifolds = {name: i for i, name in enumerate(cfg.experiment.manifolds)}
    table = table.sort_values(
        ["manifold", "representation", "s_or_delta"],
        key=lambda col: col.map(manifolds) if col.name == "manifold" else col.map(order) if col.name == "representation" else col,
        kind="stable",
    )
    return table.reset_index(drop=True)


def run_comparison_experiment(cfg: ExperimentConfig) -> pd.DataFrame:
    """Table of mean kNN error per (manifold, representation, s or delta)."""
    exp = cfg.experiment
    largest = max(exp.sizes) if exp.sweep == "sample_size" else exp.s
    if largest + exp.test_size > cfg.dataset.m:
        raise ConfigurationError(f"s={largest} plus test size {exp.test_size} exceeds m={cfg.dataset.m}")
    tasks = [RepeatTask(cfg, manifold, r) for manifold in exp.manifolds for r in range(exp.repeats)]
    knn_cfg = cfg.knn.knn_config()
    for manifold in exp.manifolds:
        spec = cfg.dataset.spec(manifold)
        for name in exp.representations:
            for s in exp.sizes if exp.sweep == "sample_size" else [exp.s]:
                resolve_k(knn_cfg, s, _rate_dim(name, spec), f"{manifold}/{name}")
    logger.info(
        f"Comparison over {exp.manifolds} x {exp.representations} ({exp.sweep}), "
        f"{exp.repeats} repeats, m={cfg.dataset.m} n={cfg.dataset.n}"
    )
    if exp.workers > 1:
        with Pool(exp.workers) as pool:
            batches = pool.map(run_repeat, tasks)
    else:
        batches = [run_repeat(task) for task in tasks]
    records = pd.DataFrame([record for batch in batches for record in batch])

    bayes = {}
    keys = exp.sizes if exp.sweep == "sample_size" else exp.deltas
    for manifold in exp.manifolds:
        phi_range = cfg.dataset.spec(manifold).phi_range
        for key in keys:
            delta = 1 if exp.sweep == "sample_size" else key
            bayes[(manifold, key)] = bayes_error(sine_regression(delta), phi_range)
    table = summarise(records, cfg, bayes)
    logger.info(f"Comparison finished: {len(table)} cells")
    return table


@dataclass(frozen=True)
class MnistData:
    train_images: np.ndarray
    train_labels: np.ndarray
    test_images: np.ndarray
    test_labels: np.ndarray


def load_mnist(cfg: ExperimentConfig) -> MnistData:
    directory = cfg.mnist.resolve_directory()
    data = MnistData(
        train_images=load_idx(directory / cfg.mnist.train_images),
        train_labels=load_idx(directory / cfg.mnist.train_labels),
        test_images=load_idx(directory / cfg.mnist.test_images),
        test_labels=load_idx(directory / cfg.mnist.test_labels),
    )
    if len(data.train_images) != len(data.train_labels) or len(data.test_images) != len(data.test_labels):
        raise ConfigurationError("MNIST image and label files disagree on the number of items")
    return data


def _flatten(images: np.ndarray) -> np.ndarray:
    return images.reshape(len(images), -1).astype(np.float64) / 255.0


def _multiclass_errors(
    train_x: np.ndarray,
    train_y: np.ndarray,
    test_x: np.ndarray,
    test_y: np.ndarray,
    sizes: list[int],
    repeats: int,
    knn_cfg: KnnConfig,
    seed: int,
    label: str,
) -> list[dict]:
    records = []
    for s in sizes:
        k = resolve_k(knn_cfg, s, train_x.shape[1], label)
        for repeat in range(repeats):
            idx = stream(seed, "mnist-train", s, repeat).choice(len(train_x), size=s, replace=False)
            predictions = knn_vote(train_x[idx], train_y[idx], test_x, k)
            records.append({"representation": label, "s": s, "repeat": repeat, "error": float(np.mean(predictions != test_y))})
    return records


def run_mnist_experiment(cfg: ExperimentConfig, data: MnistData | None = None) -> pd.DataFrame:
    """Raw pixels against spectral and encoder representations for each augmentation pipeline."""
    mn = cfg.mnist
    data = data or load_mnist(cfg)
    seed = mn.seed
    knn_cfg = cfg.knn.knn_config()

    pool_idx = stream(seed, "mnist-unlabeled").choice(len(data.train_images), size=mn.unlabeled, replace=False)
    test_idx = stream(seed, "mnist-test").choice(len(data.test_images), size=min(mn.test_size, len(data.test_images)), replace=False)
    pool_images, pool_labels = data.train_images[pool_idx], data.train_labels[pool_idx].astype(np.int64)
    test_images, test_labels = data.test_images[test_idx], data.test_labels[test_idx].astype(np.int64)
    logger.info(f"MNIST: {mn.unlabeled} unlabeled images x {mn.views} views, {len(test_idx)} test images")

    records = _multiclass_errors(
        _flatten(pool_images), pool_labels, _flatten(test_images), test_labels, mn.sizes, mn.repeats, knn_cfg, seed, "raw"
    )
    for record in records:
        record["augmentation"] = Augmentation.NONE.value

    for name in mn.augmentations:
        augmentation = Augmentation(name)
        train_views = augmented_views(pool_images, mn.views, augmentation, derive_seed(seed, name, "pool"))
        test_views = augmented_views(test_images, mn.views, augmentation, derive_seed(seed, name, "test"))
        t = bandwidth_heuristic(train_views, cfg.kernel.bandwidth_rule(1, seed))
        weights = integrated_weights(train_views, t)
        embedding = laplacian_eigenmaps(weights, mn.n_components)
        test_coords = np.vstack(
            [
                nystrom_extend(embedding, weights, train_views, test_views.points[start : start + EXTENSION_CHUNK])
                for start in range(0, len(test_views.points), EXTENSION_CHUNK)
            ]
        )
        spectral = _multiclass_errors(
            embedding.coords, pool_labels, test_coords, test_labels, mn.sizes, mn.repeats, knn_cfg, seed, "spectral"
        )

        encoded = []
        if mn.encoder:
            corpus_idx = stream(seed, "mnist-corpus").choice(
                len(data.train_images), size=min(mn.encoder_corpus, len(data.train_images)), replace=False
            )
            corpus = augmented_views(
                data.train_images[corpus_idx], mn.encoder_views, augmentation, derive_seed(seed, name, "corpus")
            )
            loss_cfg = cfg.encoder.loss_config(t)
            result = train(corpus, default_architecture(corpus.D, cfg.encoder.n_components, cfg.encoder.hidden), loss_cfg)
            encoded = _multiclass_errors(
                encode(result.params, _flatten(pool_images)),
                pool_labels,
                encode(result.params, _flatten(test_images)),
                test_labels,
                mn.sizes,
                mn.repeats,
                knn_cfg,
                seed,
                "encoder",
            )
        for record in spectral + encoded:
            record["augmentation"] = augmentation.value
        records.extend(spectral + encoded)

    frame = pd.DataFrame(records)
    rows = []
    for (augmentation, rep, s), group in frame.groupby(["augmentation", "representation", "s"], sort=False):
        errors = group.sort_values("repeat")["error"].to_numpy()
        rows.append(
            {
                "augmentation": augmentation,
                "representation": rep,
                "s": int(s),
                "mean_error": float(np.mean(errors)),
                "stderr": standard_error(errors),
                "repeats": len(errors),
                "seed": seed,
            }
        )
    return pd.DataFrame(rows)

