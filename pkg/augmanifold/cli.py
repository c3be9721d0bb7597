"""
augmanifold command line.

Usage:
    augmanifold generate --config config/torus-embed.yaml
    augmanifold embed --config config/torus-embed.yaml --set embedding.method=diffusion_maps
    augmanifold knn-eval --config config/sample-size-sweep.yaml --set experiment.repeats=10
    augmanifold train-encoder --config config/encoder.yaml
    augmanifold mnist-eval --config config/mnist.yaml

Exit codes: 0 success, 1 other package or I/O error, 2 configuration or usage
error, 3 parse error, 4 numerical or data error, 5 training error.
"""

import argparse
import logging
import sys

import numpy as np

from augmanifold import __version__
from augmanifold.config import ExperimentConfig, load_config
from augmanifold.errors import AugmanifoldError
from augmanifold.experiments import run_comparison_experiment, run_mnist_experiment
from augmanifold.kernel import bandwidth_heuristic, integrated_weights
from augmanifold.manifolds import MultiViewDataset, generate_dataset
from augmanifold.objective import default_architecture, train
from augmanifold.spectral import DIFFUSION_MAPS, circular_rank_correlation, diffusion_maps, laplacian_eigenmaps
from augmanifold.storage import load_dataset, save_dataset, save_embedding, save_params, save_weights, write_table


logger = logging.getLogger(__name__)


def provenance(command: str, cfg: ExperimentConfig, seed: int) -> dict:
    return {"package": "augmanifold", "version": __version__, "command": command, "seed": int(seed), "config": cfg.to_dict()}


def _dataset(cfg: ExperimentConfig) -> MultiViewDataset:
    if cfg.dataset.input:
        dataset = load_dataset(cfg.dataset.input)
        logger.info(f"Loaded dataset {cfg.dataset.input}: m={dataset.m} n={dataset.n} D={dataset.D}")
        return dataset
    spec = cfg.dataset.spec()
    dataset = generate_dataset(spec, cfg.dataset.m, cfg.dataset.n, cfg.dataset.seed)
    logger.info(f"Generated {spec.kind.value}: m={dataset.m} n={dataset.n} D={dataset.D} seed={dataset.seed}")
    return dataset


def _bandwidth(cfg: ExperimentConfig, dataset: MultiViewDataset) -> float:
    intrinsic = dataset.spec.d if dataset.spec is not None else 1
    t = bandwidth_heuristic(dataset, cfg.kernel.bandwidth_rule(intrinsic, cfg.dataset.seed))
    logger.info(f"Bandwidth t={t:.6g} ({cfg.kernel.rule}, scale {cfg.kernel.scale})")
    return t


def cmd_generate(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    dataset = _dataset(cfg)
    path = save_dataset(cfg.output_path("dataset.bin"), dataset, provenance("generate", cfg, dataset.seed))
    logger.info(f"Wrote {dataset.m * dataset.n} points to {path}")
    return 0


def cmd_embed(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    dataset = _dataset(cfg)
    t = _bandwidth(cfg, dataset)
    weights = integrated_weights(dataset, t)
    emb = cfg.embedding
    if emb.method == DIFFUSION_MAPS:
        embedding = diffusion_maps(weights, emb.n_components, emb.alpha, emb.diffusion_time)
    else:
        embedding = laplacian_eigenmaps(weights, emb.n_components)
    logger.info(f"{embedding.method}: N={embedding.N} eigenvalues {np.round(embedding.eigenvalues, 6).tolist()}")
    if dataset.latent_phi is not None and embedding.N >= 2:
        rho = circular_rank_correlation(embedding.coords[:, :2], dataset.latent_phi)
        logger.info(f"Circular rank correlation with phi: {rho:.4f}")

    info = provenance("embed", cfg, dataset.seed)
    path = save_embedding(cfg.output_path("embedding.csv"), embedding, dataset, info)
    if args.save_weights:
        save_weights(cfg.output_path("weights.bin"), weights, info)
    logger.info(f"Wrote embedding to {path}")
    return 0


def cmd_knn_eval(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    table = run_comparison_experiment(cfg)
    path = write_table(cfg.output_path("results.csv"), table, provenance("knn-eval", cfg, cfg.experiment.seed))
    logger.info(f"Wrote {len(table)} rows to {path}")
    return 0


def cmd_train_encoder(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    dataset = _dataset(cfg)
    t = _bandwidth(cfg, dataset)
    loss_cfg = cfg.encoder.loss_config(t)
    arch = default_architecture(dataset.D, cfg.encoder.n_components, cfg.encoder.hidden)
    result = train(dataset, arch, loss_cfg)
    info = provenance("train-encoder", cfg, loss_cfg.seed)
    info["loss"] = loss_cfg.describe()
    save_params(cfg.output_path("encoder.bin"), result.params, info)
    path = write_table(cfg.output_path("trajectory.csv"), result.trajectory, info)
    logger.info(f"Wrote checkpoint and loss trajectory next to {path}")
    return 0


def cmd_mnist_eval(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    table = run_mnist_experiment(cfg)
    path = write_table(cfg.output_path("mnist_results.csv"), table, provenance("mnist-eval", cfg, cfg.mnist.seed))
    logger.info(f"Wrote {len(table)} rows to {path}")
    return 0


COMMANDS = {
    "generate": (cmd_generate, "Generate a multi-view manifold dataset"),
    "embed": (cmd_embed, "Compute a spectral embedding"),
    "knn-eval": (cmd_knn_eval, "Run the kNN representation comparison"),
    "train-encoder": (cmd_train_encoder, "Train the triplet-objective encoder"),
    "mnist-eval": (cmd_mnist_eval, "Run the MNIST comparison"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="augmanifold",
        description="Augmentation-invariant manifold learning experiments",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s generate --config config/torus-embed.yaml
  %(prog)s knn-eval --config config/sample-size-sweep.yaml --set experiment.repeats=10
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", help="Command to run")
    for name, (_, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", help="YAML configuration file")
        sub.add_argument(
            "--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE", help="Override a key"
        )
        verbosity = sub.add_mutually_exclusive_group()
        verbosity.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
        verbosity.add_argument("--quiet", "-q", action="store_true", help="Warnings and errors only")
        if name == "embed":
            sub.add_argument("--save-weights", action="store_true", help="Also write the weight matrix")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 2

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s")

    handler, _ = COMMANDS[args.command]
    try:
        cfg = load_config(args.config, args.overrides)
        return handler(cfg, args)
    except AugmanifoldError as exc:
        logger.error(str(exc))
        return exc.exit_code
    except OSError as exc:
        logger.error(f"I/O error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
