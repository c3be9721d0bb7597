"""
Integration tests for the augmanifold command line: outputs and exit codes.
"""

import numpy as np
import pandas as pd
import pytest

from augmanifold.cli import main
from augmanifold.manifolds import MultiViewDataset
from augmanifold.storage import load_dataset, load_params, load_weights, read_sidecar, save_dataset


pytestmark = pytest.mark.integration

SMALL_DATASET = ["dataset.m=60", "dataset.n=3", "dataset.seed=3"]
SMALL_COMPARISON = [
    *SMALL_DATASET,
    "experiment.representations=[raw, le]",
    "experiment.sizes=[10]",
    "experiment.test_size=20",
    "experiment.repeats=2",
]


class TestCommands:
    """Successful runs and the files they write"""

    def test_generate(self, run_cli, output_dir):
        """generate writes a dataset container"""
        assert run_cli("generate", overrides=SMALL_DATASET) == 0
        dataset = load_dataset(output_dir / "dataset.bin")
        assert (dataset.m, dataset.n, dataset.D) == (60, 3, 3)
        assert dataset.seed == 3

    def test_generate_is_reproducible(self, run_cli, output_dir):
        """The same seed writes identical points"""
        run_cli("generate", overrides=SMALL_DATASET)
        first = load_dataset(output_dir / "dataset.bin").points
        run_cli("generate", overrides=SMALL_DATASET)
        np.testing.assert_array_equal(load_dataset(output_dir / "dataset.bin").points, first)

    def test_embed_from_file(self, run_cli, output_dir):
        """embed reads a saved dataset and writes coordinates, eigenvalues and weights"""
        run_cli("generate", overrides=SMALL_DATASET)
        code = run_cli(
            "embed",
            "--save-weights",
            overrides=[f"dataset.input={output_dir / 'dataset.bin'}", "embedding.method=diffusion_maps"],
        )
        assert code == 0
        table = pd.read_csv(output_dir / "embedding.csv")
        assert len(table) == 60
        assert {"coord_1", "coord_2", "phi"} <= set(table.columns)
        assert len(pd.read_csv(output_dir / "embedding_eigenvalues.csv")) == 2
        assert load_weights(output_dir / "weights.bin").values.shape == (60, 60)
        assert read_sidecar(output_dir / "embedding.csv")["provenance"]["command"] == "embed"

    def test_knn_eval(self, run_cli, output_dir):
        """knn-eval writes the result table with provenance"""
        assert run_cli("knn-eval", overrides=SMALL_COMPARISON) == 0
        table = pd.read_csv(output_dir / "results.csv")
        assert table["representation"].tolist() == ["raw", "le"]
        assert read_sidecar(output_dir / "results.csv")["provenance"]["config"]["experiment"]["repeats"] == 2

    def test_prefix(self, run_cli, output_dir):
        """The output prefix is applied to every file"""
        assert run_cli("generate", overrides=[*SMALL_DATASET, "output.prefix=run1_"]) == 0
        assert (output_dir / "run1_dataset.bin").is_file()

    def test_train_encoder(self, run_cli, output_dir):
        """train-encoder writes a checkpoint and the loss trajectory"""
        code = run_cli(
            "train-encoder", overrides=[*SMALL_DATASET, "encoder.hidden=[8]", "encoder.epochs=3", "encoder.batch_size=16"]
        )
        assert code == 0
        assert load_params(output_dir / "encoder.bin").layer_dims == (3, 8, 2)
        trajectory = pd.read_csv(output_dir / "trajectory.csv")
        assert trajectory["epoch"].tolist() == [0, 1, 2, 3]

    def test_shipped_config(self, run_cli, output_dir, config_dir):
        """Shipped files run with overrides"""
        code = run_cli("generate", "--config", str(config_dir / "torus-embed.yaml"), overrides=["dataset.m=20"])
        assert code == 0
        assert load_dataset(output_dir / "dataset.bin").m == 20


class TestExitCodes:
    """Failures map to documented exit codes"""

    def test_no_command(self):
        """Running without a command prints help and exits 2"""
        assert main([]) == 2

    def test_unknown_command(self):
        """argparse rejects unknown commands with 2"""
        with pytest.raises(SystemExit) as excinfo:
            main(["cluster"])
        assert excinfo.value.code == 2

    def test_version(self, capsys):
        """--version exits 0"""
        with pytest.raises(SystemExit) as excinfo:
            main(["--version"])
        assert excinfo.value.code == 0
        assert "augmanifold" in capsys.readouterr().out

    def test_unknown_key(self, run_cli):
        """Unknown configuration keys exit 2"""
        assert run_cli("generate", overrides=["dataset.views=3"]) == 2

    def test_mistyped_value(self, run_cli):
        """A value of the wrong type exits 2"""
        assert run_cli("train-encoder", overrides=["encoder.learning_rate=fast"]) == 2

    def test_mistyped_file_value(self, run_cli, tmp_path):
        """A wrong type inside a configuration file also exits 2"""
        path = tmp_path / "bad-types.yaml"
        path.write_text("dataset:\n  m: many\n", encoding="utf-8")
        assert run_cli("generate", "--config", str(path)) == 2

    def test_missing_config(self, run_cli, tmp_path):
        """A missing configuration file exits 2"""
        assert run_cli("generate", "--config", str(tmp_path / "absent.yaml")) == 2

    def test_missing_input(self, run_cli, tmp_path):
        """A missing dataset file exits 2"""
        assert run_cli("embed", overrides=[f"dataset.input={tmp_path / 'absent.bin'}"]) == 2

    def test_corrupt_input(self, run_cli, tmp_path):
        """A file that is not a container exits 3"""
        path = tmp_path / "garbage.bin"
        path.write_bytes(b"not a dataset at all")
        assert run_cli("embed", overrides=[f"dataset.input={path}"]) == 3

    def test_coincident_points(self, run_cli, tmp_path):
        """Identical points leave no bandwidth and exit 4"""
        path = save_dataset(tmp_path / "flat.bin", MultiViewDataset(points=np.zeros((5, 2, 3)), seed=0))
        assert run_cli("embed", overrides=[f"dataset.input={path}"]) == 4

    def test_divergent_training(self, run_cli):
        """A divergent learning rate exits 5"""
        overrides = [
            *SMALL_DATASET,
            "kernel.rule=fixed",
            "kernel.value=20.0",
            "encoder.hidden=[8]",
            "encoder.batch_size=10",
            "encoder.learning_rate=1e6",
            "encoder.epochs=20",
        ]
        assert run_cli("train-encoder", overrides=overrides) == 5

    def test_mnist_without_directory(self, run_cli, monkeypatch):
        """MNIST evaluation without a data folder exits 2"""
        monkeypatch.delenv("AUGMANIFOLD_MNIST_DIR", raising=False)
        assert run_cli("mnist-eval") == 2
