"""
File formats.

Binary container (datasets, weight matrices, encoder checkpoints)::

    bytes 0-3    magic b"AUGM"
    bytes 4-7    format version, uint32 little-endian
    bytes 8-11   header length H, uint32 little-endian
    bytes 12..   header: H bytes of UTF-8 JSON, keys sorted
    then         arrays in header["arrays"] order, little-endian float64, row-major

Each ``header["arrays"]`` entry is ``{"name": ..., "shape": [...]}``. The header
also carries a ``kind`` tag and the provenance of the run that wrote it.

Tables (embeddings, eigenvalues, results, loss trajectories) are CSV written by
pandas; the provenance goes into a JSON sidecar with the same stem.
"""

import json
import logging
import math
import struct
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from augmanifold.encoder import EncoderParams
from augmanifold.errors import ConfigurationError, ParseError
from augmanifold.kernel import WeightMatrix
from augmanifold.manifolds import ManifoldSpec, MultiViewDataset
from augmanifold.spectral import Embedding


logger = logging.getLogger(__name__)

MAGIC = b"AUGM"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sII")

DATASET_KIND = "dataset"
WEIGHTS_KIND = "weights"
CHECKPOINT_KIND = "encoder"

RESULT_COLUMNS = ["manifold", "representation", "s_or_delta", "mean_error", "stderr", "repeats", "seed", "bayes_error"]


def _dumps(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)


def encode_container(kind: str, header: dict, arrays: dict[str, np.ndarray]) -> bytes:
    """Serialise arrays with a JSON header; array order follows ``arrays``."""
    header = dict(header, kind=kind, arrays=[{"name": k, "shape": list(np.shape(v))} for k, v in arrays.items()])
    encoded = _dumps(header).encode("utf-8")
    body = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in arrays.values())
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(encoded)) + encoded + body


def decode_container(data: bytes, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    if len(data) < _PREFIX.size:
        raise ParseError("truncated container prefix", offset=len(data))
    magic, version, header_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}", offset=0)
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported container version {version}", offset=4)
    start = _PREFIX.size
    if len(data) < start + header_len:
        raise ParseError("truncated container header", offset=len(data))
    try:
        header = json.loads(data[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"invalid container header: {exc}", offset=start) from exc
    if kind is not None and header.get("kind") != kind:
        raise ParseError(f"expected a {kind} file, found {header.get('kind')!r}", offset=start)

    arrays: dict[str, np.ndarray] = {}
    offset = start + header_len
    for entry in header.get("arrays", []):
        shape = tuple(int(s) for s in entry["shape"])
        nbytes = 8 * math.prod(shape)
        if len(data) < offset + nbytes:
            raise ParseError(f"truncated array {entry['name']!r}", offset=len(data))
        arrays[entry["name"]] = np.frombuffer(data, dtype="<f8", count=math.prod(shape), offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(data):
        raise ParseError(f"{len(data) - offset} trailing bytes after the last array", offset=offset)
    return header, arrays


def _write_bytes(path: str | Path, payload: bytes) -> Path:
    path = Path(path)
    if not path.parent.exists():
        logger.info(f"Creating output directory {path.parent}")
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)
    return path


def _read_bytes(path: str | Path) -> bytes:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"input file {path} does not exist")
    return path.read_bytes()


def save_dataset(path: str | Path, dataset: MultiViewDataset, provenance: dict | None = None) -> Path:
    arrays = {"points": dataset.points}
    if dataset.latent_phi is not None:
        arrays["latent_phi"] = dataset.latent_phi
    if dataset.latent_psi is not None:
        arrays["latent_psi"] = dataset.latent_psi
    if dataset.labels is not None:
        arrays["labels"] = np.asarray(dataset.labels, dtype=np.float64)
    header = {
        "m": dataset.m,
        "n": dataset.n,
        "D": dataset.D,
        "seed": int(dataset.seed),
        "spec": None if dataset.spec is None else dataset.spec.describe(),
        "provenance": provenance or {},
    }
    return _write_bytes(path, encode_container(DATASET_KIND, header, arrays))


def load_dataset(path: str | Path) -> MultiViewDataset:
    header, arrays = decode_container(_read_bytes(path), DATASET_KIND)
    labels = arrays.get("labels")
    return MultiViewDataset(
        points=arrays["points"],
        seed=int(header["seed"]),
        latent_phi=arrays.get("latent_phi"),
        latent_psi=arrays.get("latent_psi"),
        spec=None if header.get("spec") is None else ManifoldSpec.from_descriptor(header["spec"]),
        labels=None if labels is None else labels.astype(np.int64),
    )


def save_weights(path: str | Path, weights: WeightMatrix, provenance: dict | None = None) -> Path:
    header = {"m": weights.m, "t": weights.bandwidth_t, "n_views": weights.n_views, "provenance": provenance or {}}
    return _write_bytes(path, encode_container(WEIGHTS_KIND, header, {"W": weights.values}))


def load_weights(path: str | Path) -> WeightMatrix:
    header, arrays = decode_container(_read_bytes(path), WEIGHTS_KIND)
    return WeightMatrix(values=arrays["W"], bandwidth_t=float(header["t"]), n_views=int(header["n_views"]))


def save_params(path: str | Path, params: EncoderParams, provenance: dict | None = None) -> Path:
    arrays: dict[str, np.ndarray] = {"input_shift": params.input_shift}
    for layer, (w, b) in enumerate(zip(params.weights, params.biases, strict=True)):
        arrays[f"W{layer}"] = w
        arrays[f"b{layer}"] = b
    header = {
        "layer_dims": list(params.layer_dims),
        "activation": params.activation,
        "input_scale": params.input_scale,
        "output_scale": params.output_scale,
        "provenance": provenance or {},
    }
    return _write_bytes(path, encode_container(CHECKPOINT_KIND, header, arrays))


def load_params(path: str | Path) -> EncoderParams:
    header, arrays = decode_container(_read_bytes(path), CHECKPOINT_KIND)
    layers = len(header["layer_dims"]) - 1
    return EncoderParams(
        layer_dims=tuple(header["layer_dims"]),
        weights=tuple(arrays[f"W{i}"] for i in range(layers)),
        biases=tuple(arrays[f"b{i}"] for i in range(layers)),
        input_shift=arrays["input_shift"],
        input_scale=float(header["input_scale"]),
        activation=header["activation"],
        output_scale=float(header.get("output_scale", 1.0)),
    )


def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".json")


def write_sidecar(path: str | Path, payload: dict[str, Any]) -> Path:
    target = sidecar_path(path)
    return _write_bytes(target, (json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n").encode("utf-8"))


def read_sidecar(path: str | Path) -> dict:
    return json.loads(_read_bytes(sidecar_path(path)).decode("utf-8"))


def write_table(path: str | Path, table: pd.DataFrame, provenance: dict | None = None) -> Path:
    """CSV with minimal quoting plus a provenance sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
    if provenance is not None:
        write_sidecar(path, {"provenance": provenance})
    return path


def embedding_table(embedding: Embedding, dataset: MultiViewDataset | None = None) -> pd.DataFrame:
    """Coordinates per sample plus the latents for colouring scatter plots."""
    table = pd.DataFrame({"sample": np.arange(embedding.m)})
    for k in range(embedding.N):
        table[f"coord_{k + 1}"] = embedding.coords[:, k]
    if dataset is not None and dataset.latent_phi is not None:
        table["phi"] = dataset.latent_phi
        for j in range(dataset.n):
            table[f"psi_{j + 1}"] = dataset.latent_psi[:, j]
    if dataset is not None and dataset.labels is not None:
        table["label"] = dataset.labels
    return table


def eigenvalue_table(embedding: Embedding) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "component": np.arange(1, embedding.N + 1),
            "eigenvalue": embedding.eigenvalues,
            "transition_eigenvalue": embedding.transition_eigenvalues,
        }
    )


def save_embedding(
    path: str | Path, embedding: Embedding, dataset: MultiViewDataset | None = None, provenance: dict | None = None
) -> Path:
    """Write the coordinate CSV, an eigenvalue CSV beside it and the metadata sidecar."""
    path = Path(path)
    write_table(path, embedding_table(embedding, dataset))
    write_table(path.with_name(f"{path.stem}_eigenvalues.csv"), eigenvalue_table(embedding), provenance or {})
    write_sidecar(path, {"embedding": embedding.metadata(), "provenance": provenance or {}})
    return path


def results_frame(rows: list[dict]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)
