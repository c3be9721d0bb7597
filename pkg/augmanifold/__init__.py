"""Augmentation-invariant manifold learning: integrated-kernel spectral embeddings,
Nyström extension, kNN evaluation and a triplet-objective encoder."""

__version__ = "0.1.0"

from augmanifold.errors import (  # noqa: E402
    AugmanifoldError,
    ConfigurationError,
    DataError,
    DomainError,
    ExtensionError,
    NumericalError,
    ParseError,
    TrainingError,
)
from augmanifold.kernel import WeightMatrix, bandwidth_heuristic, degree_vector, integrated_weights  # noqa: E402
from augmanifold.manifolds import (  # noqa: E402
    LabeledDataset,
    ManifoldSpec,
    MultiViewDataset,
    assign_labels,
    embed_point,
    generate_dataset,
    sample_latents,
    sine_regression,
)
from augmanifold.spectral import Embedding, diffusion_maps, laplacian_eigenmaps, nystrom_extend  # noqa: E402

__all__ = [
    "AugmanifoldError",
    "ConfigurationError",
    "DataError",
    "DomainError",
    "Embedding",
    "ExtensionError",
    "LabeledDataset",
    "ManifoldSpec",
    "MultiViewDataset",
    "NumericalError",
    "ParseError",
    "TrainingError",
    "WeightMatrix",
    "__version__",
    "assign_labels",
    "bandwidth_heuristic",
    "degree_vector",
    "diffusion_maps",
    "embed_point",
    "generate_dataset",
    "integrated_weights",
    "laplacian_eigenmaps",
    "nystrom_extend",
    "sample_latents",
    "sine_regression",
]
