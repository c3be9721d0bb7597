"""
MNIST IDX parsing and the two image augmentation pipelines.

Geometry conventions: pixel (r, c) has its centre at (r, c) in array
coordinates, so the image centre of a 28x28 image is (13.5, 13.5). Resizing
uses half-pixel-centre alignment: output pixel r of an a-pixel axis samples the
source at (r + 0.5) * 28 / a - 0.5. Interpolation is bilinear. Rotation pads
with zeros outside the source; resizing clamps to the edge. Float results are
rounded half away from zero to bytes exactly once, at the end of a pipeline.
"""

import gzip
import logging
import math
import zlib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates

from augmanifold.errors import ConfigurationError, ParseError
from augmanifold.manifolds import MultiViewDataset
from augmanifold.rng import derive_seed, stream


logger = logging.getLogger(__name__)

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
GZIP_PREFIX = b"\x1f\x8b"
MNIST_SIDE = 28
RESIZE_CHOICES = (29, 30, 31, 32)
MAX_ROTATION_DEGREES = 10.0


@dataclass(frozen=True)
class GrayImage:
    """Row-major 8-bit grayscale image."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.array(self.pixels)
        if pixels.ndim != 2 or pixels.size == 0:
            raise ConfigurationError(f"an image must be a non-empty 2-D array, got shape {pixels.shape}")
        if pixels.dtype != np.uint8:
            if np.any(pixels < 0) or np.any(pixels > 255) or np.any(pixels != np.round(pixels)):
                raise ConfigurationError("pixel values must be integers in [0, 255]")
            pixels = pixels.astype(np.uint8)
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def _read_header(data: bytes, words: int) -> np.ndarray:
    size = 4 * words
    if len(data) < size:
        raise ParseError(f"truncated IDX header: need {size} bytes, have {len(data)}", offset=len(data))
    return np.frombuffer(data, dtype=">u4", count=words).astype(np.int64)


def parse_idx(data: bytes) -> np.ndarray:
    """Decode an IDX image (count, rows, cols) or label (count,) file into uint8 arrays.

    Gzip-compressed input is detected by its two-byte prefix.
    """
    if data[:2] == GZIP_PREFIX:
        try:
            data = gzip.decompress(data)
        except (OSError, EOFError, zlib.error) as exc:
            raise ParseError(f"corrupt gzip stream: {exc}", offset=0) from exc

    magic = int(_read_header(data, 1)[0])
    if magic == IMAGE_MAGIC:
        _, count, rows, cols = _read_header(data, 4)
        shape = (count, rows, cols)
    elif magic == LABEL_MAGIC:
        _, count = _read_header(data, 2)
        shape = (count,)
    else:
        raise ParseError(f"unknown IDX magic {magic}; expected {IMAGE_MAGIC} or {LABEL_MAGIC}", offset=0)

    header = 4 * (len(shape) + 1)
    expected = math.prod(shape)
    available = len(data) - header
    if available < expected:
        raise ParseError(f"truncated IDX payload: expected {expected} bytes, found {available}", offset=len(data))
    if available > expected:
        raise ParseError(f"IDX count mismatch: {available - expected} trailing bytes", offset=header + expected)
    return np.frombuffer(data, dtype=np.uint8, count=expected, offset=header).reshape(shape).copy()


def load_idx(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"IDX file {path} not found")
    logger.debug(f"Reading IDX file {path}")
    return parse_idx(path.read_bytes())


def _round_to_bytes(values: np.ndarray) -> np.ndarray:
    rounded = np.sign(values) * np.floor(np.abs(values) + 0.5)
    return np.clip(rounded, 0, 255).astype(np.uint8)


def _as_float(img: GrayImage | np.ndarray) -> np.ndarray:
    pixels = img.pixels if isinstance(img, GrayImage) else img
    return np.asarray(pixels, dtype=np.float64)


def rotate_image(img: GrayImage | np.ndarray, degrees: float) -> np.ndarray:
    """Rotation by ``degrees`` about the image centre, bilinear, zero padded. Returns floats."""
    pixels = _as_float(img)
    if degrees == 0:
        return pixels.copy()
    rows, cols = pixels.shape
    centre_r, centre_c = (rows - 1) / 2.0, (cols - 1) / 2.0
    theta = math.radians(degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    rr, cc = np.meshgrid(np.arange(rows, dtype=np.float64), np.arange(cols, dtype=np.float64), indexing="ij")
    dr, dc = rr - centre_r, cc - centre_c
    # inverse map: output pixel samples the source rotated back by theta
    src_r = centre_r + cos_t * dr - sin_t * dc
    src_c = centre_c + sin_t * dr + cos_t * dc
    return map_coordinates(pixels, [src_r, src_c], order=1, mode="grid-constant", cval=0.0)


def resize_bilinear(img: GrayImage | np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize of a square image to size x size. Returns floats."""
    pixels = _as_float(img)
    rows, cols = pixels.shape
    r = (np.arange(size) + 0.5) * rows / size - 0.5
    c = (np.arange(size) + 0.5) * cols / size - 0.5
    rr, cc = np.meshgrid(r, c, indexing="ij")
    return map_coordinates(pixels, [rr, cc], order=1, mode="nearest")


def resize_crop(img: GrayImage | np.ndarray, size: int, offset: tuple[int, int]) -> np.ndarray:
    resized = resize_bilinear(img, size)
    top, left = offset
    if not (0 <= top <= size - MNIST_SIDE and 0 <= left <= size - MNIST_SIDE):
        raise ConfigurationError(f"crop offset {offset} outside [0, {size - MNIST_SIDE}]")
    return resized[top : top + MNIST_SIDE, left : left + MNIST_SIDE]


def _check_mnist(img: GrayImage) -> None:
    if (img.height, img.width) != (MNIST_SIDE, MNIST_SIDE):
        raise ConfigurationError(f"augmentation expects {MNIST_SIDE}x{MNIST_SIDE} images, got {img.height}x{img.width}")


def _resize_crop_floats(
    pixels: np.ndarray, seed: int, size: int | None, offset: tuple[int, int] | None
) -> np.ndarray:
    rng = stream(seed, "resize")
    drawn_size = int(rng.choice(RESIZE_CHOICES))
    size = drawn_size if size is None else int(size)
    if size not in RESIZE_CHOICES:
        raise ConfigurationError(f"resize target must be one of {RESIZE_CHOICES}, got {size}")
    drawn_offset = tuple(int(v) for v in rng.integers(0, size - MNIST_SIDE + 1, 2))
    return resize_crop(pixels, size, drawn_offset if offset is None else offset)


def augment_resize_crop(
    img: GrayImage, seed: int, size: int | None = None, offset: tuple[int, int] | None = None
) -> GrayImage:
    """Resize to a x a with a uniform in {29..32}, then crop 28x28 at a uniform offset.

    ``size`` and ``offset`` (row, column) override the random draws.
    """
    _check_mnist(img)
    return GrayImage(_round_to_bytes(_resize_crop_floats(_as_float(img), seed, size, offset)))


def augment_rotate_resize_crop(img: GrayImage, seed: int, angle: float | None = None) -> GrayImage:
    """Rotate by b degrees, b uniform in [-10, 10], then resize and crop.

    The angle and the resize parameters come from separate streams, so with
    b = 0 the result equals ``augment_resize_crop(img, seed)``.
    """
    _check_mnist(img)
    if angle is None:
        angle = float(stream(seed, "rotation").uniform(-MAX_ROTATION_DEGREES, MAX_ROTATION_DEGREES))
    rotated = rotate_image(img, angle)
    return GrayImage(_round_to_bytes(_resize_crop_floats(rotated, seed, None, None)))


def flatten_normalize(img: GrayImage) -> np.ndarray:
    """Row-major pixels scaled into [0, 1]."""
    return img.pixels.reshape(-1).astype(np.float64) / 255.0


class Augmentation(str, Enum):
    NONE = "none"
    RESIZE_CROP = "resize_crop"
    ROTATE_RESIZE_CROP = "rotate_resize_crop"


AUGMENTERS = {
    Augmentation.RESIZE_CROP: augment_resize_crop,
    Augmentation.ROTATE_RESIZE_CROP: augment_rotate_resize_crop,
}


def augment(img: GrayImage, pipeline: Augmentation, seed: int) -> GrayImage:
    if pipeline is Augmentation.NONE:
        return img
    return AUGMENTERS[pipeline](img, seed)


def augmented_views(
    images: np.ndarray,
    n_views: int,
    pipeline: Augmentation | str,
    seed: int,
    labels: np.ndarray | None = None,
) -> MultiViewDataset:
    """Multi-view dataset of flattened, normalised augmentations; one derived seed per (image, view).

    At least two images are needed, as for any ``MultiViewDataset``.
    """
    pipeline = Augmentation(pipeline)
    images = np.asarray(images)
    if images.ndim != 3:
        raise ConfigurationError(f"images must have shape (count, rows, cols), got {images.shape}")
    if n_views < 1:
        raise ConfigurationError(f"n_views must be at least 1, got {n_views}")
    count = len(images)
    if count < 2:
        raise ConfigurationError(f"augmented views need at least two images, got {count}")
    points = np.empty((count, n_views, images.shape[1] * images.shape[2]))
    for i in range(count):
        img = GrayImage(images[i])
        for j in range(n_views):
            points[i, j] = flatten_normalize(augment(img, pipeline, derive_seed(seed, "image", i, j)))
    logger.debug(f"Augmented {count} images x {n_views} views with {pipeline.value}")
    return MultiViewDataset(points=points, seed=seed, labels=labels)
