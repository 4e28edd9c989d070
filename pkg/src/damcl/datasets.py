"""Task-sequence construction from raw digit images.

Parses IDX image/label files (raw or gzip), binarizes to bipolar vectors,
applies per-task pixel permutations or rotations, and encodes items as
[pixels | task one-hot | class block] patterns with +1/-1 one-hot targets.
A deterministic synthetic digit corpus is provided for environments without
the real files.
"""

from __future__ import annotations

import gzip
import hashlib
import struct
import urllib.request
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import ItemSet, PatternLayout


class DataError(RuntimeError):
    """Missing, malformed, or failed-verification data files."""


class IdxError(DataError):
    pass


class IdxMagicError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxDimensionError(IdxError):
    pass


IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

# hard cap on the element count a header may declare
_MAX_ELEMENTS = 1 << 40

IMAGE_SIDE = 28
PIXELS = IMAGE_SIDE * IMAGE_SIDE
DEFAULT_THRESHOLD = 127

MNIST_BASE_URL = "https://storage.googleapis.com/cvdf-datasets/mnist/"

#: canonical gzip files and their published SHA-256 checksums
MNIST_FILES = {
    "train-images-idx3-ubyte.gz": "440fcabf73cc546fa21475e81ea370265605f56be210a4024d2ca8f203523609",
    "train-labels-idx1-ubyte.gz": "3552534a0a558bbed6aed32b30c495cca23d567ec52cac8be1a0730e8010255c",
    "t10k-images-idx3-ubyte.gz": "8d422c7b0a1c1c79245a5bcf07fe86e33eeafee792b84584aec276f5a2dbc4e6",
    "t10k-labels-idx1-ubyte.gz": "f7ae60f92e00ec6debd23a6088c31dbd2371eca3ffa0defaefb259924204aec6",
}


# ---------------------------------------------------------------------------
# IDX files


def parse_idx(data: bytes) -> np.ndarray:
    """Decode one IDX payload into a uint8 tensor shaped per its header."""
    if len(data) < 4:
        raise IdxTruncatedError("file shorter than the 4-byte magic")
    (magic,) = struct.unpack(">i", data[:4])
    if magic == LABEL_MAGIC:
        ndim = 1
    elif magic == IMAGE_MAGIC:
        ndim = 3
    else:
        raise IdxMagicError(f"unsupported IDX magic 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(data) < header:
        raise IdxTruncatedError("file shorter than its dimension header")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    total = 1
    for d in dims:
        total *= d
    if total > _MAX_ELEMENTS:
        raise IdxDimensionError(f"declared size {dims} overflows sane bounds")
    payload = len(data) - header
    if payload < total:
        raise IdxTruncatedError(f"payload holds {payload} bytes, header declares {total}")
    if payload > total:
        raise IdxTruncatedError(f"{payload - total} trailing bytes after declared payload")
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(dims)


def parse_idx_file(path) -> np.ndarray:
    """Read a raw or gzip-compressed IDX file."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return parse_idx(raw)


@dataclass
class RawImageSet:
    """Byte images with class labels 0-9."""

    images: np.ndarray  # (count, 28, 28) uint8
    labels: np.ndarray  # (count,) integer

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.uint8)
        self.labels = np.asarray(self.labels)
        if self.images.ndim != 3 or len(self.images) != len(self.labels):
            raise DataError("image and label counts differ")
        if self.labels.size and self.labels.max() > 9:
            raise DataError("labels must be < 10")

    def __len__(self) -> int:
        return len(self.images)


def _find_file(data_dir: Path, gz_name: str) -> Path | None:
    for name in (gz_name, gz_name.removesuffix(".gz")):
        p = data_dir / name
        if p.exists():
            return p
    return None


def load_mnist(data_dir, train: bool = True) -> RawImageSet:
    """Load the train (default) or test split from ``data_dir``.

    Accepts the canonical file names with or without .gz.
    """
    data_dir = Path(data_dir)
    prefix = "train" if train else "t10k"
    img = _find_file(data_dir, f"{prefix}-images-idx3-ubyte.gz")
    lab = _find_file(data_dir, f"{prefix}-labels-idx1-ubyte.gz")
    if img is None or lab is None:
        raise DataError(
            f"MNIST files for the {prefix} split not found in {data_dir}; "
            "run `damcl fetch-data` or point at a directory that has them"
        )
    images = parse_idx_file(img)
    labels = parse_idx_file(lab)
    if images.ndim != 3 or images.shape[1:] != (IMAGE_SIDE, IMAGE_SIDE):
        raise DataError(f"{img} is not a {IMAGE_SIDE}x{IMAGE_SIDE} image file")
    return RawImageSet(images, labels)


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def fetch_mnist(data_dir, base_url: str = MNIST_BASE_URL, verify_only: bool = False,
                checksums: dict | None = None) -> list[str]:
    """Download missing canonical files and verify SHA-256 checksums.

    Returns one status line per file; raises DataError on any failure.
    """
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    sums = checksums if checksums is not None else MNIST_FILES
    lines = []
    for name, expected in sums.items():
        target = data_dir / name
        if not target.exists():
            if verify_only:
                raise DataError(f"{target} is missing")
            url = base_url.rstrip("/") + "/" + name
            try:
                with urllib.request.urlopen(url) as resp:
                    target.write_bytes(resp.read())
            except Exception as exc:
                raise DataError(f"download of {url} failed: {exc}") from exc
        digest = sha256_of(target)
        if digest != expected:
            raise DataError(f"{target}: SHA-256 {digest} != expected {expected}")
        lines.append(f"{name}: OK ({digest[:12]}...)")
    return lines


# ---------------------------------------------------------------------------
# binarization and per-task transforms


def binarize(image, threshold: int = DEFAULT_THRESHOLD) -> np.ndarray:
    """Flatten row-major and map each pixel to +1 if above threshold else -1."""
    flat = np.asarray(image).reshape(-1)
    return np.where(flat > threshold, 1.0, -1.0)


def binarize_batch(images, threshold: int = DEFAULT_THRESHOLD) -> np.ndarray:
    arr = np.asarray(images)
    return np.where(arr.reshape(len(arr), -1) > threshold, 1.0, -1.0)


@dataclass
class TaskTransform:
    """Per-task input transform: pixel permutation, rotation, or identity."""

    kind: str  # "permute" | "rotate" | "identity"
    permutation: np.ndarray | None = None
    angle: float | None = None


def make_task_transform(kind: str, *, rng: np.random.Generator | None = None,
                        angle: float | None = None) -> TaskTransform:
    if kind == "identity":
        return TaskTransform("identity")
    if kind == "permute":
        if rng is None:
            raise ValueError("permute needs a generator")
        return TaskTransform("permute", permutation=rng.permutation(PIXELS))
    if kind == "rotate":
        if angle is None:
            raise ValueError("rotate needs an angle in degrees")
        return TaskTransform("rotate", angle=float(angle))
    raise ValueError(f"unknown transform kind {kind!r}")


def _rotate_nn(images: np.ndarray, angle_deg: float) -> np.ndarray:
    """Nearest-neighbor rotation about the image center; out-of-frame is 0."""
    side = images.shape[-1]
    center = (side - 1) / 2.0
    theta = np.deg2rad(angle_deg)
    rows, cols = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    # inverse-rotate each output coordinate into the source frame
    dy, dx = rows - center, cols - center
    src_r = np.rint(center + np.cos(theta) * dy + np.sin(theta) * dx).astype(int)
    src_c = np.rint(center - np.sin(theta) * dy + np.cos(theta) * dx).astype(int)
    inside = (src_r >= 0) & (src_r < side) & (src_c >= 0) & (src_c < side)
    out = np.zeros_like(images)
    out[..., rows[inside], cols[inside]] = images[..., src_r[inside], src_c[inside]]
    return out


def apply_transform(images: np.ndarray, transform: TaskTransform) -> np.ndarray:
    """Apply a task transform to byte images (before binarization)."""
    if transform.kind == "identity":
        return images
    if transform.kind == "rotate":
        return _rotate_nn(images, transform.angle)
    flat = images.reshape(len(images), -1)
    return flat[:, transform.permutation].reshape(images.shape)


# ---------------------------------------------------------------------------
# encoding


def encode_item(pixels, label: int, task_id: int, task_count: int):
    """One bipolar pattern and its +1/-1 one-hot class target.

    Pattern layout is [pixels | task one-hot (+1 at task_id, -1 elsewhere) |
    class block initialized to 0].
    """
    pixels = np.asarray(pixels, dtype=float)
    if not 0 <= label <= 9:
        raise ValueError(f"label {label} out of range")
    if not 0 <= task_id < task_count:
        raise ValueError(f"task id {task_id} out of range for {task_count} tasks")
    layout = PatternLayout(len(pixels), task_count)
    pattern = np.zeros(layout.size)
    pattern[layout.pixel_slice] = pixels
    pattern[layout.task_slice] = -1.0
    pattern[layout.pixel_count + task_id] = 1.0
    target = np.full(layout.class_count, -1.0)
    target[label] = 1.0
    return pattern, target


def encode_batch(pixel_rows: np.ndarray, labels: np.ndarray, task_id: int,
                 task_count: int) -> ItemSet:
    count, pixel_count = pixel_rows.shape
    layout = PatternLayout(pixel_count, task_count)
    x = np.zeros((count, layout.size))
    x[:, layout.pixel_slice] = pixel_rows
    x[:, layout.task_slice] = -1.0
    x[:, layout.pixel_count + task_id] = 1.0
    y = np.full((count, layout.class_count), -1.0)
    y[np.arange(count), np.asarray(labels, dtype=int)] = 1.0
    return ItemSet(x, y)


# ---------------------------------------------------------------------------
# task sequences


def with_class_bits(items: ItemSet, layout: PatternLayout) -> ItemSet:
    """Probe-form items (class block 0) to storage form (class block = target).

    Training is autoassociative over the full pattern, so stored items carry
    their label bits; probes used for readout keep the class block at 0.
    """
    x = items.x.copy()
    x[:, layout.class_slice] = items.y
    return ItemSet(x, items.y)


@dataclass
class TaskDataset:
    """One task: transform descriptor plus encoded train/val splits.

    ``train``/``val`` hold probe-form patterns (class block 0) with one-hot
    targets; ``train_full()`` returns the storage form used for training.
    """

    task_id: int
    transform: TaskTransform
    train: ItemSet
    val: ItemSet
    seed: int

    @property
    def layout(self) -> PatternLayout:
        width = self.train.x.shape[1]
        task_count = width - PIXELS - 10
        return PatternLayout(PIXELS, task_count)

    def train_full(self) -> ItemSet:
        return with_class_bits(self.train, self.layout)


def mix_seed(*values: int) -> int:
    """Deterministic splitmix-style combination of integers into a 64-bit seed."""
    z = 0x9E3779B97F4A7C15
    for v in values:
        z = (z + (int(v) & 0xFFFFFFFFFFFFFFFF) + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & 0xFFFFFFFFFFFFFFFF
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB & 0xFFFFFFFFFFFFFFFF
        z = z ^ (z >> 31)
    return z


_BALANCE_ATTEMPTS = 20


def _all_classes_present(labels: np.ndarray) -> bool:
    return len(np.unique(labels)) == 10


def build_task_sequence(
    source: RawImageSet,
    task_count: int,
    items_per_task: int,
    kind: str = "permute",
    master_seed: int = 0,
    threshold: int = DEFAULT_THRESHOLD,
    rotation_step: float = 15.0,
) -> list[TaskDataset]:
    """Build ``task_count`` tasks of ``items_per_task`` items each.

    Each task gets an independent transform and an 80/20 train/val split from
    a per-task seed mixed out of ``master_seed``, so task content does not
    depend on the total task count. Items are sampled without replacement
    within a task (tasks may overlap). When items_per_task >= 1000 the train
    split is required to contain every class; violations resample with a
    fresh derived seed and a warning.
    """
    if items_per_task > len(source):
        raise DataError(
            f"requested {items_per_task} items per task but source has {len(source)}"
        )
    tasks = []
    for task_id in range(task_count):
        task_seed = mix_seed(master_seed, task_id)
        for attempt in range(_BALANCE_ATTEMPTS):
            rng = np.random.default_rng(mix_seed(task_seed, attempt))
            if kind == "rotate":
                transform = make_task_transform("rotate", angle=task_id * rotation_step)
            else:
                transform = make_task_transform(kind, rng=rng)
            idx = rng.choice(len(source), size=items_per_task, replace=False)
            val_count = items_per_task // 5
            val_idx, train_idx = idx[:val_count], idx[val_count:]
            if items_per_task >= 1000 and not _all_classes_present(source.labels[train_idx]):
                warnings.warn(
                    f"task {task_id}: train split missing a class, resampling "
                    f"(attempt {attempt + 1})"
                )
                continue
            break
        else:
            raise DataError(f"task {task_id}: could not draw a train split with all classes")
        parts = {}
        for name, rows in (("train", train_idx), ("val", val_idx)):
            images = apply_transform(source.images[rows], transform)
            pixels = binarize_batch(images, threshold)
            parts[name] = encode_batch(pixels, source.labels[rows], task_id, task_count)
        tasks.append(TaskDataset(task_id, transform, parts["train"], parts["val"], task_seed))
    return tasks


# ---------------------------------------------------------------------------
# synthetic digit corpus


def _box_blur(field: np.ndarray, passes: int = 3) -> np.ndarray:
    for _ in range(passes):
        padded = np.pad(field, 1, mode="edge")
        field = (
            padded[:-2, :-2] + padded[:-2, 1:-1] + padded[:-2, 2:]
            + padded[1:-1, :-2] + padded[1:-1, 1:-1] + padded[1:-1, 2:]
            + padded[2:, :-2] + padded[2:, 1:-1] + padded[2:, 2:]
        ) / 9.0
    return field


def synthetic_raw_set(count: int, seed: int = 0, flip_prob: float = 0.1) -> RawImageSet:
    """Deterministic stand-in corpus: ten blob prototypes plus pixel noise.

    Each class is a smoothed random binary mask; items flip each pixel with
    ``flip_prob`` and render on/off pixels to well-separated byte ranges, so
    the default threshold recovers the noisy mask exactly.
    """
    rng = np.random.default_rng(mix_seed(seed, 0xD161))
    prototypes = []
    for _ in range(10):
        blob = _box_blur(rng.normal(size=(IMAGE_SIDE, IMAGE_SIDE)))
        mask = blob > np.quantile(blob, 0.65)
        prototypes.append(mask)
    labels = rng.integers(0, 10, size=count)
    flips = rng.random((count, IMAGE_SIDE, IMAGE_SIDE)) < flip_prob
    on = np.stack([prototypes[c] for c in labels]) ^ flips
    bright = rng.integers(160, 256, size=on.shape)
    dark = rng.integers(0, 96, size=on.shape)
    images = np.where(on, bright, dark).astype(np.uint8)
    return RawImageSet(images, labels)
