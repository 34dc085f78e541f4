"""Datasets and client partitions, including Maverick scenarios.

Mavericks are always the first ``num_mavericks`` client ids. Non-Maverick
clients receive a class-balanced share of everything the Mavericks do not own.
"""

from __future__ import annotations

import gzip
import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from fedsim.distributions import ClassDistribution, ClientProfile
from fedsim.errors import (
    ConsistencyError,
    DataFormatError,
    ScenarioError,
    StratificationError,
)

__all__ = [
    "LabeledDataset",
    "ScenarioSpec",
    "ClientProfile",
    "generate_synthetic",
    "load_idx",
    "partition_maverick",
    "train_test_split",
    "MAVERICK_THRESHOLD",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

# share of a client's data in a Maverick class above which it counts as a Maverick
MAVERICK_THRESHOLD = 0.9


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if x.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if x.shape[0] != y.shape[0]:
            raise ConsistencyError(
                f"{x.shape[0]} feature rows but {y.shape[0]} labels"
            )
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def distribution(self) -> ClassDistribution:
        return ClassDistribution(self.class_counts())

    def subset(self, index) -> "LabeledDataset":
        index = np.asarray(index, dtype=np.int64)
        return LabeledDataset(self.features[index], self.labels[index], self.num_classes)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        h.update(str(self.num_classes).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class ScenarioSpec:
    """Which clients are Mavericks and which classes they own.

    ``maverick_mode='exclusive'`` gives Maverick ``j`` the class
    ``maverick_classes[j]``; ``'shared'`` lets all Mavericks split the single
    entry of ``maverick_classes``. ``num_mavericks=0`` is the balanced case.
    """

    num_clients: int
    num_mavericks: int = 0
    maverick_classes: tuple[int, ...] = ()
    maverick_mode: Literal["exclusive", "shared"] = "exclusive"
    maverick_share: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "maverick_classes", tuple(int(c) for c in self.maverick_classes))
        self.validate()

    def validate(self) -> None:
        n, m = self.num_clients, self.num_mavericks
        if n < 1:
            raise ScenarioError("num_clients must be >= 1")
        if not 0 <= m < n:
            raise ScenarioError(f"num_mavericks must satisfy 0 <= M < N, got M={m}, N={n}")
        if not 0.0 < self.maverick_share <= 1.0:
            raise ScenarioError("maverick_share must lie in (0, 1]")
        if self.maverick_mode == "exclusive":
            if len(self.maverick_classes) != m or len(set(self.maverick_classes)) != m:
                raise ScenarioError(
                    "exclusive mode needs one distinct maverick class per Maverick"
                )
        elif self.maverick_mode == "shared":
            if m and len(self.maverick_classes) != 1:
                raise ScenarioError("shared mode needs exactly one maverick class")
        else:
            raise ScenarioError(f"unknown maverick_mode {self.maverick_mode!r}")

    @property
    def maverick_ids(self) -> tuple[int, ...]:
        return tuple(range(self.num_mavericks))

    @property
    def owned_classes(self) -> tuple[int, ...]:
        return self.maverick_classes if self.num_mavericks else ()


def generate_synthetic(
    num_classes: int,
    dim: int,
    per_class: int,
    spread: float,
    seed: int,
) -> LabeledDataset:
    """Gaussian clusters, one per class, ``per_class`` samples each.

    The mean of class ``c`` is ``3 * e_(c mod dim) * (1 + c // dim)``.
    Rows are grouped by class.
    """
    if num_classes < 2 or dim < 1 or per_class < 1 or spread <= 0:
        raise ValueError("need num_classes >= 2, dim >= 1, per_class >= 1, spread > 0")
    rng = np.random.default_rng(seed)
    means = np.zeros((num_classes, dim))
    for c in range(num_classes):
        means[c, c % dim] = 3.0 * (1 + c // dim)
    labels = np.repeat(np.arange(num_classes), per_class)
    features = means[labels] + spread * rng.standard_normal((labels.size, dim))
    return LabeledDataset(features, labels, num_classes)


def _read_idx(path: str | Path, expected_magic: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise DataFormatError(f"{path}: corrupt gzip stream") from exc
    if len(raw) < 4:
        raise DataFormatError(f"{path}: file too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise DataFormatError(
            f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated header")
    shape = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(shape))
    if len(raw) - header != size:
        raise DataFormatError(
            f"{path}: payload has {len(raw) - header} bytes, header declares {size}"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(shape)


def load_idx(
    images_path: str | Path,
    labels_path: str | Path,
    num_classes: int | None = None,
) -> LabeledDataset:
    """Load an MNIST-style IDX image/label pair (optionally gzipped).

    Pixels are scaled to ``[0, 1]`` and each image is flattened row-major.
    ``num_classes`` defaults to ``max(label) + 1``.
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    labels = labels.astype(np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if labels.size else 1
    return LabeledDataset(features, labels, num_classes)


def _deal(index: np.ndarray, num_parts: int, offset: int) -> list[np.ndarray]:
    """Split ``index`` into ``num_parts`` chunks whose sizes differ by at most one.

    ``offset`` rotates which parts get the extra samples so that dealing several
    classes in turn keeps the per-part totals balanced as well.
    """
    base, extra = divmod(index.size, num_parts)
    sizes = np.full(num_parts, base)
    sizes[(offset + np.arange(extra)) % num_parts] += 1
    return np.split(index, np.cumsum(sizes)[:-1])


def partition_maverick(
    data: LabeledDataset,
    spec: ScenarioSpec,
    seed: int,
) -> tuple[list[LabeledDataset], list[ClientProfile]]:
    """Split ``data`` into ``spec.num_clients`` client datasets.

    Returns the client datasets and their profiles, both indexed by client id.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    n, m = spec.num_clients, spec.num_mavericks
    counts = data.class_counts()
    for c in spec.owned_classes:
        if not 0 <= c < data.num_classes or counts[c] == 0:
            raise ScenarioError(f"maverick class {c} has no samples in the data")

    parts: list[list[np.ndarray]] = [[] for _ in range(n)]
    leftovers: list[np.ndarray] = []
    by_class = [rng.permutation(np.flatnonzero(data.labels == c)) for c in range(data.num_classes)]

    if m:
        if spec.maverick_mode == "exclusive":
            for j, c in enumerate(spec.maverick_classes):
                idx = by_class[c]
                take = int(np.floor(spec.maverick_share * idx.size))
                parts[j].append(idx[:take])
                leftovers.append(idx[take:])
        else:
            idx = by_class[spec.maverick_classes[0]]
            take = int(np.floor(spec.maverick_share * idx.size))
            for j, chunk in enumerate(_deal(idx[:take], m, 0)):
                parts[j].append(chunk)
            leftovers.append(idx[take:])

    owned = set(spec.owned_classes)
    regular = n - m
    dealt = 0
    for c in range(data.num_classes):
        if c in owned:
            continue
        for j, chunk in enumerate(_deal(by_class[c], regular, dealt)):
            parts[m + j].append(chunk)
        dealt += by_class[c].size
    residual = np.concatenate(leftovers) if leftovers else np.empty(0, dtype=np.int64)
    if residual.size:
        for j, chunk in enumerate(_deal(residual, regular, dealt)):
            parts[m + j].append(chunk)

    datasets, profiles = [], []
    for k in range(n):
        idx = np.concatenate(parts[k]) if parts[k] else np.empty(0, dtype=np.int64)
        idx = idx[rng.permutation(idx.size)]
        ds = data.subset(idx)
        datasets.append(ds)
        profiles.append(ClientProfile(id=k, distribution=ds.distribution(), is_maverick=k < m))
    return datasets, profiles


def train_test_split(
    data: LabeledDataset,
    test_fraction: float,
    seed: int,
) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified split; each present class keeps its proportion to within one sample."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in range(data.num_classes):
        idx = np.flatnonzero(data.labels == c)
        if idx.size == 0:
            continue
        if idx.size < 2:
            raise StratificationError(f"class {c} has {idx.size} sample(s); need at least 2")
        idx = rng.permutation(idx)
        n_test = min(max(int(round(test_fraction * idx.size)), 1), idx.size - 1)
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    train = np.sort(np.concatenate(train_idx))
    test = np.sort(np.concatenate(test_idx))
    return data.subset(train), data.subset(test)
