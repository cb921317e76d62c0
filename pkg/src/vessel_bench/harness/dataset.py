from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import CLASS_NAMES
from ..errors import InvalidArgumentError
from ..image_core import ImageChip, read_manifest, read_png


@dataclass
class LabeledDataset:
    """Chips with integer labels (indices into ``class_names``) and a domain tag."""

    chips: list
    labels: np.ndarray
    domain: str = "synthetic"
    paths: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    class_names: tuple = CLASS_NAMES
    comments: list = field(default_factory=list)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.chips) != self.labels.size:
            raise InvalidArgumentError("one label per chip is required")

    def __len__(self):
        return len(self.chips)

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)


def load_dataset(manifest_path, class_names=CLASS_NAMES) -> LabeledDataset:
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    root = manifest_path.parent
    chips, labels, paths, seeds = [], [], [], []
    domains = set()
    for row in manifest.rows:
        if row.label not in class_names:
            raise InvalidArgumentError(f"{manifest_path}: unknown label {row.label!r}")
        chip = read_png(root / row.path)
        if (chip.width, chip.height) != (row.width, row.height):
            raise InvalidArgumentError(f"{row.path}: size {chip.width}x{chip.height} disagrees with manifest")
        chips.append(chip)
        labels.append(class_names.index(row.label))
        paths.append(row.path)
        seeds.append(row.seed)
        domains.add(row.domain)
    if len(domains) > 1:
        raise InvalidArgumentError(f"{manifest_path}: mixed domain tags {sorted(domains)}")
    domain = domains.pop() if domains else "synthetic"
    return LabeledDataset(chips, np.array(labels), domain, paths, seeds, tuple(class_names), manifest.comments)


def stack_gray(chips) -> np.ndarray:
    return np.stack([c.gray if isinstance(c, ImageChip) else np.asarray(c) for c in chips])
