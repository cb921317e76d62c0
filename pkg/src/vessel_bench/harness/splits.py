"""Stratified train/validation/test splits at fixed per-class ratios."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError

STANDARD_FRACTIONS = (0.80, 0.50, 0.20, 0.05, 0.01)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    validation_holdout: float = 0.20
    shuffle_seed: int = 0
    custom: bool = False

    def __post_init__(self):
        if self.custom:
            if not 0.0 < self.train_fraction < 1.0:
                raise InvalidArgumentError("train_fraction must lie in (0, 1)")
        elif not any(abs(self.train_fraction - f) < 1e-12 for f in STANDARD_FRACTIONS):
            raise InvalidArgumentError(
                f"train_fraction {self.train_fraction} is not one of {STANDARD_FRACTIONS}; pass custom=True")
        if not 0.0 <= self.validation_holdout < 1.0:
            raise InvalidArgumentError("validation_holdout must lie in [0, 1)")


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    @property
    def fit(self) -> np.ndarray:
        """Everything the model may learn from: train plus validation."""
        return np.sort(np.concatenate([self.train, self.validation]))


def split_label(fraction: float) -> str:
    train = round(fraction * 100)
    return f"{train}/{100 - train}"


def _floor(x: float) -> int:
    # guards products such as 0.29 * 100 = 28.999999999999996
    return int(math.floor(x + 1e-9))


def per_class_counts(class_size: int, spec: SplitSpec):
    """(train, validation, test) counts for one class."""
    n_fit = _floor(spec.train_fraction * class_size)
    if n_fit < 1:
        raise InvalidArgumentError(f"train fraction {spec.train_fraction} leaves no training sample "
                                   f"in a class of {class_size}")
    if n_fit == 2:
        n_val = 1
    else:
        n_val = _floor(spec.validation_holdout * n_fit)
    return n_fit - n_val, n_val, class_size - n_fit


def make_split(labels, spec: SplitSpec) -> Split:
    labels = np.asarray(getattr(labels, "labels", labels), dtype=np.int64)
    rng = np.random.default_rng(spec.shuffle_seed)
    train, val, test = [], [], []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if members.size < 2:
            raise InvalidArgumentError(f"class {cls} has fewer than 2 samples")
        n_train, n_val, _ = per_class_counts(members.size, spec)
        order = rng.permutation(members)
        train.append(order[:n_train])
        val.append(order[n_train:n_train + n_val])
        test.append(order[n_train + n_val:])
    split = Split(*(np.sort(np.concatenate(p)) for p in (train, val, test)))
    check_no_leakage(split)
    return split


def check_no_leakage(split: Split) -> None:
    if np.intersect1d(split.fit, split.test).size or np.intersect1d(split.train, split.validation).size:
        raise AssertionError("split leaks samples between train/validation and test")


def shuffle_seed(master_seed: int, shuffle_index: int) -> int:
    return int(np.random.SeedSequence([master_seed, shuffle_index]).generate_state(1, np.uint64)[0])
