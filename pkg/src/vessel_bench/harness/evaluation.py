"""Shuffled evaluation and the synthetic-pretrain / real-adapt protocol."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..classifiers import src as src_mod
from ..errors import InvalidArgumentError
from .cache import FeatureCache
from .dataset import LabeledDataset
from .methods import (
    FeaturePipeline,
    MethodSpec,
    RunResult,
    Standardizer,
    Subset,
    _concat,
    _pick_c,
    chip_extractor,
    confusion_matrix,
    fit_pipeline,
    predict,
    run_method,
    train_classifier,
)
from .splits import SplitSpec, make_split, shuffle_seed, split_label

# BASELINE: plain benchmark runs. REAL_ONLY: the no-pretraining arm of an
# adaptation experiment, kept apart so it never mixes with benchmark rows.
BASELINE, REAL_ONLY, ADAPTED, SYNTH_ONLY = "baseline", "real-only", "adapted", "synth-only"
KINDS = (BASELINE, REAL_ONLY, ADAPTED, SYNTH_ONLY)
ADAPTATION_KINDS = (REAL_ONLY, ADAPTED, SYNTH_ONLY)


@dataclass(frozen=True)
class RunRecord:
    """One (kind, method, split, shuffle) evaluation."""

    kind: str
    method: str
    split: str
    shuffle_index: int
    accuracy: float
    confusion: tuple  # row-major tuple of row tuples, rows = true class

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown run kind {self.kind!r}")

    @property
    def correct(self) -> int:
        return sum(self.confusion[i][i] for i in range(len(self.confusion)))

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.confusion)


def make_record(kind, method: str, split: str, shuffle_index: int, result: RunResult) -> RunRecord:
    conf = tuple(tuple(int(v) for v in row) for row in result.confusion)
    return RunRecord(kind, method, split, int(shuffle_index), float(result.accuracy), conf)


@dataclass
class ShuffleSummary:
    method: str
    split: str
    records: list = field(default_factory=list)

    @property
    def accuracies(self) -> list:
        return [r.accuracy for r in self.records]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))


def dataset_features(dataset: LabeledDataset, method: MethodSpec, cache: FeatureCache | None = None,
                     mapper=map):
    """Per-chip feature matrix, or None for features fitted per split (MPCA)."""
    extract, params = chip_extractor(method)
    if extract is None:
        return None
    if cache is not None:
        return cache.features(dataset.chips, method.feature, params, extract, mapper=mapper)
    return np.stack(list(mapper(extract, dataset.chips)))


def subset(dataset: LabeledDataset, idx, features=None) -> Subset:
    idx = np.asarray(idx, dtype=np.int64)
    return Subset(dataset.labels[idx], [dataset.chips[i] for i in idx],
                  None if features is None else features[idx])


def full_subset(dataset: LabeledDataset, features=None) -> Subset:
    return Subset(dataset.labels, list(dataset.chips), features)


def shuffle_split(dataset: LabeledDataset, spec: SplitSpec, index: int):
    """The ``index``-th shuffle of ``dataset``; ``spec.shuffle_seed`` acts as the master seed."""
    seed = shuffle_seed(spec.shuffle_seed, index)
    return make_split(dataset.labels, replace(spec, shuffle_seed=seed)), seed


def run_seed(shuffle_seed_value: int) -> int:
    """Classifier seed for a shuffle (the SVM visit-order RNG takes 32-bit seeds)."""
    return shuffle_seed_value % (2**32)


def baseline_shuffle(method: MethodSpec, dataset: LabeledDataset, spec: SplitSpec, index: int,
                     features=None, runner=run_method):
    """(record, full run result) for one shuffle trained on ``dataset`` alone."""
    split, seed = shuffle_split(dataset, spec, index)
    result = runner(method, subset(dataset, split.train, features), subset(dataset, split.validation, features),
                    subset(dataset, split.test, features), dataset.class_count, run_seed(seed))
    return make_record(BASELINE, method.name, split_label(spec.train_fraction), index, result), result


def run_one_shuffle(method: MethodSpec, dataset: LabeledDataset, spec: SplitSpec, index: int,
                    features=None, runner=run_method) -> RunRecord:
    return baseline_shuffle(method, dataset, spec, index, features, runner)[0]


def run_shuffles(method: MethodSpec, dataset: LabeledDataset, spec: SplitSpec, n_shuffles: int = 5,
                 features=None, cache: FeatureCache | None = None, runner=run_method) -> ShuffleSummary:
    """Evaluate ``method`` on ``n_shuffles`` independent stratified re-splits.

    Shuffle ``i`` uses the seed derived from ``(spec.shuffle_seed, i)``.
    ``runner`` defaults to :func:`run_method`; any callable with its signature works.
    """
    if n_shuffles < 1:
        raise InvalidArgumentError("n_shuffles must be at least 1")
    if features is None:
        features = dataset_features(dataset, method, cache)
    summary = ShuffleSummary(method.name, split_label(spec.train_fraction))
    for i in range(n_shuffles):
        summary.records.append(run_one_shuffle(method, dataset, spec, i, features, runner))
    return summary


def refit_statistics(pipe: FeaturePipeline, fit: Subset) -> FeaturePipeline:
    """Copy of ``pipe`` whose standardization/centering is re-estimated on ``fit``.

    Learned projections (MPCA basis, random reduction) are kept so that
    models trained in the original feature space stay valid.
    """
    out = replace(pipe, scaler=None, center=None)
    X = out.transform(fit)
    cp = pipe.method.classifier_params
    if pipe.scaler is not None:
        out.scaler = Standardizer(X)
        X = out.scaler(X)
    if pipe.center is not None or cp.get("center"):
        out.center = X.mean(axis=0)
    return out


@dataclass
class Pretrained:
    pipeline: FeaturePipeline
    model: object


def pretrain(method: MethodSpec, synth: Subset, class_count: int, seed: int = 0) -> Pretrained:
    pipe = fit_pipeline(method, synth)
    model = train_classifier(method, pipe.transform(synth), synth.labels, class_count, seed)
    return Pretrained(pipe, model)


def _evaluate(model, pipe, test: Subset, class_count) -> RunResult:
    pred = predict(model, pipe.transform(test))
    cm = confusion_matrix(test.labels, pred, class_count)
    return RunResult(float(np.trace(cm) / cm.sum()), cm, model, pipe)


def adapt_method(method: MethodSpec, pre: Pretrained, train: Subset, validation: Subset, test: Subset,
                 class_count: int = 4, seed: int = 0, synth_weight: float = 1.0,
                 refit: bool = True) -> RunResult:
    """Continue from a synthetic-pretrained model using the real training split.

    SRC: dictionary = synthetic atoms (cost scaled by ``1 / synth_weight``)
    plus real training atoms. SVM: warm start from the pretrained weights,
    C picked on the real validation split, final fit on train + validation.
    """
    fit = _concat(train, validation)
    pipe = refit_statistics(pre.pipeline, fit) if refit else pre.pipeline
    if method.classifier == "src":
        real = train_classifier(method, pipe.transform(fit), fit.labels, class_count, seed)
        model = src_mod.src_merge(pre.model, real, first_weight=synth_weight)
        return _evaluate(model, pipe, test, class_count)
    chosen_c = None
    if len(validation):
        chosen_c = _pick_c(method, pipe.transform(train), train.labels, pipe.transform(validation),
                           validation.labels, class_count, seed, warm_start=pre.model)
    model = train_classifier(method, pipe.transform(fit), fit.labels, class_count, seed, c_param=chosen_c,
                             warm_start=pre.model)
    result = _evaluate(model, pipe, test, class_count)
    result.chosen_c = chosen_c
    return result


@dataclass
class AdaptationResult:
    baseline: ShuffleSummary
    adapted: ShuffleSummary
    synth_only: ShuffleSummary | None = None

    @property
    def baseline_acc(self) -> float:
        return self.baseline.mean

    @property
    def adapted_acc(self) -> float:
        return self.adapted.mean

    @property
    def delta(self) -> float:
        return self.adapted_acc - self.baseline_acc

    def __iter__(self):
        return iter((self.baseline_acc, self.adapted_acc, self.delta))

    @property
    def records(self) -> list:
        out = self.baseline.records + self.adapted.records
        return out + (self.synth_only.records if self.synth_only else [])


def check_label_sets(synth: LabeledDataset, real: LabeledDataset) -> None:
    if tuple(synth.class_names) != tuple(real.class_names):
        raise InvalidArgumentError("synthetic and real datasets use different class label sets")
    if set(np.unique(synth.labels)) != set(np.unique(real.labels)):
        raise InvalidArgumentError("synthetic and real datasets cover different classes")


def synth_only_predictions(pre: Pretrained, real: LabeledDataset, real_features=None) -> np.ndarray:
    """Pretrained-model predictions for every real chip.

    The synthetic-only model never sees real data, so its prediction for a
    chip does not depend on the split and is computed once.
    """
    return predict(pre.model, pre.pipeline.transform(full_subset(real, real_features)))


def adaptation_shuffle(method: MethodSpec, synth: LabeledDataset, real: LabeledDataset, spec: SplitSpec,
                       index: int, synth_features=None, real_features=None, synth_weight: float = 1.0,
                       refit: bool = True, kinds=ADAPTATION_KINDS, pretrained: Pretrained | None = None,
                       synth_predictions: np.ndarray | None = None, name: str | None = None) -> list:
    """[(record, run result)] of the requested kinds for one shuffle of ``real``.

    All kinds share the same real split, so deltas compare like with like.
    ``name`` overrides the method name written into the records.
    """
    split, seed = shuffle_split(real, spec, index)
    label = split_label(spec.train_fraction)
    name = name or method.name
    train, val, test = (subset(real, s, real_features) for s in (split.train, split.validation, split.test))
    out = []
    if REAL_ONLY in kinds:
        res = run_method(method, train, val, test, real.class_count, run_seed(seed))
        out.append((make_record(REAL_ONLY, name, label, index, res), res))
    if ADAPTED in kinds or SYNTH_ONLY in kinds:
        pre = pretrained or pretrain(method, full_subset(synth, synth_features), real.class_count)
        if ADAPTED in kinds:
            res = adapt_method(method, pre, train, val, test, real.class_count, run_seed(seed), synth_weight, refit)
            out.append((make_record(ADAPTED, name, label, index, res), res))
        if SYNTH_ONLY in kinds:
            if synth_predictions is None:
                synth_predictions = synth_only_predictions(pre, real, real_features)
            cm = confusion_matrix(test.labels, synth_predictions[split.test], real.class_count)
            res = RunResult(float(np.trace(cm) / cm.sum()), cm, pre.model, pre.pipeline)
            out.append((make_record(SYNTH_ONLY, name, label, index, res), res))
    return out


def run_adaptation(method: MethodSpec, synth_dataset: LabeledDataset, real_dataset: LabeledDataset,
                   spec: SplitSpec, n_shuffles: int = 5, synth_weight: float = 1.0, refit: bool = True,
                   synth_only: bool = False, cache: FeatureCache | None = None) -> AdaptationResult:
    """Baseline (real only) vs. synthetic-pretrained-then-adapted accuracy on identical real splits.

    The result unpacks as ``(baseline_acc, adapted_acc, delta)``.
    """
    check_label_sets(synth_dataset, real_dataset)
    sf = dataset_features(synth_dataset, method, cache)
    rf = dataset_features(real_dataset, method, cache)
    pre = pretrain(method, full_subset(synth_dataset, sf), real_dataset.class_count)
    label = split_label(spec.train_fraction)
    result = AdaptationResult(ShuffleSummary(method.name, label), ShuffleSummary(method.name, label),
                              ShuffleSummary(method.name, label) if synth_only else None)
    kinds = ADAPTATION_KINDS if synth_only else (REAL_ONLY, ADAPTED)
    preds = synth_only_predictions(pre, real_dataset, rf) if synth_only else None
    for i in range(n_shuffles):
        for rec, _ in adaptation_shuffle(method, synth_dataset, real_dataset, spec, i, sf, rf, synth_weight,
                                         refit, kinds, pre, preds):
            {REAL_ONLY: result.baseline, ADAPTED: result.adapted,
             SYNTH_ONLY: result.synth_only}[rec.kind].records.append(rec)
    return result
