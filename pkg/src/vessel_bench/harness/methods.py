"""Feature/classifier pipelines and single-run evaluation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np

from ..classifiers import src as src_mod
from ..classifiers import svm as svm_mod
from ..errors import InvalidArgumentError
from ..hog import HogParams, hog_descriptor
from ..image_core import ImageChip, resize_bilinear
from ..lbp import HmlbpParams, hmlbp_descriptor
from ..mpca import MpcaParams, mpca_fit, mpca_project_many

FEATURES = ("hog", "hmlbp", "mpca")
CLASSIFIERS = ("svm", "src")
BASELINE_PAIRINGS = (("hmlbp", "svm"), ("mpca", "svm"), ("hog", "src"))

DEFAULT_FEATURE_PARAMS = {
    "hog": HogParams().to_dict(),
    "hmlbp": HmlbpParams().to_dict(),
    "mpca": {**asdict(MpcaParams()), "resize": 32},
}
DEFAULT_CLASSIFIER_PARAMS = {
    "svm": {"c_param": 1.0, "c_grid": [0.01, 0.1, 1.0], "tol": 1e-4, "max_epochs": 1000,
            "standardize": True},
    "src": {"epsilon": 0.05, "max_sparsity": None, "standardize": False, "center": True},
}
# SRC wants dictionaries whose dimension is of the order of the atom count
DEFAULT_SRC_MAX_DIM = 512
DEFAULT_REDUCTION = {"kind": "random", "dim": 192, "seed": 0}


@dataclass(frozen=True)
class MethodSpec:
    feature: str
    classifier: str
    feature_params: dict = field(default_factory=dict)
    classifier_params: dict = field(default_factory=dict)
    reduction: dict | None = None

    def __post_init__(self):
        if self.feature not in FEATURES:
            raise InvalidArgumentError(f"unknown feature {self.feature!r}")
        if self.classifier not in CLASSIFIERS:
            raise InvalidArgumentError(f"unknown classifier {self.classifier!r}")
        fp = {**DEFAULT_FEATURE_PARAMS[self.feature], **self.feature_params}
        cp = {**DEFAULT_CLASSIFIER_PARAMS[self.classifier], **self.classifier_params}
        object.__setattr__(self, "feature_params", fp)
        object.__setattr__(self, "classifier_params", cp)

    @property
    def name(self) -> str:
        return f"{self.feature.upper()}+{self.classifier.upper()}"

    @property
    def is_baseline(self) -> bool:
        return (self.feature, self.classifier) in BASELINE_PAIRINGS

    @classmethod
    def parse(cls, text: str, **overrides) -> "MethodSpec":
        feature, _, classifier = text.lower().partition("+")
        return cls(feature, classifier, **overrides)

    def to_dict(self) -> dict:
        return {"feature": self.feature, "classifier": self.classifier,
                "feature_params": self.feature_params, "classifier_params": self.classifier_params,
                "reduction": self.reduction}


def _hog(chip, params):
    return hog_descriptor(chip, params)


def _hmlbp(chip, params):
    return hmlbp_descriptor(chip, params)


def chip_extractor(method: MethodSpec):
    """(per-chip extract function, parameter dict) or (None, params) for fitted features."""
    fp = method.feature_params
    if method.feature == "hog":
        return partial(_hog, params=HogParams(**fp)), fp
    if method.feature == "hmlbp":
        return partial(_hmlbp, params=HmlbpParams.from_dict(fp)), fp
    return None, fp


class Standardizer:
    def __init__(self, X: np.ndarray):
        self.mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.std = np.where(std > 1e-12, std, 1.0)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std


def random_projection(dim_in: int, dim_out: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((dim_in, dim_out)) / np.sqrt(dim_out)


@dataclass
class Subset:
    """Labels plus either chips or precomputed per-chip features."""

    labels: np.ndarray
    chips: list | None = None
    features: np.ndarray | None = None

    def __len__(self):
        return len(self.labels)


def _resize_chips(chips, size):
    if not size:
        return chips
    return [resize_bilinear(c, size, size) if isinstance(c, ImageChip) else c for c in chips]


@dataclass
class FeaturePipeline:
    """Feature stage fitted on a training set: MPCA basis, standardization, reduction."""

    method: MethodSpec
    mpca_model: object = None
    scaler: Standardizer | None = None
    center: np.ndarray | None = None
    projection: np.ndarray | None = None

    def raw(self, subset: Subset) -> np.ndarray:
        if self.method.feature == "mpca":
            chips = _resize_chips(subset.chips, self.method.feature_params.get("resize"))
            return mpca_project_many(chips, self.mpca_model)
        if subset.features is None:
            extract, _ = chip_extractor(self.method)
            return np.stack([extract(c) for c in subset.chips])
        return subset.features

    def transform(self, subset: Subset) -> np.ndarray:
        X = self.raw(subset)
        if self.projection is not None:
            X = X @ self.projection
        if self.scaler is not None:
            X = self.scaler(X)
        if self.center is not None:
            X = X - self.center
        return X


def fit_pipeline(method: MethodSpec, fit: Subset) -> FeaturePipeline:
    pipe = FeaturePipeline(method)
    if method.feature == "mpca":
        fp = method.feature_params
        chips = _resize_chips(fit.chips, fp.get("resize"))
        pipe.mpca_model = mpca_fit(chips, MpcaParams(fp["energy_q"], fp["max_iterations"], fp["tol"]))
    X = pipe.raw(fit)
    reduction = method.reduction
    if reduction is None and method.classifier == "src" and X.shape[1] > DEFAULT_SRC_MAX_DIM:
        reduction = DEFAULT_REDUCTION
    if reduction is not None:
        if reduction.get("kind", "random") != "random":
            raise InvalidArgumentError(f"unsupported reduction {reduction.get('kind')!r}")
        pipe.projection = random_projection(X.shape[1], int(reduction["dim"]), int(reduction.get("seed", 0)))
        X = X @ pipe.projection
    cp = method.classifier_params
    if cp.get("standardize"):
        pipe.scaler = Standardizer(X)
        X = pipe.scaler(X)
    if cp.get("center"):
        pipe.center = X.mean(axis=0)
    return pipe


def confusion_matrix(truth, pred, class_count: int) -> np.ndarray:
    cm = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(cm, (np.asarray(truth), np.asarray(pred)), 1)
    return cm


@dataclass
class RunResult:
    accuracy: float
    confusion: np.ndarray
    model: object = None
    pipeline: FeaturePipeline | None = None
    chosen_c: float | None = None


def train_classifier(method: MethodSpec, X, y, class_count, seed=0, c_param=None, warm_start=None):
    cp = method.classifier_params
    if method.classifier == "svm":
        return svm_mod.svm_train(X, y, c_param=c_param or cp["c_param"], tol=cp["tol"],
                                 max_epochs=cp["max_epochs"], seed=seed, class_count=class_count,
                                 warm_start=warm_start)
    return src_mod.src_fit(X, y, epsilon=cp["epsilon"], max_sparsity=cp["max_sparsity"],
                           class_count=class_count)


def predict(model, X) -> np.ndarray:
    if isinstance(model, svm_mod.LinearSvmModel):
        return svm_mod.svm_predict_many(model, X)
    return src_mod.src_predict_many(model, X)


def _pick_c(method, Xtr, ytr, Xval, yval, class_count, seed, warm_start=None):
    """C from the grid with the best validation accuracy (first in grid order on ties)."""
    cp = method.classifier_params
    grid = cp.get("c_grid") or [cp["c_param"]]
    if len(grid) == 1 or len(yval) == 0 or np.unique(ytr).size < class_count:
        return float(cp["c_param"])
    best_c, best_acc = None, -1.0
    for c in grid:
        model = train_classifier(method, Xtr, ytr, class_count, seed, c_param=c, warm_start=warm_start)
        acc = float(np.mean(predict(model, Xval) == yval))
        if acc > best_acc:
            best_c, best_acc = float(c), acc
    return best_c


def run_method(method: MethodSpec, train: Subset, validation: Subset, test: Subset,
               class_count: int = 4, seed: int = 0) -> RunResult:
    """Fit features and classifier on train (+validation), evaluate on test.

    For SVM the validation set first selects C from ``c_grid``; the final model
    is then refit on train and validation together.
    """
    if len(train) == 0 or len(test) == 0:
        raise InvalidArgumentError("train and test sets must be non-empty")
    fit = _concat(train, validation)
    chosen_c = None
    if method.classifier == "svm" and len(validation):
        pipe_tr = fit_pipeline(method, train)
        chosen_c = _pick_c(method, pipe_tr.transform(train), train.labels,
                           pipe_tr.transform(validation), validation.labels, class_count, seed)
    pipe = fit_pipeline(method, fit)
    model = train_classifier(method, pipe.transform(fit), fit.labels, class_count, seed, c_param=chosen_c)
    pred = predict(model, pipe.transform(test))
    cm = confusion_matrix(test.labels, pred, class_count)
    return RunResult(float(np.trace(cm) / cm.sum()), cm, model, pipe, chosen_c)


def _concat(a: Subset, b: Subset) -> Subset:
    if len(b) == 0:
        return a
    chips = None if a.chips is None or b.chips is None else list(a.chips) + list(b.chips)
    feats = None if a.features is None or b.features is None else np.vstack([a.features, b.features])
    return Subset(np.concatenate([a.labels, b.labels]), chips, feats)
