"""Single-file serialization of a trained pipeline (features + statistics + classifier)."""

from __future__ import annotations

import json

import numpy as np

from ..classifiers.src import SrcModel
from ..classifiers.svm import LinearSvmModel
from ..errors import InvalidArgumentError
from ..mpca import MpcaModel
from .methods import FeaturePipeline, MethodSpec, Standardizer

BUNDLE_VERSION = 1


def save_bundle(path, pipeline: FeaturePipeline, model) -> None:
    arrays = {}
    header = {"format": "vessel-bench-bundle", "version": BUNDLE_VERSION, "method": pipeline.method.to_dict()}
    if pipeline.mpca_model is not None:
        mm = pipeline.mpca_model
        arrays["mpca_u0"], arrays["mpca_u1"] = mm.mode_projections
        arrays["mpca_mean"] = mm.mean
        header["mpca"] = {"energy_q": mm.energy_q, "iterations": mm.iterations,
                          "scatter_history": list(mm.scatter_history)}
    if pipeline.scaler is not None:
        arrays["scaler_mean"], arrays["scaler_std"] = pipeline.scaler.mean, pipeline.scaler.std
    if pipeline.center is not None:
        arrays["center"] = pipeline.center
    if pipeline.projection is not None:
        arrays["projection"] = pipeline.projection
    if isinstance(model, LinearSvmModel):
        header["classifier"] = {"kind": "svm", "c_param": model.c_param,
                                "epochs": [int(e) for e in model.epochs]}
        arrays["svm_weights"], arrays["svm_biases"] = model.weights, model.biases
    elif isinstance(model, SrcModel):
        header["classifier"] = {"kind": "src", "epsilon": model.epsilon, "max_sparsity": model.max_sparsity,
                                "class_count": model.class_count}
        arrays["src_dictionary"], arrays["src_labels"] = model.dictionary, model.atom_labels
        arrays["src_costs"] = model.atom_costs
    else:
        raise InvalidArgumentError(f"cannot serialize model of type {type(model).__name__}")
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)


def load_bundle(path):
    """Return (pipeline, model) saved by :func:`save_bundle`."""
    with np.load(path) as f:
        try:
            header = json.loads(str(f["header"]))
        except KeyError:
            raise InvalidArgumentError(f"{path}: not a model bundle") from None
        if header.get("format") != "vessel-bench-bundle" or header.get("version") != BUNDLE_VERSION:
            raise InvalidArgumentError(f"{path}: unsupported bundle format/version")
        md = header["method"]
        method = MethodSpec(md["feature"], md["classifier"], md["feature_params"], md["classifier_params"],
                            md["reduction"])
        pipe = FeaturePipeline(method)
        if "mpca" in header:
            h = header["mpca"]
            pipe.mpca_model = MpcaModel((f["mpca_u0"], f["mpca_u1"]), f["mpca_mean"], h["energy_q"],
                                        h["iterations"], h["scatter_history"])
        if "scaler_mean" in f.files:
            scaler = Standardizer.__new__(Standardizer)
            scaler.mean, scaler.std = f["scaler_mean"], f["scaler_std"]
            pipe.scaler = scaler
        if "center" in f.files:
            pipe.center = f["center"]
        if "projection" in f.files:
            pipe.projection = f["projection"]
        ch = header["classifier"]
        if ch["kind"] == "svm":
            model = LinearSvmModel(f["svm_weights"], f["svm_biases"], ch["c_param"], [], ch["epochs"])
        else:
            model = SrcModel(f["src_dictionary"], f["src_labels"], ch["epsilon"], ch["max_sparsity"],
                             f["src_costs"], ch["class_count"])
    return pipe, model
