from .src import (
    SrcModel,
    class_residuals,
    homotopy_l1,
    sparse_solve,
    src_classify,
    src_fit,
    src_merge,
    src_predict_many,
)
from .svm import LinearSvmModel, svm_predict, svm_predict_many, svm_train

__all__ = [
    "LinearSvmModel",
    "SrcModel",
    "class_residuals",
    "homotopy_l1",
    "sparse_solve",
    "src_classify",
    "src_fit",
    "src_merge",
    "src_predict_many",
    "svm_predict",
    "svm_predict_many",
    "svm_train",
]
