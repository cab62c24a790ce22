"""Mood classifiers: majority baseline, SMO kernel SVM, two-hidden-layer MLP."""
from .grid import MODEL_KINDS, HyperGrid, grid_candidates
from .majority import MajorityModel, train_majority
from .mlp import (MlpHyper, MlpModel, SoftmaxHead, TrainingError, loss_and_grads,
                  train_head, train_mlp, with_head)
from .serialize import load_model, save_model
from .svm import ConvergenceError, Kernel, SvmModel, smo, train_svm


def mlp_forward(model: MlpModel, x, mode: str = "infer", rng=None):
    """(class probabilities, penultimate activation) for ``x``."""
    return model.forward(x, mode, rng)


def svm_predict(model: SvmModel, x):
    return model.predict(x)


__all__ = [
    "MODEL_KINDS", "HyperGrid", "grid_candidates", "MajorityModel", "train_majority",
    "MlpHyper", "MlpModel", "SoftmaxHead", "TrainingError", "loss_and_grads",
    "train_head", "train_mlp", "with_head", "mlp_forward", "svm_predict",
    "ConvergenceError", "Kernel", "SvmModel", "smo", "train_svm",
    "save_model", "load_model",
]
