"""Softmax-regression reference learner.

Parameters are a ``(C, d + 1)`` float array: one weight row per class with the
bias in the last column. Any object with ``init_params``, ``local_train`` and
``evaluate`` methods of the same signatures as :class:`SoftmaxRegression` can
be plugged into the orchestrator instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from fedsim.errors import ConfigurationError, DimensionError, NumericError
from fedsim.partition import LabeledDataset

__all__ = [
    "LearnerConfig",
    "EvalReport",
    "Learner",
    "SoftmaxRegression",
    "init_params",
    "predict_proba",
    "loss_and_gradient",
    "local_train",
    "evaluate",
    "weight_divergence",
    "effective_learning_rate",
]


@dataclass(frozen=True)
class LearnerConfig:
    learning_rate: float = 0.05
    batch_size: int = 8
    local_epochs: int = 1
    lr_step: int = 50
    lr_gamma: float = 1.0
    prox_mu: float = 0.0
    init_scale: float = 0.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigurationError("must be >= 0", "learning_rate")
        if self.batch_size < 1:
            raise ConfigurationError("must be >= 1", "batch_size")
        if self.local_epochs != 1:
            raise ConfigurationError("only one local epoch is supported", "local_epochs")
        if self.lr_step < 1:
            raise ConfigurationError("must be >= 1", "lr_step")
        if not 0.0 < self.lr_gamma <= 1.0:
            raise ConfigurationError("must lie in (0, 1]", "lr_gamma")
        if self.prox_mu < 0:
            raise ConfigurationError("must be >= 0", "prox_mu")
        if self.init_scale < 0:
            raise ConfigurationError("must be >= 0", "init_scale")


@dataclass(frozen=True)
class EvalReport:
    loss: float
    accuracy: float
    per_class_recall: np.ndarray  # NaN for classes absent from the evaluation data


class Learner(Protocol):
    def init_params(self, seed: int) -> np.ndarray: ...

    def local_train(
        self, params: np.ndarray, data: LabeledDataset, cfg: LearnerConfig,
        t: int, seed: int, client_id: int = 0,
    ) -> np.ndarray: ...

    def evaluate(self, params: np.ndarray, data: LabeledDataset) -> EvalReport: ...


def init_params(num_classes: int, dim: int, seed: int = 0, init_scale: float = 0.0) -> np.ndarray:
    if num_classes < 2 or dim < 1:
        raise ValueError("need num_classes >= 2 and dim >= 1")
    shape = (num_classes, dim + 1)
    if init_scale == 0:
        return np.zeros(shape)
    rng = np.random.default_rng(seed)
    return rng.uniform(-init_scale, init_scale, size=shape)


def _augment(x: np.ndarray) -> np.ndarray:
    return np.hstack([x, np.ones((x.shape[0], 1))])


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def predict_proba(params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Class probabilities for one feature vector (1-D) or a batch of rows (2-D)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    if xb.shape[1] + 1 != params.shape[1]:
        raise DimensionError(f"expected {params.shape[1] - 1} features, got {xb.shape[1]}")
    if not np.all(np.isfinite(xb)):
        raise NumericError("non-finite input features")
    out = np.exp(_log_softmax(_augment(xb) @ params.T))
    return out[0] if single else out


def _loss_grad(w, xa, y, center, mu):
    n = y.shape[0]
    logp = _log_softmax(xa @ w.T)
    loss = -logp[np.arange(n), y].mean()
    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    grad = delta.T @ xa / n
    if center is not None and mu:
        diff = w - center
        loss += 0.5 * mu * float(np.sum(diff * diff))
        grad += mu * diff
    return float(loss), grad


def loss_and_gradient(
    params: np.ndarray,
    batch: LabeledDataset,
    prox_center: Optional[np.ndarray] = None,
    mu: float = 0.0,
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy on ``batch`` plus ``mu/2 * ||params - prox_center||^2``.

    Returns the loss and its exact gradient (same shape as ``params``).
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    if mu > 0 and prox_center is None:
        raise ConfigurationError("a proximal term needs a prox_center", "prox_mu")
    if prox_center is not None and prox_center.shape != params.shape:
        raise DimensionError("prox_center shape differs from params")
    return _loss_grad(params, _augment(batch.features), batch.labels, prox_center, mu)


def effective_learning_rate(cfg: LearnerConfig, t: int) -> float:
    return cfg.learning_rate * cfg.lr_gamma ** (t // cfg.lr_step)


def local_train(
    params: np.ndarray,
    data: LabeledDataset,
    cfg: LearnerConfig,
    t: int,
    seed: int,
    client_id: int = 0,
) -> np.ndarray:
    """One epoch of mini-batch SGD starting from ``params`` (which is not modified).

    The visiting order is a permutation drawn from ``(seed, t, client_id)``, so
    the result does not depend on which worker runs it. With ``cfg.prox_mu > 0``
    every step is pulled towards the starting point (FedProx): the data term
    takes a gradient step and the proximal term is then applied exactly, so
    arbitrarily large ``mu`` pins the output to ``params`` instead of diverging.
    """
    if len(data) == 0:
        raise ValueError("client has no data")
    lr = effective_learning_rate(cfg, t)
    rng = np.random.default_rng([seed, t, client_id])
    order = rng.permutation(len(data))
    xa = _augment(data.features)[order]
    y = data.labels[order]
    mu = cfg.prox_mu
    w = params.copy()
    # overflow surfaces as the NumericError below rather than as warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, y.shape[0], cfg.batch_size):
            stop = start + cfg.batch_size
            _, grad = _loss_grad(w, xa[start:stop], y[start:stop], None, 0.0)
            if mu > 0:
                # exact proximal step on the quadratic term; an explicit step diverges once lr * mu > 2
                w = (w - lr * grad + (lr * mu) * params) / (1.0 + lr * mu)
            else:
                w -= lr * grad
    if not np.all(np.isfinite(w)):
        raise NumericError(f"local training diverged (client {client_id}, round {t})")
    return w


def evaluate(params: np.ndarray, data: LabeledDataset) -> EvalReport:
    """Loss, accuracy and per-class recall. Argmax ties go to the lowest class index."""
    if len(data) == 0:
        raise ValueError("empty evaluation set")
    logp = _log_softmax(_augment(data.features) @ params.T)
    y = data.labels
    loss = float(-logp[np.arange(y.shape[0]), y].mean())
    pred = np.argmax(logp, axis=1)
    hit = pred == y
    support = np.bincount(y, minlength=data.num_classes)
    tp = np.bincount(y[hit], minlength=data.num_classes)
    with np.errstate(invalid="ignore", divide="ignore"):
        recall = np.where(support > 0, tp / np.maximum(support, 1), np.nan)
    return EvalReport(loss=loss, accuracy=float(hit.mean()), per_class_recall=recall)


def weight_divergence(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two parameter blocks."""
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.linalg.norm((a - b).ravel()))


class SoftmaxRegression:
    """The reference :class:`Learner`: multinomial logistic regression."""

    def __init__(self, num_classes: int, dim: int, init_scale: float = 0.0):
        self.num_classes = num_classes
        self.dim = dim
        self.init_scale = init_scale

    def init_params(self, seed: int) -> np.ndarray:
        return init_params(self.num_classes, self.dim, seed, self.init_scale)

    def local_train(self, params, data, cfg, t, seed, client_id=0):
        return local_train(params, data, cfg, t, seed, client_id)

    def evaluate(self, params, data):
        return evaluate(params, data)
