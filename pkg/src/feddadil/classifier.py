"""Softmax linear classifier on feature vectors.

The only classifier family used anywhere: a single linear layer with a
softmax head, trained by plain (mini-batch) gradient descent on
cross-entropy against hard or soft targets.  Kept deliberately small so
federated averaging and local empirical-risk fits share one code path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class SoftmaxClassifier:
    """Linear softmax classifier: ``p(x) = softmax(W x + b)``."""

    weights: np.ndarray  # (n_c, d)
    bias: np.ndarray  # (n_c,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("weights must be (n_c, d) with a matching bias vector")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("classifier parameters must be finite")

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Class-probability rows for a feature vector or matrix."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        logits = np.atleast_2d(x) @ self.weights.T + self.bias
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        return probs[0] if single else probs

    def copy(self) -> "SoftmaxClassifier":
        return SoftmaxClassifier(self.weights.copy(), self.bias.copy())


def zero_classifier(n_classes: int, dim: int) -> SoftmaxClassifier:
    """Shared deterministic initialization (uniform predictions)."""
    return SoftmaxClassifier(np.zeros((n_classes, dim)), np.zeros(n_classes))


def cross_entropy(clf: SoftmaxClassifier, features: np.ndarray, targets: np.ndarray) -> float:
    """Mean cross-entropy of the classifier against (soft) target rows."""
    probs = clf.predict_proba(np.atleast_2d(features))
    return float(-np.mean(np.sum(targets * np.log(np.clip(probs, 1e-12, None)), axis=1)))


def sgd_epoch(
    clf: SoftmaxClassifier,
    features: np.ndarray,
    targets: np.ndarray,
    eta: float,
    batch_size: int | None,
    rng: np.random.Generator,
) -> None:
    """One in-place epoch of (mini-batch) gradient descent on cross-entropy.

    ``batch_size=None`` runs a single full-batch step without shuffling,
    which keeps full-batch descent strictly monotone at small steps.
    """
    n = features.shape[0]
    if batch_size is None or batch_size >= n:
        batches = [np.arange(n)]
    else:
        order = rng.permutation(n)
        batches = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    for idx in batches:
        xb, yb = features[idx], targets[idx]
        probs = clf.predict_proba(xb)
        g = (probs - yb) / idx.size
        clf.weights -= eta * (g.T @ xb)
        clf.bias -= eta * g.sum(axis=0)
