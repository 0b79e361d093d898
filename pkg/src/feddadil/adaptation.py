"""Target-domain classification from a learned dictionary.

Two constructions, both local to the target client: reconstruction
trains one classifier on the labeled barycenter that stands in for the
target distribution; ensembling trains one classifier per atom and
mixes their predictive distributions with the target's private
coordinates.  A distillation helper shrinks the reconstruction to a
few support points per class.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .barycenter import barycenter_operator
from .classifier import SoftmaxClassifier, sgd_epoch, zero_classifier
from .dictionary import Dictionary
from .ot import LabeledMeasure, check_simplex

CLASSIFIER_MAGIC = b"FDCL"
CLASSIFIER_WIRE_VERSION = 1


@dataclass(eq=False)
class Ensemble:
    """Per-atom classifiers mixed by the target's barycentric coordinates."""

    members: tuple
    weights: np.ndarray

    def __post_init__(self):
        self.members = tuple(self.members)
        self.weights = check_simplex(self.weights, "ensemble weights")
        if len(self.members) != self.weights.size:
            raise ValueError(
                f"got {self.weights.size} weights for {len(self.members)} classifiers"
            )


def reconstruct_target(
    dictionary: Dictionary,
    alpha: np.ndarray,
    n_support: int | None = None,
    beta: float = 1.0,
    max_iter: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
) -> LabeledMeasure:
    """Labeled surrogate of the target distribution.

    Computes the barycenter of the atoms under the target's coordinates
    and returns its support, whose soft labels are plan-weighted convex
    combinations of atom labels.
    """
    bary = barycenter_operator(
        dictionary, alpha, n_support=n_support, beta=beta, max_iter=max_iter, tol=tol, seed=seed
    )
    return bary.support


def train_erm(
    data: LabeledMeasure,
    epochs: int,
    eta: float,
    seed: int = 0,
    batch_size: int | None = None,
) -> SoftmaxClassifier:
    """Fit a softmax classifier on a labeled measure by gradient descent.

    Soft label rows are valid targets (cross-entropy against the given
    distribution).  ``batch_size=None`` uses full-batch steps.
    """
    targets = data.require_labels("empirical risk minimization")
    clf = zero_classifier(targets.shape[1], data.dim)
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        sgd_epoch(clf, data.features, targets, eta, batch_size, rng)
    return clf


def train_atom_classifiers(
    dictionary: Dictionary, epochs: int, eta: float, seed: int = 0, batch_size: int | None = None
) -> list[SoftmaxClassifier]:
    """One classifier per atom, trained on that atom's labeled support."""
    return [
        train_erm(atom, epochs, eta, seed=seed, batch_size=batch_size)
        for atom in dictionary.atoms
    ]


def build_ensemble(
    dictionary: Dictionary,
    alpha: np.ndarray,
    epochs: int,
    eta: float,
    seed: int = 0,
    batch_size: int | None = None,
) -> Ensemble:
    members = train_atom_classifiers(dictionary, epochs, eta, seed=seed, batch_size=batch_size)
    return Ensemble(members=tuple(members), weights=alpha)


def ensemble_predict(ensemble: Ensemble, z: np.ndarray) -> np.ndarray:
    """Coordinate-weighted mixture of the member predictive distributions.

    Accepts a single feature vector or a matrix of rows; the output rows
    are convex combinations of simplex points, hence on the simplex.
    """
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    rows = np.atleast_2d(z)
    mixed = sum(
        w * member.predict_proba(rows) for w, member in zip(ensemble.weights, ensemble.members)
    )
    return mixed[0] if single else mixed


def distill(
    dictionary: Dictionary,
    alpha: np.ndarray,
    spc: int,
    n_classes: int | None = None,
    **reconstruct_options,
) -> LabeledMeasure:
    """Distilled summary: a barycenter with ``n_classes * spc`` support points."""
    if spc < 1:
        raise ValueError("spc must be at least 1")
    if n_classes is None:
        n_classes = dictionary.n_classes
    return reconstruct_target(dictionary, alpha, n_support=n_classes * spc, **reconstruct_options)


def mean_label_entropy(measure: LabeledMeasure) -> float:
    """Average entropy (nats) of the soft-label rows of a measure."""
    labels = measure.require_labels("label entropy")
    clipped = np.clip(labels, 1e-12, None)
    return float(-np.mean(np.sum(labels * np.log(clipped), axis=1)))


def _predict_proba(model, features: np.ndarray) -> np.ndarray:
    if isinstance(model, Ensemble):
        return ensemble_predict(model, features)
    return model.predict_proba(features)


def evaluate_accuracy(model, test: LabeledMeasure) -> float:
    """Fraction of test samples whose argmax prediction hits the argmax label.

    Test labels must be hard (one-hot) rows; argmax ties break toward
    the lowest class index on both sides.
    """
    labels = test.require_labels("accuracy evaluation")
    hard = np.argmax(labels, axis=1)
    onehot = np.zeros_like(labels)
    onehot[np.arange(labels.shape[0]), hard] = 1.0
    if np.max(np.abs(labels - onehot)) > 1e-9:
        raise ValueError("accuracy evaluation requires hard one-hot test labels")
    probs = _predict_proba(model, test.features)
    return float(np.mean(np.argmax(probs, axis=1) == hard))


def encode_classifier(clf: SoftmaxClassifier) -> bytes:
    """Serialize to the little-endian 32-bit block format (magic ``FDCL``)."""
    header = struct.pack(
        "<4sHHI", CLASSIFIER_MAGIC, CLASSIFIER_WIRE_VERSION, clf.n_classes, clf.dim
    )
    body = clf.weights.astype("<f4").tobytes() + clf.bias.astype("<f4").tobytes()
    return header + body


def decode_classifier(blob: bytes) -> SoftmaxClassifier:
    header_size = struct.calcsize("<4sHHI")
    if len(blob) < header_size:
        raise ValueError("classifier blob too short for its header")
    magic, version, n_classes, dim = struct.unpack_from("<4sHHI", blob)
    if magic != CLASSIFIER_MAGIC:
        raise ValueError(f"bad classifier magic {magic!r}")
    if version != CLASSIFIER_WIRE_VERSION:
        raise ValueError(f"unsupported classifier wire version {version}")
    expected = header_size + 4 * (n_classes * dim + n_classes)
    if len(blob) != expected:
        raise ValueError(f"classifier blob length {len(blob)} does not match header ({expected})")
    scalars = np.frombuffer(blob, dtype="<f4", offset=header_size).astype(np.float64)
    weights = scalars[: n_classes * dim].reshape(n_classes, dim)
    bias = scalars[n_classes * dim :]
    return SoftmaxClassifier(weights, bias)


def save_classifier(clf: SoftmaxClassifier, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_classifier(clf))


def load_classifier(path) -> SoftmaxClassifier:
    with open(path, "rb") as fh:
        return decode_classifier(fh.read())
