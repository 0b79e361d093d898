"""Free-support Wasserstein barycenters of labeled empirical measures.

The barycenter of measures ``P_1..P_K`` under weights ``alpha`` on the
simplex minimizes the alpha-weighted sum of squared transport costs.
Its support is free: a fixed-point iteration alternates exact transport
solves against each input measure with barycentric-projection updates
of the support, which never increases the objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .ot import (
    LabeledMeasure,
    check_simplex,
    project_rows_to_simplex,
    solve_exact_ot,
)


@dataclass(eq=False)
class BarycenterResult:
    """Converged barycenter: support, per-input plans and objective trace.

    ``support`` carries soft labels when the inputs are labeled.
    ``plans[k]`` couples the support (rows) with input ``k`` (columns).
    ``objective_trace[t]`` is the weighted transport objective after
    ``t`` support updates; the sequence is non-increasing up to
    numerical slack.
    """

    support: LabeledMeasure
    plans: list[np.ndarray]
    objective_trace: np.ndarray
    n_iterations: int


def _fixed_point(
    feats: list[np.ndarray],
    labels: list[np.ndarray] | None,
    weights: np.ndarray,
    n_support: int,
    beta: float,
    max_iter: int,
    tol: float,
    rng: np.random.Generator,
    init_features: np.ndarray | None,
    init_labels: np.ndarray | None,
):
    """Fixed-point iteration on raw arrays; labels may be None for all inputs."""
    dim = feats[0].shape[1]
    if init_features is not None and init_features.shape == (n_support, dim):
        support = np.array(init_features, dtype=np.float64)
    else:
        support = rng.standard_normal((n_support, dim))
    if labels is not None:
        n_classes = labels[0].shape[1]
        if init_labels is not None and init_labels.shape == (n_support, n_classes):
            sup_labels = np.array(init_labels, dtype=np.float64)
        else:
            sup_labels = np.full((n_support, n_classes), 1.0 / n_classes)
    else:
        sup_labels = None

    trace: list[float] = []
    plans: list[np.ndarray] = []
    prev = None
    for it in range(max_iter + 1):
        costs = []
        for k, fk in enumerate(feats):
            c = cdist(support, fk, "sqeuclidean")
            if sup_labels is not None:
                c = c + beta * cdist(sup_labels, labels[k], "sqeuclidean")
            costs.append(c)
        plans = [solve_exact_ot(c) for c in costs]
        objective = float(
            sum(w * np.sum(pl * c) for w, pl, c in zip(weights, plans, costs))
        )
        trace.append(objective)
        if prev is not None and abs(prev - objective) <= tol * max(abs(prev), 1e-16):
            break
        if it == max_iter:
            break
        prev = objective
        support = sum(
            w * (n_support * pl @ fk) for w, pl, fk in zip(weights, plans, feats)
        )
        if sup_labels is not None:
            sup_labels = sum(
                w * (n_support * pl @ lk) for w, pl, lk in zip(weights, plans, labels)
            )
            sup_labels = project_rows_to_simplex(sup_labels)
    return support, sup_labels, plans, np.asarray(trace)


def free_support_barycenter(
    atoms,
    weights,
    n_support: int | None = None,
    beta: float = 1.0,
    max_iter: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
    init_features: np.ndarray | None = None,
    init_labels: np.ndarray | None = None,
) -> BarycenterResult:
    """Free-support barycenter of ``K`` measures under simplex weights.

    Parameters
    ----------
    atoms : sequence of LabeledMeasure
        Input measures; all must share the feature dimension, and either
        all or none carry labels (with equal class counts).
    weights : (K,) array_like
        Barycentric coordinates on the simplex.
    n_support : int, optional
        Number of support points of the barycenter; defaults to the
        size of the first input.
    beta : float
        Label-mismatch weight of the ground cost used for the transport
        solves when the inputs are labeled.
    max_iter, tol : int, float
        The iteration stops when the relative objective change drops
        below ``tol``, or after ``max_iter`` support updates.
    seed : int
        Seeds the standard-normal support initialization.
    init_features, init_labels : ndarray, optional
        Warm-start support (used when the shape matches; otherwise the
        seeded initialization applies).

    Returns
    -------
    BarycenterResult
    """
    atoms = list(atoms)
    if not atoms:
        raise ValueError("need at least one input measure")
    weights = check_simplex(weights, "barycentric coordinates")
    if weights.size != len(atoms):
        raise ValueError(f"got {weights.size} weights for {len(atoms)} measures")
    dim = atoms[0].dim
    if any(a.dim != dim for a in atoms):
        raise ValueError("all input measures must share the feature dimension")
    labeled = atoms[0].labels is not None
    if any((a.labels is not None) != labeled for a in atoms):
        raise ValueError("either all or none of the input measures may carry labels")
    if labeled:
        n_classes = atoms[0].n_classes
        if any(a.n_classes != n_classes for a in atoms):
            raise ValueError("all labeled inputs must share the class count")
    if n_support is None:
        n_support = atoms[0].n
    if n_support < 1:
        raise ValueError("n_support must be at least 1")

    support, sup_labels, plans, trace = _fixed_point(
        feats=[a.features for a in atoms],
        labels=[a.labels for a in atoms] if labeled else None,
        weights=weights,
        n_support=int(n_support),
        beta=beta,
        max_iter=int(max_iter),
        tol=float(tol),
        rng=np.random.default_rng(seed),
        init_features=init_features,
        init_labels=init_labels,
    )
    return BarycenterResult(
        support=LabeledMeasure(support, sup_labels),
        plans=plans,
        objective_trace=trace,
        n_iterations=len(trace) - 1,
    )


def barycenter_operator(dictionary, weights, **kwargs) -> BarycenterResult:
    """Barycenter of a dictionary's atoms under the given coordinates."""
    return free_support_barycenter(dictionary.atoms, weights, **kwargs)
