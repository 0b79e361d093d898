"""Exact discrete optimal transport between uniform empirical measures.

Every distribution handled here is an empirical measure with uniform
weights: ``n`` support points, each carrying mass ``1/n``.  Ground costs
are squared Euclidean distances, optionally augmented with a
label-mismatch penalty, and transport plans are exact vertex solutions
of the transportation linear program at mini-batch scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist

#: tolerance on transport-plan marginals
MARGINAL_TOL = 1e-8

#: tolerance on label rows lying on the probability simplex
SIMPLEX_TOL = 1e-9

#: largest problem size handled by replicating one side of a divisible
#: rectangular problem into a square assignment problem
_REPLICATE_CAP = 2048


@dataclass(frozen=True, eq=False)
class LabeledMeasure:
    """Uniform-weight empirical distribution over feature vectors.

    Parameters
    ----------
    features : (n, d) array_like
        Support points.  Each of the ``n`` rows carries mass ``1/n``.
    labels : (n, n_c) array_like, optional
        Per-sample soft labels.  Each row must be a point of the
        ``n_c``-simplex (nonnegative, summing to one) within
        ``SIMPLEX_TOL``.  ``None`` for unlabeled data.

    Arrays are copied and frozen at construction; instances are safe to
    share across threads.
    """

    features: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        feats = np.array(self.features, dtype=np.float64, order="C", ndmin=2)
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {feats.shape}")
        if feats.shape[0] < 1 or feats.shape[1] < 1:
            raise ValueError(f"features must be a non-empty matrix, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features contain non-finite entries")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)

        if self.labels is not None:
            labs = np.array(self.labels, dtype=np.float64, order="C", ndmin=2)
            if labs.ndim != 2 or labs.shape[0] != feats.shape[0]:
                raise ValueError(
                    f"labels must have one row per sample: got {labs.shape} for {feats.shape[0]} samples"
                )
            if not np.all(np.isfinite(labs)):
                raise ValueError("labels contain non-finite entries")
            if labs.min(initial=0.0) < -SIMPLEX_TOL:
                raise ValueError("label rows must be nonnegative")
            sums = labs.sum(axis=1)
            if np.max(np.abs(sums - 1.0)) > SIMPLEX_TOL:
                raise ValueError("label rows must sum to one")
            labs.setflags(write=False)
            object.__setattr__(self, "labels", labs)

    @classmethod
    def unchecked(cls, features, labels=None) -> "LabeledMeasure":
        """Construct without the simplex check on label rows.

        Needed for support arithmetic (atom differences, scaled
        versions) whose intermediate label rows legitimately leave the
        simplex.  Shapes and finiteness are still validated.
        """
        obj = object.__new__(cls)
        feats = np.array(features, dtype=np.float64, order="C", ndmin=2)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise ValueError(f"features must be a non-empty matrix, got shape {feats.shape}")
        feats.setflags(write=False)
        object.__setattr__(obj, "features", feats)
        if labels is not None:
            labs = np.array(labels, dtype=np.float64, order="C", ndmin=2)
            if labs.shape[0] != feats.shape[0]:
                raise ValueError("labels must have one row per sample")
            labs.setflags(write=False)
            object.__setattr__(obj, "labels", labs)
        else:
            object.__setattr__(obj, "labels", None)
        return obj

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int | None:
        return None if self.labels is None else self.labels.shape[1]

    def require_labels(self, what: str = "this operation") -> np.ndarray:
        if self.labels is None:
            raise ValueError(f"{what} requires labels")
        return self.labels


def feature_cost(p: LabeledMeasure, q: LabeledMeasure) -> np.ndarray:
    """Pairwise squared Euclidean distances between two supports.

    Returns the (n, m) ground-cost matrix with entry (i, j) equal to
    ``||p.features[i] - q.features[j]||^2``.
    """
    if p.dim != q.dim:
        raise ValueError(f"feature dimension mismatch: {p.dim} vs {q.dim}")
    return cdist(p.features, q.features, "sqeuclidean")


def label_aware_cost(p: LabeledMeasure, q: LabeledMeasure, beta: float) -> np.ndarray:
    """Ground cost combining feature and label mismatch.

    Entry (i, j) is the squared feature distance plus ``beta`` times the
    squared Euclidean distance between soft-label rows, so transporting
    mass across classes is penalized.

    Parameters
    ----------
    p, q : LabeledMeasure
        Both measures must carry labels with the same number of classes.
    beta : float
        Positive weight of the label term.
    """
    if not np.isfinite(beta) or beta <= 0:
        raise ValueError(f"beta must be a positive real, got {beta}")
    yp = p.require_labels("supervised cost")
    yq = q.require_labels("supervised cost")
    if yp.shape[1] != yq.shape[1]:
        raise ValueError(f"label width mismatch: {yp.shape[1]} vs {yq.shape[1]}")
    return feature_cost(p, q) + beta * cdist(yp, yq, "sqeuclidean")


def _assignment_plan(cost: np.ndarray) -> np.ndarray:
    n = cost.shape[0]
    rows, cols = linear_sum_assignment(cost)
    plan = np.zeros_like(cost)
    plan[rows, cols] = 1.0 / n
    return plan


def _replicated_plan(cost: np.ndarray) -> np.ndarray:
    # one side divides the other: tile the smaller side into a square
    # assignment problem, then pool the replicas back together
    n, m = cost.shape
    if n < m:
        r = m // n
        full = _assignment_plan(np.repeat(cost, r, axis=0))
        return full.reshape(n, r, m).sum(axis=1)
    r = n // m
    full = _assignment_plan(np.repeat(cost, r, axis=1))
    return full.reshape(n, m, r).sum(axis=2)


def _linprog_plan(cost: np.ndarray) -> np.ndarray:
    n, m = cost.shape
    row_con = sparse.kron(sparse.eye(n, format="csr"), np.ones((1, m)))
    col_con = sparse.kron(np.ones((1, n)), sparse.eye(m, format="csr"))
    a_eq = sparse.vstack([row_con, col_con]).tocsc()[:-1]  # last constraint redundant
    b_eq = np.concatenate([np.full(n, 1.0 / n), np.full(m, 1.0 / m)])[:-1]
    res = linprog(
        cost.ravel(),
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    plan = res.x.reshape(n, m)
    np.maximum(plan, 0.0, out=plan)
    return plan


def solve_exact_ot(cost: np.ndarray) -> np.ndarray:
    """Exact optimal transport plan for uniform marginals.

    Solves the transportation linear program between two uniform
    empirical measures whose sizes are given by the cost-matrix shape:
    row marginals ``1/n`` and column marginals ``1/m``.  The returned
    plan is an optimal vertex of the transportation polytope.

    Square problems reduce to a minimum-cost assignment; rectangular
    problems with divisible sizes are solved by replicating the smaller
    side; the general case falls back to an exact dual-simplex LP solve.
    All paths are deterministic.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix entries must be finite")
    n, m = cost.shape
    if n == m:
        return _assignment_plan(cost)
    big, small = max(n, m), min(n, m)
    if big % small == 0 and big <= _REPLICATE_CAP:
        return _replicated_plan(cost)
    return _linprog_plan(cost)


def transport_cost(cost: np.ndarray, plan: np.ndarray) -> float:
    """Frobenius inner product of a plan with a ground-cost matrix.

    For an optimal plan under squared Euclidean cost this is the squared
    2-Wasserstein distance between the two measures.
    """
    cost = np.asarray(cost, dtype=np.float64)
    plan = np.asarray(plan, dtype=np.float64)
    if cost.shape != plan.shape:
        raise ValueError(f"shape mismatch: cost {cost.shape} vs plan {plan.shape}")
    return float(np.sum(cost * plan))


def squared_w2(p: LabeledMeasure, q: LabeledMeasure) -> float:
    """Exact squared 2-Wasserstein distance between two measures (features only)."""
    cost = feature_cost(p, q)
    return transport_cost(cost, solve_exact_ot(cost))


def barycentric_projection(plan: np.ndarray, q: LabeledMeasure):
    """Push a support through a transport plan onto another measure.

    Maps each of the ``n`` plan rows to the plan-weighted average of
    ``q``'s support, ``n * plan @ q.features``.  Returns a pair
    ``(features, labels)`` where ``labels`` is the analogous projection
    ``n * plan @ q.labels`` when ``q`` is labeled, else ``None``.
    """
    plan = np.asarray(plan, dtype=np.float64)
    if plan.ndim != 2 or plan.shape[1] != q.n:
        raise ValueError(f"plan with {plan.shape} columns does not match measure of size {q.n}")
    n = plan.shape[0]
    feats = n * plan @ q.features
    labs = n * plan @ q.labels if q.labels is not None else None
    return feats, labs


def simplex_project(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of a vector onto the probability simplex.

    Uses the sort-and-threshold construction: with ``u`` the entries of
    ``v`` sorted in decreasing order, the threshold is
    ``theta = (sum_{i<=rho} u_i - 1) / rho`` for the largest feasible
    ``rho``, and the projection is ``max(v - theta, 0)``.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a non-finite vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, v.size + 1)
    rho = np.nonzero(u * ks > css - 1.0)[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project_rows_to_simplex(mat: np.ndarray) -> np.ndarray:
    """Row-wise simplex projection (vectorized over rows)."""
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ValueError("cannot project non-finite rows")
    n, k = mat.shape
    u = -np.sort(-mat, axis=1)
    css = np.cumsum(u, axis=1)
    ks = np.arange(1, k + 1)
    feasible = u * ks > css - 1.0
    rho = k - 1 - np.argmax(feasible[:, ::-1], axis=1)
    theta = (css[np.arange(n), rho] - 1.0) / (rho + 1.0)
    return np.maximum(mat - theta[:, None], 0.0)


def check_simplex(v: np.ndarray, what: str = "weights") -> np.ndarray:
    """Validate that a vector lies on the probability simplex; returns it as float64."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise ValueError(f"{what} must be a non-empty 1-D vector")
    if v.min() < -SIMPLEX_TOL or abs(v.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"{what} must lie on the probability simplex")
    return v
