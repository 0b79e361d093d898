"""Dictionaries of labeled atoms and their transport objective.

A dictionary is a set of ``K`` atoms, each a labeled empirical measure
with free support, shared by all clients.  Each client ``l`` keeps a
private coordinate vector ``alpha_l`` on the ``K``-simplex and measures
how well the barycenter of the atoms under ``alpha_l`` reproduces its
own data: the transport cost between the two is the client's loss, and
the federated objective is the mean of the client losses.

Gradients are taken with every transport plan held fixed at its optimum
(envelope form): the barycenter support is then an explicit linear
function of atom supports and coordinates, and the quadratic transport
cost differentiates in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .barycenter import barycenter_operator, _fixed_point
from .ot import (
    LabeledMeasure,
    check_simplex,
    project_rows_to_simplex,
    simplex_project,
    solve_exact_ot,
)


@dataclass(eq=False)
class Dictionary:
    """Ordered collection of ``K`` labeled atoms with identical shape."""

    atoms: tuple

    def __post_init__(self):
        atoms = tuple(self.atoms)
        if not atoms:
            raise ValueError("a dictionary needs at least one atom")
        first = atoms[0]
        if first.labels is None:
            raise ValueError("dictionary atoms must carry labels")
        for a in atoms[1:]:
            if a.labels is None:
                raise ValueError("dictionary atoms must carry labels")
            if a.n != first.n or a.dim != first.dim or a.n_classes != first.n_classes:
                raise ValueError("all atoms must share (n, d, n_c)")
        object.__setattr__(self, "atoms", atoms)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_points(self) -> int:
        return self.atoms[0].n

    @property
    def dim(self) -> int:
        return self.atoms[0].dim

    @property
    def n_classes(self) -> int:
        return self.atoms[0].n_classes


@dataclass(eq=False)
class ClientState:
    """One participant: its data, private coordinates and working copy.

    ``alpha`` never leaves the client; the federation layer serializes
    dictionaries only.  The target client is the one whose data carries
    no labels.
    """

    client_id: int
    data: LabeledMeasure
    alpha: np.ndarray
    local_dictionary: Dictionary | None = None

    def __post_init__(self):
        self.alpha = check_simplex(self.alpha, "alpha")

    @property
    def is_target(self) -> bool:
        return self.data.labels is None


@dataclass(eq=False)
class LossReport:
    """Global objective value together with the per-client losses."""

    value: float
    per_client: np.ndarray

    def __post_init__(self):
        self.per_client = np.asarray(self.per_client, dtype=np.float64)
        if abs(self.value - self.per_client.mean()) > 1e-12:
            raise ValueError("value must equal the mean of per_client losses")


@dataclass(eq=False)
class FrozenPlans:
    """Transport plans held fixed for envelope gradients.

    ``bary_plans[k]`` couples the barycenter support (rows) with atom
    ``k``; ``data_plan`` couples the barycenter support with the client
    data.  All marginals are uniform.
    """

    bary_plans: list[np.ndarray]
    data_plan: np.ndarray


@dataclass(eq=False)
class GradientBlocks:
    """Fixed-plan gradients of one client loss."""

    atom_features: list[np.ndarray]
    atom_labels: list[np.ndarray]
    alpha: np.ndarray


def _bary_kwargs(kwargs: dict) -> dict:
    allowed = {"n_support", "max_iter", "tol", "seed", "init_features", "init_labels"}
    unknown = set(kwargs) - allowed
    if unknown:
        raise TypeError(f"unknown barycenter options: {sorted(unknown)}")
    return kwargs


def _data_cost(support_feats, support_labels, data: LabeledMeasure, beta: float):
    cost = cdist(support_feats, data.features, "sqeuclidean")
    if data.labels is not None:
        cost = cost + beta * cdist(support_labels, data.labels, "sqeuclidean")
    return cost


def local_loss(
    client: ClientState,
    dictionary: Dictionary,
    beta: float,
    supervised: bool | None = None,
    **bary_options,
) -> float:
    """Transport cost from a client's data to its atom barycenter.

    The barycenter of the atoms under the client's coordinates is
    computed first; the returned loss is the exact transport cost
    between that barycenter and the client data, under the label-aware
    cost for labeled clients and the feature-only cost for the target.
    ``supervised=True`` insists on the label-aware cost and fails on
    unlabeled clients.
    """
    if dictionary.dim != client.data.dim:
        raise ValueError("dictionary and client data disagree on the feature dimension")
    if supervised and client.data.labels is None:
        raise ValueError("supervised cost requires labels on the client data")
    bary = barycenter_operator(dictionary, client.alpha, beta=beta, **_bary_kwargs(bary_options))
    cost = _data_cost(bary.support.features, bary.support.labels, client.data, beta)
    plan = solve_exact_ot(cost)
    return float(np.sum(plan * cost))


def global_loss(clients, dictionary: Dictionary, beta: float, **bary_options) -> LossReport:
    """Mean of the per-client losses."""
    clients = list(clients)
    if not clients:
        raise ValueError("need at least one client")
    per = np.array([local_loss(c, dictionary, beta, **bary_options) for c in clients])
    return LossReport(value=float(per.mean()), per_client=per)


def compute_frozen_plans(
    client: ClientState, dictionary: Dictionary, beta: float, **bary_options
) -> FrozenPlans:
    """Converge the client's barycenter and freeze every plan at its optimum."""
    bary = barycenter_operator(dictionary, client.alpha, beta=beta, **_bary_kwargs(bary_options))
    cost = _data_cost(bary.support.features, bary.support.labels, client.data, beta)
    return FrozenPlans(bary_plans=bary.plans, data_plan=solve_exact_ot(cost))


def _composite_support(atom_feats, atom_labels, alpha, bary_plans, with_labels):
    n_b = bary_plans[0].shape[0]
    feats = sum(a * (n_b * pl @ f) for a, pl, f in zip(alpha, bary_plans, atom_feats))
    labels = None
    if with_labels:
        labels = sum(a * (n_b * pl @ y) for a, pl, y in zip(alpha, bary_plans, atom_labels))
    return feats, labels


def frozen_objective(
    atom_feats,
    atom_labels,
    alpha,
    plans: FrozenPlans,
    data: LabeledMeasure,
    beta: float,
    feature_shift: np.ndarray | None = None,
) -> float:
    """Client loss as an explicit function of supports, with plans fixed.

    The barycenter support is reconstructed from the frozen plans as
    ``sum_k alpha_k * (n_B * plan_k @ atom_k)`` and contracted against
    the frozen data plan.  ``feature_shift`` adds a constant vector to
    every atom feature row before the reconstruction.  This is the
    function the analytic gradients differentiate, so it also serves as
    the finite-difference target.
    """
    if feature_shift is not None:
        atom_feats = [f + feature_shift for f in atom_feats]
    labeled = data.labels is not None
    feats, labels = _composite_support(atom_feats, atom_labels, alpha, plans.bary_plans, labeled)
    cost = cdist(feats, data.features, "sqeuclidean")
    value = float(np.sum(plans.data_plan * cost))
    if labeled:
        label_cost = cdist(labels, data.labels, "sqeuclidean")
        value += beta * float(np.sum(plans.data_plan * label_cost))
    return value


def frozen_gradients(
    atom_feats,
    atom_labels,
    alpha,
    plans: FrozenPlans,
    data: LabeledMeasure,
    beta: float,
) -> GradientBlocks:
    """Fixed-plan gradients of ``frozen_objective`` in all three blocks."""
    labeled = data.labels is not None
    pi = plans.data_plan
    n_b = pi.shape[0]
    feats, labels = _composite_support(atom_feats, atom_labels, alpha, plans.bary_plans, labeled)
    row_mass = pi.sum(axis=1)
    g_feat = 2.0 * (row_mass[:, None] * feats - pi @ data.features)
    if labeled:
        g_label = 2.0 * beta * (row_mass[:, None] * labels - pi @ data.labels)

    grad_feats, grad_labels, grad_alpha = [], [], np.zeros(len(atom_feats))
    for k, bp in enumerate(plans.bary_plans):
        lift = n_b * bp  # row-stochastic
        grad_feats.append(alpha[k] * (lift.T @ g_feat))
        proj_f = lift @ atom_feats[k]
        grad_alpha[k] = float(np.sum(g_feat * proj_f))
        if labeled:
            grad_labels.append(alpha[k] * (lift.T @ g_label))
            grad_alpha[k] += float(np.sum(g_label * (lift @ atom_labels[k])))
        else:
            grad_labels.append(np.zeros_like(atom_labels[k]))
    return GradientBlocks(atom_features=grad_feats, atom_labels=grad_labels, alpha=grad_alpha)


def loss_gradients(
    client: ClientState,
    dictionary: Dictionary,
    beta: float,
    plans: FrozenPlans | None = None,
    **bary_options,
) -> GradientBlocks:
    """Gradients of the client loss at the current dictionary.

    Plans are converged and frozen first (unless supplied); gradients
    flow through the barycenter-support reconstruction only.
    """
    if plans is None:
        plans = compute_frozen_plans(client, dictionary, beta, **bary_options)
    return frozen_gradients(
        [a.features for a in dictionary.atoms],
        [a.labels for a in dictionary.atoms],
        client.alpha,
        plans,
        client.data,
        beta,
    )


def client_update(
    client: ClientState,
    incoming: Dictionary,
    epochs: int,
    batch_size: int,
    eta: float,
    beta: float,
    seed: int = 0,
    eta_alpha: float | None = None,
    project_labels: bool = True,
    bary_max_iter: int = 50,
    bary_tol: float = 1e-5,
) -> Dictionary:
    """One client's local optimization pass over its copy of the atoms.

    Runs ``epochs`` passes; each pass shuffles every atom into
    ``ceil(n / batch_size)`` contiguous batches and pairs each with a
    fresh batch of client data.  Per step, the mini-batch barycenter is
    converged, its plans are frozen, and plain gradient steps are
    applied to atom features, atom labels and the private coordinates;
    coordinates are re-projected onto the simplex after every step, and
    label rows likewise (or once at the end when ``project_labels`` is
    off).  ``client.alpha`` is updated in place; the incoming dictionary
    is never mutated.

    ``eta_alpha`` optionally decouples the coordinate step size from the
    support step size (the two blocks differ in curvature by roughly the
    batch size); it defaults to ``eta``.
    """
    n = incoming.n_points
    if batch_size > n:
        raise ValueError(f"batch_size {batch_size} exceeds atom size {n}")
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if epochs < 0:
        raise ValueError("epochs must be nonnegative")
    if eta_alpha is None:
        eta_alpha = eta

    if epochs == 0:
        client.local_dictionary = incoming
        return incoming

    k_atoms = incoming.n_atoms
    feats = [np.array(a.features) for a in incoming.atoms]
    labels = [np.array(a.labels) for a in incoming.atoms]
    alpha = np.array(client.alpha)
    data = client.data
    labeled = data.labels is not None
    rng = np.random.default_rng(seed)
    n_batches = math.ceil(n / batch_size)

    data_order = rng.permutation(data.n)
    cursor = 0
    warm_feats = None
    warm_labels = None

    for _ in range(epochs):
        atom_orders = [rng.permutation(n) for _ in range(k_atoms)]
        for b in range(n_batches):
            idx = [order[b * batch_size : (b + 1) * batch_size] for order in atom_orders]
            size = idx[0].size
            take = min(batch_size, data.n)
            if cursor + take > data.n:
                data_order = rng.permutation(data.n)
                cursor = 0
            data_idx = data_order[cursor : cursor + take]
            cursor += take

            batch_feats = [feats[k][idx[k]] for k in range(k_atoms)]
            batch_labels = [labels[k][idx[k]] for k in range(k_atoms)]
            support, sup_labels, bary_plans, _ = _fixed_point(
                feats=batch_feats,
                labels=batch_labels,
                weights=alpha,
                n_support=size,
                beta=beta,
                max_iter=bary_max_iter,
                tol=bary_tol,
                rng=rng,
                init_features=warm_feats,
                init_labels=warm_labels,
            )
            warm_feats, warm_labels = support, sup_labels

            batch_data = LabeledMeasure.unchecked(
                data.features[data_idx],
                data.labels[data_idx] if labeled else None,
            )
            cost = _data_cost(support, sup_labels, batch_data, beta)
            plans = FrozenPlans(bary_plans=bary_plans, data_plan=solve_exact_ot(cost))
            grads = frozen_gradients(batch_feats, batch_labels, alpha, plans, batch_data, beta)

            for k in range(k_atoms):
                feats[k][idx[k]] -= eta * grads.atom_features[k]
                labels[k][idx[k]] -= eta * grads.atom_labels[k]
                if project_labels:
                    labels[k][idx[k]] = project_rows_to_simplex(labels[k][idx[k]])
            alpha = simplex_project(alpha - eta_alpha * grads.alpha)

    if not project_labels:
        labels = [project_rows_to_simplex(y) for y in labels]
    client.alpha = alpha
    updated = Dictionary(tuple(LabeledMeasure(f, y) for f, y in zip(feats, labels)))
    client.local_dictionary = updated
    return updated


def atom_combine(a: Dictionary, b: Dictionary, coef: float) -> Dictionary:
    """Per-row support combination ``a + coef * b`` of two dictionaries.

    The combination acts on features and labels alike and deliberately
    skips label re-projection: it is the primitive under server
    averaging and interpolation, whose intermediates may leave the
    simplex.
    """
    if a.n_atoms != b.n_atoms or a.n_points != b.n_points or a.dim != b.dim or a.n_classes != b.n_classes:
        raise ValueError("dictionaries must share (K, n, d, n_c)")
    atoms = tuple(
        LabeledMeasure.unchecked(
            pa.features + coef * pb.features,
            pa.labels + coef * pb.labels,
        )
        for pa, pb in zip(a.atoms, b.atoms)
    )
    return Dictionary(atoms)


def dictionary_blend(a: Dictionary, b: Dictionary, t: float) -> Dictionary:
    """Convex combination ``(1 - t) * a + t * b`` of two dictionaries."""
    if a.n_atoms != b.n_atoms or a.n_points != b.n_points or a.dim != b.dim or a.n_classes != b.n_classes:
        raise ValueError("dictionaries must share (K, n, d, n_c)")
    atoms = tuple(
        LabeledMeasure.unchecked(
            (1.0 - t) * pa.features + t * pb.features,
            (1.0 - t) * pa.labels + t * pb.labels,
        )
        for pa, pb in zip(a.atoms, b.atoms)
    )
    return Dictionary(atoms)


def interpolate_loss_curve(a: Dictionary, b: Dictionary, clients, ts, beta: float, **bary_options):
    """Global loss along the segment between two dictionary versions.

    Returns a list of ``(t, loss)`` pairs for ``t`` in ``ts``; every
    ``t`` must lie in ``[0, 1]``.
    """
    ts = [float(t) for t in ts]
    if any(t < 0.0 or t > 1.0 for t in ts):
        raise ValueError("interpolation points must lie in [0, 1]")
    curve = []
    for t in ts:
        blend = dictionary_blend(a, b, t)
        report = global_loss(clients, blend, beta, **bary_options)
        curve.append((t, report.value))
    return curve


def theorem_probe(dictionary: Dictionary, clients, eps: np.ndarray, beta: float, **bary_options):
    """Quadratic-expansion identity check under a uniform support shift.

    With all plans frozen, shifting every atom feature row by ``eps``
    shifts every barycenter support point by ``eps`` too, so the
    objective satisfies exactly

        ``loss(shifted) = loss + 2 * eps . g + ||eps||^2``

    where ``g`` averages, over clients, the data-plan-weighted
    differences between barycenter and data points.  Returns
    ``(lhs, rhs, residual)`` with ``lhs`` recomputed directly from the
    shifted supports.
    """
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != (dictionary.dim,):
        raise ValueError(f"eps must have shape ({dictionary.dim},)")
    clients = list(clients)
    if not clients:
        raise ValueError("need at least one client")

    atom_feats = [a.features for a in dictionary.atoms]
    atom_labels = [a.labels for a in dictionary.atoms]
    base_total = 0.0
    lhs_total = 0.0
    g_total = np.zeros(dictionary.dim)
    for client in clients:
        plans = compute_frozen_plans(client, dictionary, beta, **bary_options)
        base_total += frozen_objective(atom_feats, atom_labels, client.alpha, plans, client.data, beta)
        lhs_total += frozen_objective(
            atom_feats, atom_labels, client.alpha, plans, client.data, beta, feature_shift=eps
        )
        feats, _ = _composite_support(
            atom_feats, atom_labels, client.alpha, plans.bary_plans, with_labels=False
        )
        pi = plans.data_plan
        g_total += pi.sum(axis=1) @ feats - pi.sum(axis=0) @ client.data.features

    n_clients = len(clients)
    lhs = lhs_total / n_clients
    base = base_total / n_clients
    g = g_total / n_clients
    rhs = base + 2.0 * float(eps @ g) + float(eps @ eps)
    return lhs, rhs, abs(lhs - rhs)
