"""Federated dictionary learning over empirical distributions.

Clients express their data distributions as Wasserstein barycenters of
shared labeled atoms under private simplex coordinates; the atoms are
learned federally and the target domain builds its classifier from the
reconstruction or from an ensemble of per-atom classifiers.
"""

from .adaptation import (
    Ensemble,
    build_ensemble,
    distill,
    ensemble_predict,
    evaluate_accuracy,
    mean_label_entropy,
    reconstruct_target,
    train_erm,
)
from .barycenter import BarycenterResult, barycenter_operator, free_support_barycenter
from .classifier import SoftmaxClassifier
from .datasets import (
    Benchmark,
    DomainSpec,
    default_benchmark,
    default_domain_specs,
    generate_benchmark,
    load_features,
    save_features,
)
from .dictionary import (
    ClientState,
    Dictionary,
    LossReport,
    atom_combine,
    client_update,
    global_loss,
    interpolate_loss_curve,
    local_loss,
    loss_gradients,
    theorem_probe,
)
from .experiments import (
    ExperimentConfig,
    clients_from_benchmark,
    distillation_sweep,
    interpolation_curve,
    parallelism_sweep,
    run_experiment,
)
from .federation import (
    InMemoryTransport,
    LinearClassifier,
    Message,
    RoundTranscript,
    communication_bits,
    communication_cost,
    communication_ratio,
    decode_dictionary,
    encode_dictionary,
    fedavg_classifier,
    initialize_dictionary,
    run_feddadil,
    server_aggregate,
)
from .ot import (
    LabeledMeasure,
    barycentric_projection,
    feature_cost,
    label_aware_cost,
    simplex_project,
    solve_exact_ot,
    squared_w2,
    transport_cost,
)

__version__ = "0.1.0"

__all__ = [
    "BarycenterResult",
    "Benchmark",
    "ClientState",
    "Dictionary",
    "DomainSpec",
    "Ensemble",
    "ExperimentConfig",
    "InMemoryTransport",
    "LabeledMeasure",
    "LinearClassifier",
    "LossReport",
    "Message",
    "RoundTranscript",
    "SoftmaxClassifier",
    "atom_combine",
    "barycenter_operator",
    "barycentric_projection",
    "build_ensemble",
    "client_update",
    "clients_from_benchmark",
    "communication_bits",
    "communication_cost",
    "communication_ratio",
    "decode_dictionary",
    "default_benchmark",
    "default_domain_specs",
    "distill",
    "distillation_sweep",
    "encode_dictionary",
    "ensemble_predict",
    "evaluate_accuracy",
    "fedavg_classifier",
    "feature_cost",
    "free_support_barycenter",
    "generate_benchmark",
    "global_loss",
    "initialize_dictionary",
    "interpolate_loss_curve",
    "interpolation_curve",
    "label_aware_cost",
    "load_features",
    "local_loss",
    "loss_gradients",
    "mean_label_entropy",
    "parallelism_sweep",
    "reconstruct_target",
    "run_experiment",
    "run_feddadil",
    "save_features",
    "server_aggregate",
    "simplex_project",
    "solve_exact_ot",
    "squared_w2",
    "train_erm",
    "transport_cost",
]
