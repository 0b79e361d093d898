"""End-to-end experiment drivers over a benchmark.

Glue between the benchmark, the federated round loop, the two
adaptation routes and the baseline: one configuration object, one
deterministic run, JSON-ready results.  All randomness flows from the
configured root seed through named substreams, so a sweep varies
exactly one axis.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from .adaptation import (
    build_ensemble,
    distill,
    evaluate_accuracy,
    mean_label_entropy,
    reconstruct_target,
    train_erm,
)
from .datasets import Benchmark, default_benchmark
from .dictionary import ClientState, client_update, interpolate_loss_curve
from .federation import (
    communication_bits,
    communication_cost,
    communication_ratio,
    fedavg_classifier,
    initialize_dictionary,
    run_feddadil,
)
from .seeding import derive_seed

_MODES = ("R", "E", "both")


@dataclass
class ExperimentConfig:
    """Every knob of one experiment; JSON-serializable and hashable.

    ``benchmark`` is either the literal ``"synthetic"`` (desk-scale
    default domains) or a path to a manifest written by the generate
    command.
    """

    benchmark: str = "synthetic"
    seed: int = 0
    n_atoms: int = 3
    atom_size: int = 150
    batch_size: int = 50
    rounds: int = 20
    epochs: int = 5
    eta: float = 5.0
    eta_alpha: float = 0.05
    beta: float = 2.0
    init_scale: float = 1.0
    init_center_spread: float = 2.0
    bary_max_iter: int = 50
    bary_tol: float = 1e-5
    mode: str = "both"
    fedavg: bool = True
    fedavg_rounds: int = 100
    fedavg_epochs: int = 1
    fedavg_batch: int = 32
    fedavg_eta: float = 0.5
    erm_epochs: int = 150
    erm_eta: float = 1.0
    reference_params: int = 25_600_000
    record_history: bool = True
    output_dir: str = "results"

    def validate(self) -> list[str]:
        """Collect every configuration error at once."""
        errors = []
        for name in ("n_atoms", "atom_size", "batch_size"):
            if getattr(self, name) < 1:
                errors.append(f"{name} must be a positive integer")
        for name in ("rounds", "epochs", "fedavg_rounds", "fedavg_epochs", "erm_epochs"):
            if getattr(self, name) < 0:
                errors.append(f"{name} must be nonnegative")
        if self.batch_size > self.atom_size:
            errors.append("batch_size cannot exceed atom_size")
        for name in ("eta", "eta_alpha", "fedavg_eta", "erm_eta"):
            if getattr(self, name) < 0:
                errors.append(f"{name} must be nonnegative")
        if self.beta <= 0:
            errors.append("beta must be positive")
        if self.init_scale <= 0:
            errors.append("init_scale must be positive")
        if self.init_center_spread < 0:
            errors.append("init_center_spread must be nonnegative")
        if self.fedavg_batch < 1:
            errors.append("fedavg_batch must be a positive integer")
        if self.bary_max_iter < 1:
            errors.append("bary_max_iter must be a positive integer")
        if self.bary_tol <= 0:
            errors.append("bary_tol must be positive")
        if self.mode not in _MODES:
            errors.append(f"mode must be one of {_MODES}")
        if self.reference_params < 1:
            errors.append("reference_params must be a positive integer")
        return errors

    def config_hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


def clients_from_benchmark(benchmark: Benchmark, n_atoms: int) -> list[ClientState]:
    """Client states in protocol order: sources first, target last.

    Client ids keep the benchmark's domain indices; coordinates start
    uniform on the simplex.
    """
    uniform = np.full(n_atoms, 1.0 / n_atoms)
    clients = [
        ClientState(client_id=i, data=m, alpha=uniform.copy())
        for i, m in enumerate(benchmark.measures)
        if i != benchmark.target_index
    ]
    clients.append(
        ClientState(
            client_id=benchmark.target_index, data=benchmark.target, alpha=uniform.copy()
        )
    )
    return clients


def run_experiment(benchmark: Benchmark, config: ExperimentConfig):
    """Full pipeline: federated dictionary, both adaptations, baseline.

    Returns ``(results, artifacts)``: ``results`` is JSON-ready;
    ``artifacts`` carries the in-memory objects (final dictionary,
    clients, transcript, classifiers) for further analysis.
    """
    clients = clients_from_benchmark(benchmark, config.n_atoms)
    final, history, transcript = run_feddadil(
        clients,
        rounds=config.rounds,
        epochs=config.epochs,
        batch_size=config.batch_size,
        eta=config.eta,
        beta=config.beta,
        n_atoms=config.n_atoms,
        atom_size=config.atom_size,
        seed=config.seed,
        eta_alpha=config.eta_alpha,
        init_scale=config.init_scale,
        init_center_spread=config.init_center_spread,
        bary_max_iter=config.bary_max_iter,
        bary_tol=config.bary_tol,
        record_history=config.record_history,
    )

    target_eval = benchmark.target_evaluation_measure()
    target_alpha = clients[-1].alpha
    artifacts = {
        "dictionary": final,
        "clients": clients,
        "transcript": transcript,
        "target_alpha": target_alpha,
    }

    dadil_r_acc = None
    dadil_e_acc = None
    trained = config.rounds > 0
    if trained and config.mode in ("R", "both"):
        surrogate = reconstruct_target(
            final,
            target_alpha,
            beta=config.beta,
            max_iter=config.bary_max_iter,
            tol=config.bary_tol,
            seed=derive_seed(config.seed, "reconstruct"),
        )
        clf_r = train_erm(
            surrogate,
            epochs=config.erm_epochs,
            eta=config.erm_eta,
            seed=derive_seed(config.seed, "erm-r"),
        )
        dadil_r_acc = evaluate_accuracy(clf_r, target_eval)
        artifacts["classifier_r"] = clf_r
        artifacts["surrogate"] = surrogate
    if trained and config.mode in ("E", "both"):
        ensemble = build_ensemble(
            final,
            target_alpha,
            epochs=config.erm_epochs,
            eta=config.erm_eta,
            seed=derive_seed(config.seed, "erm-e"),
        )
        dadil_e_acc = evaluate_accuracy(ensemble, target_eval)
        artifacts["ensemble"] = ensemble

    fedavg_acc = None
    if config.fedavg:
        baseline = fedavg_classifier(
            clients[:-1],
            rounds=config.fedavg_rounds,
            epochs=config.fedavg_epochs,
            batch_size=config.fedavg_batch,
            eta=config.fedavg_eta,
            seed=derive_seed(config.seed, "fedavg"),
        )
        fedavg_acc = evaluate_accuracy(baseline, target_eval)
        artifacts["baseline"] = baseline

    n_clients = len(clients)
    params = communication_cost(
        config.n_atoms, config.atom_size, benchmark.target.dim, final.n_classes
    )
    per_round = transcript.round_payload_bytes()
    results = {
        "config": asdict(config),
        "config_hash": config.config_hash(),
        "n_clients": n_clients,
        "per_round_loss": [report.value for report in history],
        "per_client_loss_final": history[-1].per_client.tolist() if history else None,
        "dadil_r_acc": dadil_r_acc,
        "dadil_e_acc": dadil_e_acc,
        "fedavg_acc": fedavg_acc,
        "communication": {
            "parameters_per_message": params,
            "bits_per_message": communication_bits(
                config.n_atoms, config.atom_size, benchmark.target.dim, final.n_classes
            ),
            "bytes_per_round": 2 * n_clients * params * 4,
            "total_payload_bytes": sum(per_round.values()),
            "reference_params": config.reference_params,
            "ratio_vs_reference": communication_ratio(
                config.n_atoms,
                config.atom_size,
                benchmark.target.dim,
                final.n_classes,
                config.reference_params,
            ),
        },
        "transcript_summary": {
            "n_messages": len(transcript.messages),
            "per_round_payload_bytes": [per_round[r] for r in sorted(per_round)],
        },
    }
    return results, artifacts


def parallelism_sweep(benchmark: Benchmark, epoch_values, config: ExperimentConfig):
    """Adaptation accuracy as a function of local epochs per round.

    One row per requested value, everything else fixed; identical
    values yield identical rows under the same seed.
    """
    rows = []
    for epochs in epoch_values:
        cell = replace(config, epochs=int(epochs), record_history=False)
        start = time.perf_counter()
        results, _ = run_experiment(benchmark, cell)
        rows.append(
            {
                "epochs": int(epochs),
                "dadil_r_acc": results["dadil_r_acc"],
                "dadil_e_acc": results["dadil_e_acc"],
                "fedavg_acc": results["fedavg_acc"],
                "wall_time_s": time.perf_counter() - start,
            }
        )
    return rows


def distillation_sweep(benchmark: Benchmark, spc_values, config: ExperimentConfig):
    """Distilled-summary quality as a function of support points per class.

    Trains the dictionary once, then per value reconstructs a summary
    of ``n_classes * spc`` points, reports its mean label entropy and
    the target accuracy of a classifier trained on it.
    """
    spc_values = [int(s) for s in spc_values]
    if any(s < 1 for s in spc_values):
        raise ValueError("spc values must be positive")
    _, artifacts = run_experiment(
        benchmark, replace(config, mode="R", fedavg=False, record_history=False)
    )
    final = artifacts["dictionary"]
    target_alpha = artifacts["target_alpha"]
    target_eval = benchmark.target_evaluation_measure()
    rows = []
    for spc in spc_values:
        summary = distill(
            final,
            target_alpha,
            spc,
            beta=config.beta,
            max_iter=config.bary_max_iter,
            tol=config.bary_tol,
            seed=derive_seed(config.seed, "distill", spc),
        )
        clf = train_erm(
            summary,
            epochs=config.erm_epochs,
            eta=config.erm_eta,
            seed=derive_seed(config.seed, "erm-distill", spc),
        )
        rows.append(
            {
                "spc": spc,
                "summary_size": summary.n,
                "mean_label_entropy": mean_label_entropy(summary),
                "accuracy": evaluate_accuracy(clf, target_eval),
            }
        )
    return rows


def shared_init_versions(benchmark: Benchmark, config: ExperimentConfig, client_a: int = 0, client_b: int = 1):
    """Two local dictionary versions trained from one shared initialization.

    Feeds the interpolation analysis: clients ``a`` and ``b`` each run
    one local update pass on the same freshly initialized dictionary.
    """
    clients = clients_from_benchmark(benchmark, config.n_atoms)
    n_classes = clients[0].data.n_classes
    shared = initialize_dictionary(
        config.n_atoms,
        config.atom_size,
        benchmark.target.dim,
        n_classes,
        seed=config.seed,
        scale=config.init_scale,
        center_spread=config.init_center_spread,
    )
    versions = []
    for idx in (client_a, client_b):
        version = client_update(
            clients[idx],
            shared,
            epochs=config.epochs,
            batch_size=config.batch_size,
            eta=config.eta,
            beta=config.beta,
            seed=derive_seed(config.seed, "shared-init", idx),
            eta_alpha=config.eta_alpha,
            bary_max_iter=config.bary_max_iter,
            bary_tol=config.bary_tol,
        )
        versions.append(version)
    return versions[0], versions[1], clients


def interpolation_curve(benchmark: Benchmark, config: ExperimentConfig, ts):
    """Global loss along the segment between two shared-init versions."""
    version_a, version_b, clients = shared_init_versions(benchmark, config)
    return interpolate_loss_curve(
        version_a,
        version_b,
        clients,
        ts,
        config.beta,
        max_iter=config.bary_max_iter,
        tol=config.bary_tol,
        seed=derive_seed(config.seed, "interp-loss"),
    )
