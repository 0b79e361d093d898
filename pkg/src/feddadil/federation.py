"""Federated round loop, wire format, transcript and cost accounting.

The server owns the global dictionary: each round it ships it to every
client, collects the locally updated versions and averages them
support-wise.  Clients' barycentric coordinates never appear in any
message; the wire format has no field for them, which is the privacy
guarantee of the whole construction.

Dictionary payloads are byte-exact: a fixed header followed by
little-endian 32-bit floats, so transports can be swapped without
touching the protocol logic.  The transcript records every message and
underpins the communication accounting and the privacy audit.
"""

from __future__ import annotations

import hashlib
import json
import struct
from collections import deque
from dataclasses import dataclass, field, fields

import numpy as np

from .classifier import SoftmaxClassifier, sgd_epoch, zero_classifier
from .dictionary import ClientState, Dictionary, client_update, global_loss
from .ot import LabeledMeasure, project_rows_to_simplex
from .seeding import derive_seed, substream

DICTIONARY_MAGIC = b"FDDL"
WIRE_VERSION = 1
_HEADER = "<4sHHIII"
_HEADER_SIZE = struct.calcsize(_HEADER)

SERVER_TO_CLIENT = "server_to_client"
CLIENT_TO_SERVER = "client_to_server"
_DIRECTIONS = (SERVER_TO_CLIENT, CLIENT_TO_SERVER)
_PAYLOAD_KINDS = ("dictionary", "model_weights")

#: alias used by the federated-averaging baseline
LinearClassifier = SoftmaxClassifier


def encode_dictionary(dictionary: Dictionary) -> bytes:
    """Serialize a dictionary to its wire format.

    Header ``{magic, version, K, n, d, n_c}`` followed by ``K`` blocks
    of ``n * d`` feature scalars then ``n * n_c`` label scalars,
    little-endian 32-bit floats, row-major.  There is no coordinate
    field.
    """
    header = struct.pack(
        _HEADER,
        DICTIONARY_MAGIC,
        WIRE_VERSION,
        dictionary.n_atoms,
        dictionary.n_points,
        dictionary.dim,
        dictionary.n_classes,
    )
    blocks = [header]
    for atom in dictionary.atoms:
        blocks.append(atom.features.astype("<f4").tobytes())
        blocks.append(atom.labels.astype("<f4").tobytes())
    return b"".join(blocks)


def decode_dictionary(blob: bytes) -> Dictionary:
    """Parse a dictionary payload.

    Label rows are re-projected onto the simplex to undo the 32-bit
    rounding incurred on the wire, so decoded dictionaries satisfy the
    same invariants as freshly built ones.
    """
    if len(blob) < _HEADER_SIZE:
        raise ValueError("dictionary blob too short for its header")
    magic, version, k_atoms, n, d, n_c = struct.unpack_from(_HEADER, blob)
    if magic != DICTIONARY_MAGIC:
        raise ValueError(f"bad dictionary magic {magic!r}")
    if version != WIRE_VERSION:
        raise ValueError(f"unsupported wire version {version}")
    expected = _HEADER_SIZE + 4 * k_atoms * n * (d + n_c)
    if len(blob) != expected:
        raise ValueError(f"dictionary blob length {len(blob)} does not match header ({expected})")
    scalars = np.frombuffer(blob, dtype="<f4", offset=_HEADER_SIZE).astype(np.float64)
    atoms = []
    per_atom = n * (d + n_c)
    for k in range(k_atoms):
        block = scalars[k * per_atom : (k + 1) * per_atom]
        feats = block[: n * d].reshape(n, d)
        labels = project_rows_to_simplex(block[n * d :].reshape(n, n_c))
        atoms.append(LabeledMeasure(feats, labels))
    return Dictionary(tuple(atoms))


def payload_scalar_bytes(dictionary: Dictionary) -> int:
    """Bytes of the scalar block of a dictionary payload (header excluded)."""
    return 4 * dictionary.n_atoms * dictionary.n_points * (dictionary.dim + dictionary.n_classes)


@dataclass(eq=False)
class Message:
    """One transmission between the server and a client.

    ``payload_bytes`` counts the scalar block only (the fixed header is
    protocol overhead, not model content), matching the parameter-count
    accounting.  The schema deliberately has no field for barycentric
    coordinates.
    """

    direction: str
    round: int
    client_id: int
    payload_kind: str
    payload: bytes
    payload_bytes: int

    def __post_init__(self):
        if self.direction not in _DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.payload_kind not in _PAYLOAD_KINDS:
            raise ValueError(f"unknown payload kind {self.payload_kind!r}")

    @property
    def content_hash(self) -> str:
        return hashlib.sha256(self.payload).hexdigest()


@dataclass(eq=False)
class RoundTranscript:
    """Ordered log of every message exchanged during a run."""

    messages: list = field(default_factory=list)

    def record(self, message: Message) -> None:
        self.messages.append(message)

    def round_payload_bytes(self) -> dict[int, int]:
        totals: dict[int, int] = {}
        for msg in self.messages:
            totals[msg.round] = totals.get(msg.round, 0) + msg.payload_bytes
        return totals

    def to_jsonl(self) -> str:
        lines = []
        for msg in self.messages:
            lines.append(
                json.dumps(
                    {
                        "direction": msg.direction,
                        "round": msg.round,
                        "client_id": msg.client_id,
                        "payload_kind": msg.payload_kind,
                        "payload_bytes": msg.payload_bytes,
                        "sha256": msg.content_hash,
                    },
                    sort_keys=True,
                )
            )
        return "\n".join(lines) + ("\n" if lines else "")

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())


def message_schema_fields() -> tuple[str, ...]:
    """Field names of the message schema (for privacy audits)."""
    return tuple(f.name for f in fields(Message))


class InMemoryTransport:
    """Default transport: a FIFO queue of messages within one process."""

    def __init__(self):
        self._queue: deque[Message] = deque()

    def send(self, message: Message) -> None:
        self._queue.append(message)

    def receive(self) -> Message:
        if not self._queue:
            raise RuntimeError("transport queue is empty")
        return self._queue.popleft()


def initialize_dictionary(
    n_atoms: int,
    n_points: int,
    dim: int,
    n_classes: int,
    seed: int = 0,
    scale: float = 1.0,
    center_spread: float = 0.0,
) -> Dictionary:
    """Server-side atom initialization without access to any client data.

    Features are i.i.d. centered normal with the given scale; labels are
    balanced one-hot blocks, ``n // n_c`` rows per class with the
    remainder assigned to the last class.  ``center_spread`` places the
    atom centers equally spaced on a random line through the origin:
    identically centered atoms make the coordinate gradients nearly
    equal across atoms, a saddle the optimization escapes only slowly,
    so straddling centers matter for atom specialization.
    """
    if min(n_atoms, n_points, dim, n_classes) < 1:
        raise ValueError("all dictionary dimensions must be positive")
    counts = [n_points // n_classes] * n_classes
    counts[-1] += n_points - sum(counts)
    labels = np.zeros((n_points, n_classes))
    row = 0
    for cls, count in enumerate(counts):
        labels[row : row + count, cls] = 1.0
        row += count
    rng = substream(seed, "atom-init")
    offsets = np.zeros(n_atoms)
    if n_atoms > 1 and center_spread > 0:
        offsets = center_spread * (2.0 * np.arange(n_atoms) / (n_atoms - 1) - 1.0)
    axis = rng.standard_normal(dim)
    axis /= np.linalg.norm(axis)
    atoms = []
    for k in range(n_atoms):
        cloud = scale * rng.standard_normal((n_points, dim))
        atoms.append(LabeledMeasure(offsets[k] * axis + cloud, labels))
    return Dictionary(tuple(atoms))


def server_aggregate(versions) -> Dictionary:
    """Support-wise arithmetic mean of client dictionary versions."""
    versions = list(versions)
    if not versions:
        raise ValueError("need at least one dictionary version")
    first = versions[0]
    for v in versions[1:]:
        if (
            v.n_atoms != first.n_atoms
            or v.n_points != first.n_points
            or v.dim != first.dim
            or v.n_classes != first.n_classes
        ):
            raise ValueError("all versions must share (K, n, d, n_c)")
    n_versions = len(versions)
    atoms = []
    for k in range(first.n_atoms):
        feats = sum(v.atoms[k].features for v in versions) / n_versions
        labels = sum(v.atoms[k].labels for v in versions) / n_versions
        atoms.append(LabeledMeasure.unchecked(feats, labels))
    return Dictionary(tuple(atoms))


def run_feddadil(
    clients,
    rounds: int,
    epochs: int,
    batch_size: int,
    eta: float,
    beta: float,
    n_atoms: int,
    atom_size: int,
    seed: int = 0,
    transport: InMemoryTransport | None = None,
    eta_alpha: float | None = None,
    init_scale: float = 1.0,
    init_center_spread: float = 0.0,
    bary_max_iter: int = 50,
    bary_tol: float = 1e-5,
    record_history: bool = True,
):
    """Federated dictionary learning over full-participation rounds.

    Clients 1..N-1 must be labeled and client N unlabeled (the target).
    Per round, the server ships the global dictionary to every client,
    each client runs its local update (mutating its private coordinates
    in place), and the server averages the returned versions.  Returns
    ``(final_dictionary, history, transcript)`` where ``history`` holds
    one global-loss report per round.
    """
    clients = list(clients)
    if len(clients) < 2:
        raise ValueError("need at least two clients (sources plus target)")
    if clients[-1].data.labels is not None:
        raise ValueError("the last client is the target and must be unlabeled")
    for c in clients[:-1]:
        if c.data.labels is None:
            raise ValueError(f"source client {c.client_id} must be labeled")
    dim = clients[0].data.dim
    if any(c.data.dim != dim for c in clients):
        raise ValueError("all clients must share the feature dimension")
    n_classes = clients[0].data.n_classes
    if any(c.data.n_classes != n_classes for c in clients[:-1]):
        raise ValueError("all labeled clients must share the class count")

    for c in clients:
        c.alpha = np.full(n_atoms, 1.0 / n_atoms)

    global_dict = initialize_dictionary(
        n_atoms, atom_size, dim, n_classes, seed=seed, scale=init_scale,
        center_spread=init_center_spread,
    )
    transport = transport if transport is not None else InMemoryTransport()
    transcript = RoundTranscript()
    history = []

    for rnd in range(1, rounds + 1):
        versions = []
        for client in clients:
            down = encode_dictionary(global_dict)
            transport.send(
                Message(
                    direction=SERVER_TO_CLIENT,
                    round=rnd,
                    client_id=client.client_id,
                    payload_kind="dictionary",
                    payload=down,
                    payload_bytes=payload_scalar_bytes(global_dict),
                )
            )
            delivered = transport.receive()
            transcript.record(delivered)
            local = decode_dictionary(delivered.payload)

            updated = client_update(
                client,
                local,
                epochs=epochs,
                batch_size=batch_size,
                eta=eta,
                beta=beta,
                seed=derive_seed(seed, "client-update", rnd, client.client_id),
                eta_alpha=eta_alpha,
                bary_max_iter=bary_max_iter,
                bary_tol=bary_tol,
            )

            up = encode_dictionary(updated)
            transport.send(
                Message(
                    direction=CLIENT_TO_SERVER,
                    round=rnd,
                    client_id=client.client_id,
                    payload_kind="dictionary",
                    payload=up,
                    payload_bytes=payload_scalar_bytes(updated),
                )
            )
            delivered = transport.receive()
            transcript.record(delivered)
            versions.append(decode_dictionary(delivered.payload))

        global_dict = server_aggregate(versions)
        if record_history:
            history.append(
                global_loss(
                    clients,
                    global_dict,
                    beta,
                    max_iter=bary_max_iter,
                    tol=bary_tol,
                    seed=derive_seed(seed, "loss", rnd),
                )
            )

    return global_dict, history, transcript


def fedavg_classifier(
    clients,
    rounds: int,
    epochs: int,
    batch_size: int,
    eta: float,
    seed: int = 0,
) -> LinearClassifier:
    """Federated averaging of a softmax linear classifier on features.

    All provided clients must be labeled (the target stays out).  Every
    round starts from the shared global parameters, runs ``epochs``
    local mini-batch passes per client, and averages the resulting
    weights without sample-count weighting.
    """
    clients = list(clients)
    if not clients:
        raise ValueError("need at least one labeled client")
    for c in clients:
        if c.data.labels is None:
            raise ValueError(f"client {c.client_id} is unlabeled; the target stays out")
    n_classes = clients[0].data.n_classes
    dim = clients[0].data.dim
    model = zero_classifier(n_classes, dim)
    for rnd in range(rounds):
        local_weights = []
        local_biases = []
        for client in clients:
            local = model.copy()
            rng = substream(seed, "fedavg", rnd, client.client_id)
            for _ in range(epochs):
                sgd_epoch(local, client.data.features, client.data.labels, eta, batch_size, rng)
            local_weights.append(local.weights)
            local_biases.append(local.bias)
        model = SoftmaxClassifier(
            sum(local_weights) / len(clients), sum(local_biases) / len(clients)
        )
    return model


def communication_cost(n_atoms: int, n_points: int, dim: int, n_classes: int) -> int:
    """Scalar count of one dictionary payload: ``K * n * (d + n_c)``."""
    if min(n_atoms, n_points, dim, n_classes) < 1:
        raise ValueError("all dimensions must be positive integers")
    return int(n_atoms) * int(n_points) * (int(dim) + int(n_classes))


def communication_bits(
    n_atoms: int, n_points: int, dim: int, n_classes: int, precision_bits: int = 32
) -> int:
    """Bits to transmit one dictionary payload at the given float precision."""
    return communication_cost(n_atoms, n_points, dim, n_classes) * int(precision_bits)


def communication_ratio(
    n_atoms: int, n_points: int, dim: int, n_classes: int, reference_parameters: int
) -> float:
    """Dictionary parameter count relative to a reference model's."""
    if reference_parameters <= 0:
        raise ValueError("reference parameter count must be positive")
    return communication_cost(n_atoms, n_points, dim, n_classes) / float(reference_parameters)
