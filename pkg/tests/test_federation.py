import dataclasses
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from feddadil.classifier import SoftmaxClassifier, cross_entropy
from feddadil.dictionary import ClientState, Dictionary
from feddadil.federation import (
    InMemoryTransport,
    Message,
    RoundTranscript,
    communication_bits,
    communication_cost,
    communication_ratio,
    decode_dictionary,
    encode_dictionary,
    fedavg_classifier,
    initialize_dictionary,
    message_schema_fields,
    payload_scalar_bytes,
    run_feddadil,
    server_aggregate,
)
from feddadil.ot import LabeledMeasure


def one_hot(indices, n_classes):
    labels = np.zeros((len(indices), n_classes))
    labels[np.arange(len(indices)), indices] = 1.0
    return labels


def f32_dictionary(rng, k, n, d, n_classes):
    """Random dictionary whose scalars are exactly float32-representable."""
    atoms = []
    for _ in range(k):
        feats = rng.standard_normal((n, d)).astype(np.float32).astype(np.float64)
        labels = one_hot(rng.integers(0, n_classes, size=n), n_classes)
        atoms.append(LabeledMeasure(feats, labels))
    return Dictionary(tuple(atoms))


def small_clients(rng, n_sources=2, n=12, d=2, n_classes=2):
    clients = []
    for i in range(n_sources):
        feats = rng.standard_normal((n, d)) + i
        labels = one_hot(rng.integers(0, n_classes, size=n), n_classes)
        clients.append(
            ClientState(client_id=i, data=LabeledMeasure(feats, labels), alpha=np.array([1.0]))
        )
    target_feats = rng.standard_normal((n, d)) + n_sources
    clients.append(
        ClientState(
            client_id=n_sources, data=LabeledMeasure(target_feats), alpha=np.array([1.0])
        )
    )
    return clients


class TestWireFormat:
    def test_round_trip_exact_for_f32_values(self):
        rng = np.random.default_rng(0)
        dictionary = f32_dictionary(rng, 2, 5, 3, 2)
        decoded = decode_dictionary(encode_dictionary(dictionary))
        for a, b in zip(dictionary.atoms, decoded.atoms):
            assert np.array_equal(a.features, b.features)
            assert np.array_equal(a.labels, b.labels)

    def test_header_layout(self):
        rng = np.random.default_rng(1)
        dictionary = f32_dictionary(rng, 3, 4, 2, 2)
        blob = encode_dictionary(dictionary)
        assert blob[:4] == b"FDDL"
        assert len(blob) == 20 + 4 * 3 * 4 * (2 + 2)
        assert payload_scalar_bytes(dictionary) == 4 * 3 * 4 * (2 + 2)

    def test_decode_rejects_bad_magic(self):
        rng = np.random.default_rng(2)
        blob = bytearray(encode_dictionary(f32_dictionary(rng, 1, 2, 2, 2)))
        blob[:4] = b"XXXX"
        with pytest.raises(ValueError, match="magic"):
            decode_dictionary(bytes(blob))

    def test_decode_rejects_truncation(self):
        rng = np.random.default_rng(3)
        blob = encode_dictionary(f32_dictionary(rng, 1, 2, 2, 2))
        with pytest.raises(ValueError, match="length"):
            decode_dictionary(blob[:-4])

    def test_decoded_labels_back_on_simplex(self):
        # soft labels suffer float32 rounding on the wire; decoding must restore them
        feats = np.ones((2, 2))
        labels = np.array([[1 / 3, 2 / 3], [0.1, 0.9]])
        dictionary = Dictionary(
            (LabeledMeasure(feats, labels), )
        )
        decoded = decode_dictionary(encode_dictionary(dictionary))
        sums = decoded.atoms[0].labels.sum(axis=1)
        assert_allclose(sums, 1.0, atol=1e-12)


class TestMessageAndTranscript:
    def test_schema_has_no_coordinate_field(self):
        names = message_schema_fields()
        assert not any("alpha" in n or "coordinate" in n for n in names)
        assert set(names) == {
            "direction",
            "round",
            "client_id",
            "payload_kind",
            "payload",
            "payload_bytes",
        }

    def test_rejects_unknown_direction_or_kind(self):
        with pytest.raises(ValueError, match="direction"):
            Message("up", 1, 0, "dictionary", b"", 0)
        with pytest.raises(ValueError, match="payload kind"):
            Message("server_to_client", 1, 0, "weights", b"", 0)

    def test_jsonl_export(self):
        transcript = RoundTranscript()
        transcript.record(Message("server_to_client", 1, 0, "dictionary", b"abc", 3))
        transcript.record(Message("client_to_server", 1, 0, "dictionary", b"def", 3))
        lines = transcript.to_jsonl().strip().split("\n")
        assert len(lines) == 2
        first = json.loads(lines[0])
        assert first["round"] == 1
        assert first["payload_bytes"] == 3
        assert "payload" not in first
        assert len(first["sha256"]) == 64

    def test_transport_is_fifo(self):
        transport = InMemoryTransport()
        m1 = Message("server_to_client", 1, 0, "dictionary", b"a", 1)
        m2 = Message("server_to_client", 1, 1, "dictionary", b"b", 1)
        transport.send(m1)
        transport.send(m2)
        assert transport.receive() is m1
        assert transport.receive() is m2
        with pytest.raises(RuntimeError):
            transport.receive()


class TestServerAggregate:
    def test_identical_versions_unchanged(self):
        rng = np.random.default_rng(4)
        d = f32_dictionary(rng, 2, 4, 3, 2)
        agg = server_aggregate([d, d, d])
        for a, b in zip(d.atoms, agg.atoms):
            assert np.array_equal(a.features, b.features)
            assert np.array_equal(a.labels, b.labels)

    def test_opposite_supports_cancel(self):
        rng = np.random.default_rng(5)
        d = f32_dictionary(rng, 2, 4, 3, 2)
        neg = Dictionary(
            tuple(
                LabeledMeasure.unchecked(-a.features, a.labels) for a in d.atoms
            )
        )
        agg = server_aggregate([d, neg])
        for atom, orig in zip(agg.atoms, d.atoms):
            assert_allclose(atom.features, 0.0)
            assert np.array_equal(atom.labels, orig.labels)

    def test_three_versions_entrywise_mean(self):
        versions = []
        values = [(0.0, 1.0), (3.0, 0.5), (6.0, 0.25)]
        for v, p in values:
            versions.append(
                Dictionary(
                    (LabeledMeasure([[v]], [[p, 1.0 - p]]),)
                )
            )
        agg = server_aggregate(versions)
        assert_allclose(agg.atoms[0].features, [[3.0]])
        assert_allclose(agg.atoms[0].labels, [[(1.0 + 0.5 + 0.25) / 3, (0.0 + 0.5 + 0.75) / 3]])

    def test_empty_and_mismatched(self):
        rng = np.random.default_rng(6)
        with pytest.raises(ValueError, match="at least one"):
            server_aggregate([])
        with pytest.raises(ValueError, match="share"):
            server_aggregate([f32_dictionary(rng, 1, 2, 2, 2), f32_dictionary(rng, 2, 2, 2, 2)])


class TestInitializeDictionary:
    def test_balanced_label_blocks(self):
        d = initialize_dictionary(2, 7, 3, 3, seed=0)
        labels = d.atoms[0].labels
        counts = labels.sum(axis=0)
        # 7 samples over 3 classes: 2 + 2 + 3, remainder to the last class
        assert_allclose(counts, [2, 2, 3])

    def test_deterministic(self):
        a = initialize_dictionary(2, 5, 3, 2, seed=9)
        b = initialize_dictionary(2, 5, 3, 2, seed=9)
        for x, y in zip(a.atoms, b.atoms):
            assert np.array_equal(x.features, y.features)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            initialize_dictionary(0, 5, 3, 2)


class TestRunFedDadil:
    def test_zero_rounds_returns_initialization(self):
        rng = np.random.default_rng(7)
        clients = small_clients(rng)
        final, history, transcript = run_feddadil(
            clients, rounds=0, epochs=1, batch_size=4, eta=0.5, beta=1.0,
            n_atoms=2, atom_size=8, seed=0,
        )
        assert history == []
        assert transcript.messages == []
        reference = initialize_dictionary(2, 8, 2, 2, seed=0, scale=1.0)
        for a, b in zip(final.atoms, reference.atoms):
            assert np.array_equal(a.features, b.features)

    def test_zero_epochs_keeps_dictionary_fixed(self):
        rng = np.random.default_rng(8)
        clients = small_clients(rng)
        final, history, transcript = run_feddadil(
            clients, rounds=3, epochs=0, batch_size=4, eta=0.5, beta=1.0,
            n_atoms=2, atom_size=8, seed=1,
        )
        init = initialize_dictionary(2, 8, 2, 2, seed=1, scale=1.0)
        first_wire = decode_dictionary(encode_dictionary(init))
        for a, b in zip(final.atoms, first_wire.atoms):
            assert np.array_equal(a.features, b.features)
            assert np.array_equal(a.labels, b.labels)
        assert len(history) == 3

    def test_transcript_counts_and_bytes(self):
        rng = np.random.default_rng(9)
        clients = small_clients(rng)
        n_clients = len(clients)
        k, n = 2, 8
        final, history, transcript = run_feddadil(
            clients, rounds=2, epochs=1, batch_size=4, eta=0.2, beta=1.0,
            n_atoms=k, atom_size=n, seed=2,
        )
        assert len(transcript.messages) == 2 * n_clients * 2
        per_round = transcript.round_payload_bytes()
        d, n_c = 2, 2
        expected = 2 * n_clients * (k * n * (d + n_c)) * 4
        assert per_round == {1: expected, 2: expected}
        for rnd in (1, 2):
            downs = [
                m for m in transcript.messages
                if m.round == rnd and m.direction == "server_to_client"
            ]
            ups = [
                m for m in transcript.messages
                if m.round == rnd and m.direction == "client_to_server"
            ]
            assert len(downs) == n_clients and len(ups) == n_clients
            assert all(m.payload_kind == "dictionary" for m in downs + ups)

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(10)
        runs = []
        for _ in range(2):
            clients = small_clients(np.random.default_rng(10))
            runs.append(
                run_feddadil(
                    clients, rounds=2, epochs=1, batch_size=4, eta=0.3, beta=1.0,
                    n_atoms=2, atom_size=8, seed=3,
                )
            )
        (d1, h1, t1), (d2, h2, t2) = runs
        for a, b in zip(d1.atoms, d2.atoms):
            assert np.array_equal(a.features, b.features)
            assert np.array_equal(a.labels, b.labels)
        assert [r.value for r in h1] == [r.value for r in h2]
        assert t1.to_jsonl() == t2.to_jsonl()

    def test_alpha_never_serialized(self):
        rng = np.random.default_rng(11)
        clients = small_clients(rng)
        _, _, transcript = run_feddadil(
            clients, rounds=2, epochs=1, batch_size=4, eta=0.3, beta=1.0,
            n_atoms=3, atom_size=8, seed=4, eta_alpha=0.05,
        )
        for client in clients:
            needle = client.alpha.astype("<f4").tobytes()
            assert all(needle not in m.payload for m in transcript.messages)

    def test_rejects_bad_client_layout(self):
        rng = np.random.default_rng(12)
        clients = small_clients(rng)
        with pytest.raises(ValueError, match="at least two"):
            run_feddadil(
                clients[:1], rounds=1, epochs=1, batch_size=4, eta=0.1, beta=1.0,
                n_atoms=2, atom_size=8,
            )
        with pytest.raises(ValueError, match="unlabeled"):
            run_feddadil(
                clients[:2], rounds=1, epochs=1, batch_size=4, eta=0.1, beta=1.0,
                n_atoms=2, atom_size=8,
            )
        labeled_target = clients[:2] + [clients[0]]
        with pytest.raises(ValueError, match="unlabeled"):
            run_feddadil(
                labeled_target, rounds=1, epochs=1, batch_size=4, eta=0.1, beta=1.0,
                n_atoms=2, atom_size=8,
            )


class TestFedAvg:
    def separable_client(self, rng, client_id, n=40, gap=6.0):
        half = n // 2
        feats = np.concatenate(
            [rng.standard_normal((half, 2)), rng.standard_normal((n - half, 2)) + gap]
        )
        labels = one_hot(np.array([0] * half + [1] * (n - half)), 2)
        return ClientState(client_id=client_id, data=LabeledMeasure(feats, labels), alpha=np.array([1.0]))

    def test_single_client_single_round_equals_centralized(self):
        rng = np.random.default_rng(13)
        client = self.separable_client(rng, 0)
        model = fedavg_classifier([client], rounds=1, epochs=3, batch_size=None, eta=0.5, seed=0)
        from feddadil.classifier import sgd_epoch, zero_classifier
        from feddadil.seeding import substream

        central = zero_classifier(2, 2)
        central_rng = substream(0, "fedavg", 0, 0)
        for _ in range(3):
            sgd_epoch(central, client.data.features, client.data.labels, 0.5, None, central_rng)
        assert np.array_equal(model.weights, central.weights)
        assert np.array_equal(model.bias, central.bias)

    def test_identical_clients_average_to_local_result(self):
        rng = np.random.default_rng(14)
        c0 = self.separable_client(rng, 0)
        c1 = ClientState(client_id=1, data=c0.data, alpha=np.array([1.0]))
        joint = fedavg_classifier([c0, c1], rounds=2, epochs=2, batch_size=None, eta=0.3, seed=1)
        solo = fedavg_classifier([c0], rounds=2, epochs=2, batch_size=None, eta=0.3, seed=1)
        # full-batch epochs are shuffle-free, so both clients produce the
        # same local weights and the average equals either one
        assert_allclose(joint.weights, solo.weights, atol=1e-12)

    def test_separable_data_reaches_high_accuracy(self):
        rng = np.random.default_rng(15)
        clients = [self.separable_client(rng, i) for i in range(2)]
        model = fedavg_classifier(clients, rounds=60, epochs=1, batch_size=16, eta=0.5, seed=2)
        pooled_feats = np.concatenate([c.data.features for c in clients])
        pooled_labels = np.concatenate([c.data.labels for c in clients])
        preds = np.argmax(model.predict_proba(pooled_feats), axis=1)
        truth = np.argmax(pooled_labels, axis=1)
        assert (preds == truth).mean() >= 0.99

    def test_rejects_unlabeled_client(self):
        client = ClientState(client_id=0, data=LabeledMeasure([[0.0]]), alpha=np.array([1.0]))
        with pytest.raises(ValueError, match="unlabeled"):
            fedavg_classifier([client], rounds=1, epochs=1, batch_size=4, eta=0.1)


class TestCommunicationCost:
    def test_documented_products(self):
        assert communication_cost(3, 500, 64, 10) == 111_000
        assert communication_bits(3, 500, 64, 10) == 3_552_000
        assert communication_cost(1, 1, 1, 1) == 2

    def test_large_setting_exact(self):
        params = communication_cost(3, 2170, 2048, 31)
        assert params == 3 * 2170 * (2048 + 31)
        assert communication_ratio(3, 2170, 2048, 31, 25_600_000) == params / 25_600_000

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            communication_cost(0, 1, 1, 1)
        with pytest.raises(ValueError):
            communication_ratio(1, 1, 1, 1, 0)
