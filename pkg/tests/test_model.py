import math

import numpy as np
import pytest

import oracles
from mucos.context import ContextSampler
from mucos.density import build_density
from mucos.kg import generate_synthetic
from mucos.model import (
    CheckpointError,
    EncoderConfig,
    EncoderModel,
    StaleTraceError,
    cross_entropy,
)
from mucos.sequence import TokenVocab, build_relation_query, build_tail_query, stack

ENCODERS = ("mean", "attn")


def random_batch(rng, vocab_size, batch=4, length=10):
    tokens = rng.integers(1, vocab_size, size=(batch, length))
    mask = np.ones_like(tokens)
    for b in range(batch):
        cut = rng.integers(2, length + 1)
        mask[b, cut:] = 0
    tokens[mask == 0] = 0
    return tokens, mask


def graph_batches(seed, n=3, k=2, max_len=16):
    """Real relation-query and tail-query batches from a small synthetic graph."""
    graph, splits = generate_synthetic(8, 3, 40, seed=seed)
    s = ContextSampler(graph, build_density(graph))
    v = TokenVocab.for_graph(graph)
    rel = [build_relation_query(h, t, s.head_context(h, n), s.tail_context(t, n), v, max_len, r)
           for h, r, t in splits.train[:3]]
    tail = [build_tail_query(h, r, s.head_context(h, n), s.relation_context(r, k), v, max_len, t)
            for h, r, t in splits.train[3:6]]
    return graph, v, {"relation": (stack(rel), graph.num_relations), "tail": (stack(tail), graph.num_entities)}


class TestForward:
    @pytest.mark.parametrize("encoder", ENCODERS)
    def test_zero_head_gives_uniform(self, encoder):
        m = EncoderModel(20, 7, EncoderConfig(encoder, 8, 16))
        m.params["w_out"][:] = 0
        m.params["b_out"][:] = 0
        tokens, mask = random_batch(np.random.default_rng(0), 20)
        probs, _ = m.forward(tokens, mask)
        np.testing.assert_allclose(probs, 1 / 7, rtol=0, atol=1e-15)

    def test_closed_form_softmax(self):
        m = EncoderModel(4, 2, EncoderConfig("mean", 2, 2))
        m.params["embed"][:] = [[0, 0], [1, 0], [0, 1], [1, 1]]
        m.params["w_out"][:] = [[0, 0], [0, 1]]
        m.params["b_out"][:] = 0
        # pooled = mean(embed[2], embed[2]) = (0, 1) -> logits (0, 1)
        probs, _ = m.forward(np.array([2, 2, 0]), np.array([1, 1, 0]))
        e = math.e
        np.testing.assert_allclose(probs, [1 / (1 + e), e / (1 + e)], rtol=1e-15)
        assert probs[0] == pytest.approx(0.2689, abs=1e-4)
        assert probs[1] == pytest.approx(0.7311, abs=1e-4)

    @pytest.mark.parametrize("encoder", ENCODERS)
    def test_normalization(self, encoder):
        rng = np.random.default_rng(1)
        m = EncoderModel(30, 11, EncoderConfig(encoder, 8, 16, init_scale=1.0), seed=3)
        tokens, mask = random_batch(rng, 30, batch=1000, length=12)
        probs, _ = m.forward(tokens, mask)
        assert np.all(probs >= 0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    @pytest.mark.parametrize("encoder", ENCODERS)
    def test_padding_invariance(self, encoder):
        rng = np.random.default_rng(2)
        m = EncoderModel(25, 5, EncoderConfig(encoder, 8, 16, init_scale=0.5), seed=1)
        tokens, mask = random_batch(rng, 25, batch=6, length=9)
        base, _ = m.forward(tokens, mask)
        padded, _ = m.forward(np.pad(tokens, ((0, 0), (0, 7))), np.pad(mask, ((0, 0), (0, 7))))
        np.testing.assert_allclose(padded, base, rtol=1e-13, atol=1e-15)
        # swapping two PAD positions of a padded sequence
        t2, m2 = tokens.copy(), mask.copy()
        row = int(np.argmin(mask.sum(axis=1)))
        pads = np.flatnonzero(mask[row] == 0)
        if len(pads) >= 2:
            t2[row, [pads[0], pads[-1]]] = t2[row, [pads[-1], pads[0]]]
            np.testing.assert_array_equal(m.forward(t2, m2)[0], base)

    @pytest.mark.parametrize("encoder", ENCODERS)
    def test_class_permutation_equivariance(self, encoder):
        rng = np.random.default_rng(3)
        m = EncoderModel(25, 6, EncoderConfig(encoder, 8, 16, init_scale=0.5), seed=2)
        tokens, mask = random_batch(rng, 25)
        base, _ = m.forward(tokens, mask)
        perm = rng.permutation(6)
        m.params["w_out"] = m.params["w_out"][perm]
        m.params["b_out"] = m.params["b_out"][perm]
        permuted, _ = m.forward(tokens, mask)
        np.testing.assert_allclose(permuted, base[:, perm], rtol=1e-14)

    def test_rejects_bad_input(self):
        m = EncoderModel(10, 3, EncoderConfig("mean", 4, 4))
        with pytest.raises(ValueError):
            m.forward(np.array([[1, 2, 10]]), np.array([[1, 1, 1]]))
        with pytest.raises(ValueError):
            m.forward(np.array([[1, 2]]), np.array([[1, 1, 1]]))

    @pytest.mark.parametrize("encoder", ENCODERS)
    def test_trace_replay_bit_identical(self, encoder):
        m = EncoderModel(25, 6, EncoderConfig(encoder, 8, 16), seed=4)
        tokens, mask = random_batch(np.random.default_rng(4), 25)
        probs, trace = m.forward(tokens, mask)
        again, _ = m.forward(trace.tokens, trace.mask)
        np.testing.assert_array_equal(again, probs)


class TestLoss:
    def test_values(self):
        assert cross_entropy(np.array([0.0, 1.0]), 1) == 0.0
        assert cross_entropy(np.array([1 - math.exp(-1), math.exp(-1)]), 1) == pytest.approx(1.0, abs=1e-15)
        assert cross_entropy(np.full(4, 0.25), 3) == pytest.approx(math.log(4), abs=1e-15)
        assert cross_entropy(np.full(4, 0.25), 3) == pytest.approx(1.3863, abs=1e-4)

    def test_floor(self):
        assert cross_entropy(np.array([1.0, 0.0]), 1) == pytest.approx(-math.log(1e-12))


class TestBackward:
    def test_head_gradient_identity(self):
        m = EncoderModel(15, 4, EncoderConfig("attn", 6, 8, init_scale=0.5), seed=5)
        tokens, mask = random_batch(np.random.default_rng(5), 15, batch=1)
        probs, trace = m.forward(tokens, mask)
        grads = m.backward(trace, [2])
        onehot = np.eye(4)[2]
        np.testing.assert_allclose(grads["w_out"], np.outer(probs[0] - onehot, trace.cache["pooled"][0]), rtol=1e-14)
        np.testing.assert_allclose(grads["b_out"], probs[0] - onehot, rtol=1e-14)

    @pytest.mark.parametrize("encoder", ENCODERS)
    def test_pad_embedding_gradient_is_zero(self, encoder):
        m = EncoderModel(15, 4, EncoderConfig(encoder, 6, 8, init_scale=0.5), seed=6)
        tokens, mask = random_batch(np.random.default_rng(6), 15, batch=5)
        assert (mask == 0).any()
        _, trace = m.forward(tokens, mask)
        grads = m.backward(trace, [0, 1, 2, 3, 0])
        assert np.all(grads["embed"][0] == 0.0)
        unused = np.setdiff1d(np.arange(15), tokens)
        assert np.all(grads["embed"][unused] == 0.0)

    def test_stale_trace(self):
        m = EncoderModel(10, 3, EncoderConfig("mean", 4, 4))
        _, trace = m.forward(np.array([1, 2]), np.array([1, 1]))
        m.mark_updated()
        with pytest.raises(StaleTraceError):
            m.backward(trace, [0])

    @pytest.mark.parametrize("encoder", ENCODERS)
    @pytest.mark.parametrize("task", ["relation", "tail"])
    @pytest.mark.parametrize("seed", range(3))
    def test_finite_difference(self, encoder, task, seed):
        _, v, batches = graph_batches(seed)
        (tokens, mask, labels), n_cls = batches[task]
        m = EncoderModel(len(v), n_cls, EncoderConfig(encoder, 5, 7, init_scale=0.5), seed=seed)
        _, trace = m.forward(tokens, mask)
        analytic = m.backward(trace, labels)
        numeric = oracles.finite_difference_grads(m, tokens, mask, labels, eps=1e-4)
        assert set(analytic) == set(m.params)
        for name in m.params:
            assert analytic[name].shape == m.params[name].shape
            assert oracles.max_relative_error(analytic[name], numeric[name]) <= 1e-4, name


class TestCheckpoint:
    @pytest.mark.parametrize("encoder", ENCODERS)
    def test_round_trip(self, tmp_path, encoder):
        m = EncoderModel(12, 5, EncoderConfig(encoder, 4, 6), seed=7)
        m.save(tmp_path / "m.npz", extra={"task": "tail"})
        loaded, extra = EncoderModel.load(tmp_path / "m.npz", vocab_size=12, num_classes=5)
        assert extra == {"task": "tail"}
        assert loaded.config == m.config
        for k in m.params:
            np.testing.assert_array_equal(loaded.params[k], m.params[k])

    def test_shape_mismatch_rejected(self, tmp_path):
        m = EncoderModel(12, 5, EncoderConfig("mean", 4, 6))
        m.save(tmp_path / "m.npz")
        with pytest.raises(CheckpointError):
            EncoderModel.load(tmp_path / "m.npz", vocab_size=13)
        with pytest.raises(CheckpointError):
            EncoderModel.load(tmp_path / "m.npz", num_classes=4)
        bad = dict(m.params, w_out=np.zeros((4, 4)))
        with pytest.raises(CheckpointError):
            EncoderModel(12, 5, EncoderConfig("mean", 4, 6), params=bad)

    def test_garbage_file(self, tmp_path):
        (tmp_path / "x.npz").write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError):
            EncoderModel.load(tmp_path / "x.npz")
