import math

import numpy as np
import pytest

from pairscore.encoder import (
    EncoderConfig,
    build_batch,
    forward,
    gradients,
    init_model,
    load_checkpoint,
    pack_pair,
    pretrain_loss,
    save_checkpoint,
    supervised_loss,
)
from pairscore.errors import DataError, NumericError
from pairscore.signals import TaskSpec
from pairscore.text import SentencePair, Vocabulary, tokenize

CORPUS = [
    "the cat sat on the mat".split(),
    "a dog ran to the rug".split(),
]


@pytest.fixture
def vocab():
    return Vocabulary.build(CORPUS, min_count=1)


@pytest.fixture
def tiny_config(vocab):
    return EncoderConfig(
        vocab_size=len(vocab), d_model=8, n_layers=1, n_heads=2, d_ff=16, max_seq_len=16,
        init_seed=3,
    )


@pytest.fixture
def small_config(vocab):
    return EncoderConfig(
        vocab_size=len(vocab), d_model=16, n_layers=2, n_heads=4, d_ff=32, max_seq_len=32,
        init_seed=1,
    )


def make_pairs(vocab, texts):
    return [SentencePair(tokenize(r, vocab), tokenize(c, vocab)) for r, c in texts]


def signal_targets_for(tasks, batch_size, seed=0):
    rng = np.random.default_rng(seed)
    targets = {}
    for task in tasks:
        if task.kind == "regression":
            targets[task.name] = rng.normal(size=(batch_size, task.dim))
        elif task.dim == 3:
            raw = rng.uniform(0.1, 1.0, size=(batch_size, 3))
            targets[task.name] = raw / raw.sum(axis=1, keepdims=True)
        else:
            flags = rng.integers(0, 2, size=batch_size)
            onehot = np.zeros((batch_size, 2))
            onehot[np.arange(batch_size), flags] = 1.0
            targets[task.name] = onehot
    return targets


class TestBatchPacking:
    def test_pack_layout(self, vocab):
        pair = make_pairs(vocab, [("the cat", "a dog")])[0]
        ids, segs = pack_pair(pair, vocab)
        assert ids[0] == vocab.cls_id
        assert ids.count(vocab.sep_id) == 2
        assert len(ids) == len(segs) == 2 + 2 + 2 + 1
        # segment 0 covers [cls] + reference + first [sep]
        assert segs[:4] == [0, 0, 0, 0]
        assert segs[4:] == [1, 1, 1]

    def test_padding_masked(self, vocab):
        pairs = make_pairs(vocab, [("the cat sat", "a dog"), ("the", "a")])
        batch = build_batch(pairs, vocab)
        assert batch.ids.shape == batch.mask.shape
        assert batch.mask[1].sum() == 5  # cls + 1 + sep + 1 + sep
        assert (batch.ids[1][batch.mask[1] == 0.0] == vocab.pad_id).all()

    def test_overlong_sequence_errors(self, vocab, tiny_config):
        params = init_model(tiny_config)
        long_pair = make_pairs(vocab, [("the cat sat on the mat " * 3, "a dog")])
        batch = build_batch(long_pair, vocab)
        with pytest.raises(DataError):
            forward(params, batch)


class TestForward:
    def test_output_shapes(self, vocab, small_config):
        params = init_model(small_config)
        pairs = make_pairs(vocab, [("the cat sat", "a dog ran"), ("the mat", "the rug")])
        result = forward(params, build_batch(pairs, vocab))
        assert result.cls.shape == (2, 16)
        assert result.ratings.shape == (2,)
        for task in params.tasks:
            assert result.task_outputs[task.name].shape == (2, task.dim)

    def test_zero_rating_weights_give_constant_bias(self, vocab, small_config):
        params = init_model(small_config)
        params.tensors["rating.w"][:] = 0.0
        params.tensors["rating.b"][0] = 0.731
        pairs = make_pairs(vocab, [("the cat", "a dog"), ("the mat", "the rug ran")])
        result = forward(params, build_batch(pairs, vocab))
        np.testing.assert_allclose(result.ratings, 0.731, atol=1e-15)

    def test_attention_rows_sum_to_one(self, vocab, small_config):
        params = init_model(small_config)
        pairs = make_pairs(vocab, [("the cat sat", "a dog"), ("the", "a")])
        result = forward(params, build_batch(pairs, vocab), want_cache=True)
        for lc in result.cache["layers"]:
            sums = lc["attn"].sum(axis=-1)
            np.testing.assert_allclose(sums, 1.0, atol=1e-6)

    def test_padded_keys_get_zero_attention(self, vocab, small_config):
        params = init_model(small_config)
        pairs = make_pairs(vocab, [("the cat sat on the mat", "a dog"), ("the", "a")])
        batch = build_batch(pairs, vocab)
        result = forward(params, batch, want_cache=True)
        pad_cols = batch.mask[1] == 0.0
        attn = result.cache["layers"][0]["attn"][1]
        assert attn[:, :, pad_cols].max() == 0.0

    def test_layer_norm_pre_affine_stats(self, vocab, small_config):
        params = init_model(small_config)
        pairs = make_pairs(vocab, [("the cat sat on the mat", "a dog ran to the rug")])
        result = forward(params, build_batch(pairs, vocab), want_cache=True)
        for lc in result.cache["layers"]:
            for key in ("ln1", "ln2"):
                xhat, _ = lc[key]
                np.testing.assert_allclose(xhat.mean(axis=-1), 0.0, atol=1e-5)
                np.testing.assert_allclose(xhat.var(axis=-1), 1.0, atol=1e-5)

    def test_batch_equivariance(self, vocab, small_config):
        params = init_model(small_config)
        pairs = make_pairs(
            vocab,
            [("the cat sat", "a dog"), ("the mat", "the rug ran"), ("a dog ran", "the cat")],
        )
        fwd = forward(params, build_batch(pairs, vocab))
        permuted = forward(params, build_batch([pairs[2], pairs[0], pairs[1]], vocab))
        np.testing.assert_allclose(permuted.ratings, fwd.ratings[[2, 0, 1]], atol=1e-12)
        np.testing.assert_allclose(permuted.cls, fwd.cls[[2, 0, 1]], atol=1e-12)

    def test_inference_deterministic(self, vocab, small_config):
        params = init_model(small_config)
        pairs = make_pairs(vocab, [("the cat sat", "a dog ran")])
        batch = build_batch(pairs, vocab)
        a = forward(params, batch)
        b = forward(params, batch)
        np.testing.assert_array_equal(a.ratings, b.ratings)

    def test_dropout_only_in_train_mode(self, vocab):
        config = EncoderConfig(
            vocab_size=20, d_model=8, n_layers=1, n_heads=2, d_ff=16, max_seq_len=16,
            dropout=0.5, init_seed=0,
        )
        params = init_model(config)
        pairs = make_pairs(vocab, [("the cat sat", "a dog ran")])
        batch = build_batch(pairs, vocab)
        plain = forward(params, batch)
        trained = forward(params, batch, train=True, rng=np.random.default_rng(0))
        assert not np.allclose(plain.ratings, trained.ratings)
        again = forward(params, batch, train=True, rng=np.random.default_rng(0))
        np.testing.assert_array_equal(trained.ratings, again.ratings)


class TestLosses:
    def test_supervised_perfect_fit(self):
        y = np.array([0.3, -1.2, 4.0])
        assert supervised_loss(y, y) == 0.0

    def test_supervised_unit_error(self):
        assert supervised_loss(np.array([0.0]), np.array([1.0])) == 1.0

    def test_supervised_matches_elementwise_oracle(self):
        rng = np.random.default_rng(21)
        pred = rng.normal(size=5)
        tgt = rng.normal(size=5)
        oracle = sum((p - t) ** 2 for p, t in zip(pred, tgt)) / 5
        assert supervised_loss(pred, tgt) == pytest.approx(oracle, abs=1e-12)

    def test_pretrain_regression_hand_case(self):
        task = TaskSpec("toy", "regression", 3, weight=2.0)
        out = {"toy": np.array([[1.0, 1.0, 1.0]])}
        tgt = {"toy": np.array([[0.0, 0.0, 0.0]])}
        assert pretrain_loss(out, tgt, [task]) == pytest.approx(2.0, abs=1e-9)

    def test_pretrain_uniform_softmax_cross_entropy(self):
        task = TaskSpec("cls3", "classification", 3, weight=1.0)
        out = {"cls3": np.zeros((4, 3))}  # uniform predicted distribution
        tgt = {"cls3": np.tile([0.2, 0.5, 0.3], (4, 1))}
        assert pretrain_loss(out, tgt, [task]) == pytest.approx(math.log(3.0), abs=1e-9)

    def test_zero_weight_task_is_ablated(self):
        t1 = TaskSpec("a", "regression", 2, weight=1.0)
        t2 = TaskSpec("b", "regression", 4, weight=0.0)
        rng = np.random.default_rng(2)
        out = {"a": rng.normal(size=(3, 2)), "b": rng.normal(size=(3, 4))}
        tgt = {"a": rng.normal(size=(3, 2)), "b": rng.normal(size=(3, 4))}
        full = pretrain_loss(out, tgt, [t1, t2])
        only_first = pretrain_loss({"a": out["a"]}, {"a": tgt["a"]}, [t1])
        assert full == pytest.approx(only_first, abs=1e-12)

    def test_mismatched_dims_error(self):
        task = TaskSpec("a", "regression", 3)
        with pytest.raises(DataError):
            pretrain_loss({"a": np.zeros((2, 2))}, {"a": np.zeros((2, 3))}, [task])


# ---------------------------------------------------------------------------
# Gradient checking against central finite differences.
# ---------------------------------------------------------------------------


def loss_only(params, batch, loss_spec):
    result = forward(params, batch)
    if loss_spec == "supervised":
        return supervised_loss(result.ratings, batch.ratings)
    return pretrain_loss(result.task_outputs, batch.signal_targets, loss_spec)


def max_relative_fd_error(params, batch, loss_spec, h=1e-4):
    """Max over parameter tensors of ||analytic - central-difference|| / ||gradient||.

    Norm-relative per tensor: robust to individual near-saddle coordinates
    where the h^2 truncation term of the central difference dominates a tiny
    true gradient, while still catching any structural backward-pass bug
    (those corrupt whole tensors, not single entries).
    """
    _, analytic = gradients(params, batch, loss_spec)
    worst = 0.0
    for name, arr in params.tensors.items():
        fd = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            up = loss_only(params, batch, loss_spec)
            arr[idx] = orig - h
            down = loss_only(params, batch, loss_spec)
            arr[idx] = orig
            fd[idx] = (up - down) / (2 * h)
            it.iternext()
        a = analytic[name]
        err = np.linalg.norm(a - fd) / max(np.linalg.norm(a), np.linalg.norm(fd), 1e-8)
        worst = max(worst, err)
    return worst


@pytest.fixture
def grad_setup(vocab, tiny_config):
    params = init_model(tiny_config)
    pairs = make_pairs(vocab, [("the cat sat", "a dog")])
    rng = np.random.default_rng(9)
    batch = build_batch(
        pairs,
        vocab,
        ratings=[0.8],
        signal_targets=signal_targets_for(params.tasks, 1, seed=5),
    )
    return params, batch


class TestGradients:
    def test_supervised_gradient_check(self, grad_setup):
        params, batch = grad_setup
        assert max_relative_fd_error(params, batch, "supervised") < 1e-4

    def test_full_mixture_gradient_check(self, grad_setup):
        params, batch = grad_setup
        assert max_relative_fd_error(params, batch, params.tasks) < 1e-4

    def test_single_task_gradient_checks(self, grad_setup):
        params, batch = grad_setup
        for task in params.tasks:
            spec = tuple(
                t.with_weight(1.0 if t.name == task.name else 0.0) for t in params.tasks
            )
            assert max_relative_fd_error(params, batch, spec) < 1e-4, task.name

    def test_dead_path_gradient_exactly_zero(self, grad_setup):
        params, batch = grad_setup
        spec = tuple(
            t.with_weight(0.0 if t.name == "rouge" else t.weight) for t in params.tasks
        )
        _, grads = gradients(params, batch, spec)
        assert np.all(grads["head.rouge.w"] == 0.0)
        assert np.all(grads["head.rouge.b"] == 0.0)

    def test_supervised_leaves_task_heads_untouched(self, grad_setup):
        params, batch = grad_setup
        _, grads = gradients(params, batch, "supervised")
        for task in params.tasks:
            assert np.all(grads[f"head.{task.name}.w"] == 0.0)

    def test_doubling_weights_doubles_gradients(self, grad_setup):
        params, batch = grad_setup
        base_spec = params.tasks
        double_spec = tuple(t.with_weight(2.0 * t.weight) for t in params.tasks)
        loss1, g1 = gradients(params, batch, base_spec)
        loss2, g2 = gradients(params, batch, double_spec)
        assert loss2 == pytest.approx(2.0 * loss1, rel=1e-12)
        for name in g1:
            np.testing.assert_allclose(g2[name], 2.0 * g1[name], atol=1e-12)

    def test_pad_embedding_gradient_zero(self, vocab, tiny_config):
        params = init_model(tiny_config)
        pairs = make_pairs(vocab, [("the cat sat on", "a dog"), ("the", "a")])
        batch = build_batch(pairs, vocab, ratings=[0.1, -0.4])
        _, grads = gradients(params, batch, "supervised")
        assert np.all(grads["tok_emb"][vocab.pad_id] == 0.0)

    def test_non_finite_input_identifies_layer(self, grad_setup):
        params, batch = grad_setup
        params.tensors["layer0.w1"][:] = np.inf
        with np.errstate(invalid="ignore"):
            with pytest.raises(NumericError) as info:
                forward(params, batch)
        assert "layer 0" in str(info.value)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tiny_config, tmp_path):
        params = init_model(tiny_config)
        path = tmp_path / "model.ckpt"
        save_checkpoint(params, path, meta={"config_hash": "cafe"})
        loaded, meta = load_checkpoint(path)
        assert meta["config_hash"] == "cafe"
        assert loaded.config == params.config
        assert loaded.tasks == params.tasks
        assert set(loaded.tensors) == set(params.tensors)
        for name in params.tensors:
            np.testing.assert_array_equal(loaded.tensors[name], params.tensors[name])

    def test_save_is_deterministic(self, tiny_config, tmp_path):
        params = init_model(tiny_config)
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(params, p1)
        save_checkpoint(params, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
        with pytest.raises(Exception):
            load_checkpoint(path)

    def test_config_validation(self):
        with pytest.raises(DataError):
            EncoderConfig(vocab_size=10, d_model=10, n_heads=3)
        with pytest.raises(DataError):
            EncoderConfig(vocab_size=10, max_seq_len=2)
