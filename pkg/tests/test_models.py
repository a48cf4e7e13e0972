import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drikit.errors import FormatError, InvalidArgumentError, ShapeError
from drikit.models import (
    CHECKPOINT_MAGIC, ModelConfig, ModelParams, forward, forward_tensors, init_model, load_checkpoint,
    loss_and_grads, save_checkpoint, train_step, training_loss, validation_loss,
)
from drikit.numcore import GradTape, Tensor, backward, mse_loss

from test_numcore import central_diff, max_rel_err


def rand_batch(shape, seed):
    return np.random.default_rng(seed).random(shape, dtype=np.float32)


def random_params(config, seed, scale=0.3):
    """Params with a nonzero final layer and biases so every path is exercised."""
    rng = np.random.default_rng(seed)
    return ModelParams(config, [(rng.standard_normal(t.shape) * scale).astype(np.float32)
                                for t in init_model(config).tensors])


class TestInit:
    def test_deterministic(self):
        assert init_model(ModelConfig(seed=3)).equal(init_model(ModelConfig(seed=3)))

    def test_seed_matters(self):
        assert not init_model(ModelConfig(seed=3)).equal(init_model(ModelConfig(seed=4)))

    def test_parameter_count_closed_form(self):
        cfg = ModelConfig(widths=(16, 16, 16), kernel_size=3, in_channels=3)
        # 3->16, 16->16, 16->16, 16->3 convs with biases
        expect = (3 * 16 * 9 + 16) + 2 * (16 * 16 * 9 + 16) + (16 * 3 * 9 + 3)
        assert cfg.parameter_count() == expect
        assert init_model(cfg).count() == expect

    @pytest.mark.parametrize("bad", [dict(kernel_size=2), dict(kernel_size=0), dict(widths=()),
                                     dict(widths=(4, 0)), dict(in_channels=2)])
    def test_invalid_config(self, bad):
        with pytest.raises(InvalidArgumentError):
            ModelConfig(**bad)

    def test_he_scale_and_zero_biases(self):
        p = init_model(ModelConfig(widths=(64,), seed=1))
        w1 = p.tensors[0].astype(np.float64)
        assert abs(w1.std() - np.sqrt(2.0 / 27)) < 0.02
        assert all(not b.any() for b in p.tensors[1::2])
        assert not p.tensors[2].any()   # zero final layer


class TestForward:
    def test_identity_at_init(self):
        x = rand_batch((2, 3, 8, 8), 0)
        assert np.array_equal(forward(init_model(ModelConfig()), x), x)

    def test_batch_independence(self):
        p = random_params(ModelConfig(), 1)
        x = rand_batch((2, 3, 8, 8), 2)
        both = forward(p, x)
        one = np.concatenate([forward(p, x[:1]), forward(p, x[1:])])
        np.testing.assert_allclose(both, one, rtol=0, atol=1e-6)

    def test_composition_oracle(self):
        from scipy.signal import correlate
        cfg = ModelConfig(widths=(4, 4), in_channels=1)
        p = random_params(cfg, 5)
        x = rand_batch((1, 1, 8, 8), 6).astype(np.float64)
        h = x[0] - 0.5
        for i in range(3):
            w, b = p.tensors[2 * i].astype(np.float64), p.tensors[2 * i + 1].astype(np.float64)
            hp = np.pad(h, ((0, 0), (1, 1), (1, 1)))
            h = np.stack([correlate(hp, w[f], mode="valid")[0] + b[f] for f in range(w.shape[0])])
            if i < 2:
                h = np.maximum(h, 0)
        np.testing.assert_allclose(forward(p, x), x + h[None], rtol=1e-4, atol=1e-5)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            forward(init_model(ModelConfig(in_channels=3)), np.zeros((1, 1, 8, 8)))

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_permutation_equivariance(self, seed):
        p = random_params(ModelConfig(widths=(4,)), 3)
        x = rand_batch((4, 3, 6, 6), seed)
        perm = np.random.default_rng(seed).permutation(4)
        np.testing.assert_allclose(forward(p, x[perm]), forward(p, x)[perm], rtol=0, atol=1e-6)


class TestLoss:
    def test_clean_input_zero_loss(self):
        x = rand_batch((3, 3, 8, 8), 0)
        assert validation_loss(init_model(ModelConfig()), (x, x)) == 0.0

    def test_single_pair(self):
        p = random_params(ModelConfig(), 1)
        d, c = rand_batch((1, 3, 8, 8), 2), rand_batch((1, 3, 8, 8), 3)
        assert training_loss(p, [(d[0], c[0])]) == mse_loss(Tensor(forward(p, d)), Tensor(c)).item()

    def test_decomposes_into_pair_mean(self):
        p = random_params(ModelConfig(), 1)
        d, c = rand_batch((10, 3, 8, 8), 4), rand_batch((10, 3, 8, 8), 5)
        singles = [validation_loss(p, (d[i:i + 1], c[i:i + 1])) for i in range(10)]
        assert validation_loss(p, (d, c)) == pytest.approx(np.mean(singles), rel=1e-6)

    def test_identity_restorer_loss(self):
        d, c = rand_batch((5, 3, 8, 8), 1), rand_batch((5, 3, 8, 8), 2)
        direct = np.mean((d.astype(np.float64) - c) ** 2)
        assert validation_loss(init_model(ModelConfig()), (d, c)) == pytest.approx(direct, rel=1e-12)

    def test_empty_set(self):
        with pytest.raises(InvalidArgumentError):
            validation_loss(init_model(ModelConfig()), [])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            validation_loss(init_model(ModelConfig()), (np.zeros((2, 3, 8, 8)), np.zeros((2, 3, 8, 6))))

    def test_validation_is_pure(self):
        cfg = ModelConfig(seed=2)
        d, c = rand_batch((6, 3, 8, 8), 1), rand_batch((6, 3, 8, 8), 2)
        plain = init_model(cfg)
        probed = init_model(cfg)
        for t in range(4):
            batch = (d[t:t + 2], c[t:t + 2])
            plain = train_step(plain, batch, 0.1)
            before = [x.copy() for x in probed.tensors]
            validation_loss(probed, (d, c))
            assert all(np.array_equal(a, b) for a, b in zip(before, probed.tensors))
            probed = train_step(probed, batch, 0.1)
        assert plain.equal(probed)


class TestGradients:
    def test_full_model_finite_differences(self):
        """Analytic gradients of the 3-layer model against float64 central differences."""
        cfg = ModelConfig(widths=(3, 3), in_channels=1)
        p = random_params(cfg, 7, scale=0.5)
        x = rand_batch((2, 1, 5, 5), 8).astype(np.float64)
        y = rand_batch((2, 1, 5, 5), 9).astype(np.float64)
        arrays = [t.astype(np.float64) for t in p.tensors]

        def loss_of():
            ws = [Tensor(a, dtype=np.float64) for a in arrays]
            return mse_loss(forward_tensors(p, Tensor(x, dtype=np.float64), ws), Tensor(y, dtype=np.float64)).item()

        ws = [Tensor(a.copy(), requires_grad=True, dtype=np.float64) for a in arrays]
        with GradTape() as tape:
            loss = mse_loss(forward_tensors(p, Tensor(x, dtype=np.float64), ws), Tensor(y, dtype=np.float64))
        grads = backward(loss, tape)
        for w, a in zip(ws, arrays):
            numeric = central_diff(loss_of, a, h=1e-6)
            analytic = grads[w]
            # relu kinks can make single coordinates disagree; none are expected at this seed
            assert max_rel_err(analytic, numeric) < 1e-4

    def test_train_step_is_sgd(self):
        p = random_params(ModelConfig(), 2)
        batch = (rand_batch((2, 3, 8, 8), 1), rand_batch((2, 3, 8, 8), 2))
        _, g = loss_and_grads(p, batch)
        q = train_step(p, batch, 0.25)
        for a, b, gi in zip(p.tensors, q.tensors, g):
            assert np.array_equal(b, a - np.float32(0.25) * gi)

    def test_train_step_bitwise_reproducible(self):
        p = random_params(ModelConfig(), 2)
        batch = (rand_batch((2, 3, 8, 8), 1), rand_batch((2, 3, 8, 8), 2))
        assert train_step(p, batch, 0.1).equal(train_step(p, batch, 0.1))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        p = random_params(ModelConfig(widths=(5, 7), seed=9), 1)
        save_checkpoint(p, tmp_path / "m.ckpt")
        q = load_checkpoint(tmp_path / "m.ckpt")
        assert q.equal(p) and q.config == p.config

    def test_truncated(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(init_model(ModelConfig()), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-5])
        with pytest.raises(FormatError) as info:
            load_checkpoint(path)
        assert info.value.offset is not None and "truncated" in str(info.value)

    def test_version_mismatch_names_both(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(init_model(ModelConfig()), path)
        raw = bytearray(path.read_bytes())
        raw[len(CHECKPOINT_MAGIC)] = 7
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError) as info:
            load_checkpoint(path)
        assert "version 7" in str(info.value) and "version 1" in str(info.value)
        assert info.value.offset == len(CHECKPOINT_MAGIC)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.ckpt"
        path.write_bytes(b"NOTACKPT" + bytes(20))
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(init_model(ModelConfig()), path)
        path.write_bytes(path.read_bytes() + b"\0")
        with pytest.raises(FormatError, match="trailing"):
            load_checkpoint(path)
