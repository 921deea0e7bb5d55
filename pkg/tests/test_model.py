"""Tests for the toy residual SR network."""

import numpy as np
import pytest

from degalign.errors import ContractError, UnsupportedConfigError
from degalign.model import ModelConfig, ToyModel
from degalign.tensor import Tensor


def small_model(seed=0, **kwargs):
    defaults = dict(width=8, blocks=2, scale=2)
    defaults.update(kwargs)
    return ToyModel(ModelConfig(**defaults), init_seed=seed)


class TestShapes:
    def test_output_extents_and_channels(self):
        model = small_model()
        x = Tensor(np.random.default_rng(0).random((4, 3, 8, 8)))
        out, tap = model.forward(x)
        assert out.shape == (4, 3, 16, 16)
        assert tap.shape == (4, 8, 16, 16)

    def test_single_image_forward(self):
        model = small_model()
        x = Tensor(np.random.default_rng(1).random((3, 8, 8)))
        out, tap = model.forward(x)
        assert out.shape == (3, 16, 16)
        assert tap.shape == (8, 16, 16)

    def test_scale_one_has_no_upsample(self):
        model = small_model(scale=1)
        x = Tensor(np.random.default_rng(2).random((3, 8, 8)))
        out, tap = model.forward(x)
        assert out.shape == (3, 8, 8)
        assert not any(name.startswith("up") for name in model.params)

    def test_scale_four_has_two_upsample_stages(self):
        model = small_model(scale=4)
        assert "up0.w" in model.params and "up1.w" in model.params
        x = Tensor(np.random.default_rng(3).random((3, 4, 4)))
        out, _ = model.forward(x)
        assert out.shape == (3, 16, 16)


class TestInit:
    def test_seed_determinism(self):
        a, b = small_model(seed=5), small_model(seed=5)
        for name in a.params:
            assert np.array_equal(a.params[name].data, b.params[name].data)

    def test_different_seeds_differ(self):
        a, b = small_model(seed=5), small_model(seed=6)
        assert not np.array_equal(a.params["head.w"].data,
                                  b.params["head.w"].data)

    def test_biases_start_zero(self):
        model = small_model()
        for name, p in model.params.items():
            if name.endswith(".b"):
                assert np.all(p.data == 0.0)

    def test_invalid_config_aggregates_problems(self):
        problems = ModelConfig(width=0, scale=3).validate()
        assert len(problems) == 2
        with pytest.raises(ContractError):
            ToyModel(ModelConfig(width=0, scale=3), init_seed=0)


class TestConstantPropagation:
    def test_center_response_matches_hand_computation(self):
        # 1-block, bias-free net with handcrafted equal weights: away from
        # the zero-padded border every activation is spatially constant, so
        # the tap's center value is a closed-form function of the input.
        model = ToyModel(ModelConfig(width=2, blocks=1, scale=1),
                         init_seed=0)
        a = 0.01
        for name, p in model.params.items():
            p.data = np.full_like(p.data, a if name.endswith(".w") else 0.0)
        c = 0.5
        x = Tensor(np.full((3, 9, 9), c))
        _, tap = model.forward(x)
        h0 = c * 9 * a * 3          # head conv: 3x3 kernel over 3 channels
        # positive activations pass leaky ReLU unchanged
        b1 = h0 * 9 * a * 2          # block conv1 over 2 channels
        b2 = b1 * 9 * a * 2          # block conv2
        expected = h0 + b2           # residual skip
        assert tap.data[0, 4, 4] == pytest.approx(expected, rel=1e-12)
        assert tap.data[1, 4, 4] == pytest.approx(expected, rel=1e-12)


class TestDropoutAtTap:
    def test_requires_rng(self):
        model = small_model()
        x = Tensor(np.random.default_rng(4).random((3, 8, 8)))
        with pytest.raises(ContractError):
            model.forward(x, train=True, dropout_p=0.5)

    def test_eval_ignores_dropout(self):
        model = small_model()
        img = np.random.default_rng(5).random((8, 8, 3))
        assert np.array_equal(model.restore(img), model.restore(img))

    def test_training_dropout_changes_tap(self):
        model = small_model()
        x = Tensor(np.random.default_rng(6).random((3, 8, 8)))
        _, plain = model.forward(x)
        _, dropped = model.forward(
            x, train=True, dropout_p=0.7,
            dropout_rng=np.random.default_rng(0))
        assert not np.array_equal(plain.data, dropped.data)


class TestInferenceHelpers:
    def test_restore_shape_and_range(self):
        model = small_model()
        img = np.random.default_rng(7).random((8, 8, 3))
        out = model.restore(img)
        assert out.shape == (16, 16, 3)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_tap_features_shape(self):
        model = small_model()
        img = np.random.default_rng(8).random((8, 8, 3))
        feats = model.tap_features(img)
        assert feats.shape == (8, 16, 16)

    def test_unknown_tap_rejected(self):
        model = small_model()
        with pytest.raises(UnsupportedConfigError):
            model.tap_features(np.zeros((8, 8, 3)), layer="head")


class TestStateRoundtrip:
    def test_save_load(self):
        a, b = small_model(seed=9), small_model(seed=10)
        b.load_state(a.state())
        img = np.random.default_rng(11).random((8, 8, 3))
        assert np.array_equal(a.restore(img), b.restore(img))

    def test_name_mismatch_rejected(self):
        a = small_model()
        state = a.state()
        state["bogus.w"] = state.pop("head.w")
        with pytest.raises(ContractError):
            a.load_state(state)
