from __future__ import annotations

import numpy as np
import pytest

from trainer_bridge.fusion import ZeroInitFusion, check_zero_init_fusion, conv2d, fuse


@pytest.fixture
def tensors():
    rng = np.random.default_rng(0)
    base = rng.normal(size=(6, 12, 16))
    features = rng.normal(size=(4, 12, 16))
    return base, features


class TestZeroInit:
    def test_zero_weights_exact_identity(self, tensors):
        base, features = tensors
        fusion = ZeroInitFusion.zero_init(4, 6)
        out = fuse(base, features, fusion)
        assert np.array_equal(out, base)  # bit-exact, not approximately

    def test_perturbed_weight_changes_output(self, tensors):
        base, features = tensors
        fusion = ZeroInitFusion.zero_init(4, 6)
        out = fuse(base, features, fusion.perturbed(1e-3))
        assert not np.array_equal(out, base)

    def test_check_helper(self, tensors):
        base, features = tensors
        assert check_zero_init_fusion(features, base)

    def test_check_rejects_nonzero_fusion(self, tensors):
        base, features = tensors
        fusion = ZeroInitFusion.zero_init(4, 6).perturbed()
        with pytest.raises(ValueError):
            check_zero_init_fusion(features, base, fusion)

    def test_zero_init_identity_without_norm_or_act(self, tensors):
        base, features = tensors
        fusion = ZeroInitFusion.zero_init(4, 6, normalize=False, activate=False)
        assert np.array_equal(fuse(base, features, fusion), base)


class TestLinearity:
    def test_doubling_features_doubles_residual(self):
        # With normalization and activation off the fusion map is linear, so
        # the residual scales exactly with the input.
        rng = np.random.default_rng(1)
        weight = rng.normal(size=(5, 4, 3, 3))
        bias = np.zeros(5)
        fusion = ZeroInitFusion(weight, bias, normalize=False, activate=False)
        features = rng.normal(size=(4, 10, 12))
        r1 = fusion(features)
        r2 = fusion(2.0 * features)
        np.testing.assert_array_equal(r2, 2.0 * r1)

    def test_normalized_path_is_scale_invariant_not_linear(self):
        # The documented fusion path normalizes first, so doubling the input
        # must NOT double the residual; this guards the linearity test's
        # premise.
        rng = np.random.default_rng(2)
        weight = rng.normal(size=(5, 4, 3, 3))
        fusion = ZeroInitFusion(weight, np.zeros(5), normalize=True, activate=True)
        features = rng.normal(size=(4, 10, 12))
        r1 = fusion(features)
        r2 = fusion(2.0 * features)
        assert not np.allclose(r2, 2.0 * r1)


class TestConv2d:
    def test_identity_kernel(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(3, 8, 9))
        weight = np.zeros((3, 3, 3, 3))
        for c in range(3):
            weight[c, c, 1, 1] = 1.0
        out = conv2d(x, weight, np.zeros(3))
        np.testing.assert_allclose(out, x)

    def test_bias_only(self):
        x = np.zeros((2, 4, 4))
        out = conv2d(x, np.zeros((3, 2, 1, 1)), np.array([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(out[0], 1.0)
        np.testing.assert_array_equal(out[2], 3.0)

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ValueError):
            conv2d(np.zeros((2, 4, 4)), np.zeros((3, 5, 3, 3)), np.zeros(3))
