"""Frame-to-phoneme SSL reduction: pooling, slice attention, fusion."""

import math

import numpy as np
import pytest
import torch

from phonevc.config import SslConfig
from phonevc.nn.ssl import PhonemeAttention, SslEncoder, fuse_ssl, phoneme_avg_pool

DUR = torch.tensor([8, 9, 5, 10, 33, 10])


def loop_mean_oracle(vec: np.ndarray, durations: np.ndarray) -> np.ndarray:
    """Reference pooling: per-phoneme slice means with an explicit loop."""
    out = np.zeros((vec.shape[0], len(durations)), dtype=vec.dtype)
    start = 0
    for i, d in enumerate(durations):
        out[:, i] = vec[:, start : start + d].mean(axis=1)
        start += d
    return out


class TestPhonemeAvgPool:
    def test_constant_columns_pool_to_that_column(self):
        col = torch.randn(5, 1)
        vec = col.expand(5, 12).contiguous()
        out = phoneme_avg_pool(vec, torch.tensor([3, 4, 5]))
        torch.testing.assert_close(out, col.expand(5, 3))

    def test_reference_shape_256_by_6(self):
        vec = torch.randn(256, 75)
        out = phoneme_avg_pool(vec, DUR)
        assert out.shape == (256, 6)

    def test_matches_loop_oracle_small(self):
        rng = np.random.default_rng(0)
        vec = rng.standard_normal((4, 12))
        durations = np.array([3, 4, 5])
        out = phoneme_avg_pool(torch.from_numpy(vec), torch.from_numpy(durations))
        np.testing.assert_allclose(out.numpy(), loop_mean_oracle(vec, durations), atol=1e-6)

    def test_order_within_slice_is_irrelevant(self):
        rng = np.random.default_rng(1)
        vec = rng.standard_normal((3, 10))
        durations = torch.tensor([4, 6])
        base = phoneme_avg_pool(torch.from_numpy(vec), durations)
        shuffled = vec.copy()
        shuffled[:, 0:4] = shuffled[:, [2, 0, 3, 1]]
        shuffled[:, 4:10] = shuffled[:, [9, 4, 8, 5, 7, 6]]
        out = phoneme_avg_pool(torch.from_numpy(shuffled), durations)
        torch.testing.assert_close(out, base, rtol=0, atol=1e-12)

    def test_sum_mismatch_rejected(self):
        with pytest.raises(ValueError, match="duration sums"):
            phoneme_avg_pool(torch.randn(2, 10), torch.tensor([3, 4]))

    def test_zero_duration_rejected(self):
        with pytest.raises(ValueError):
            phoneme_avg_pool(torch.randn(2, 7), torch.tensor([0, 7]))

    def test_batched_with_padding(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((3, 7))
        b = rng.standard_normal((3, 4))
        vec = torch.zeros(2, 3, 7, dtype=torch.float64)
        vec[0] = torch.from_numpy(a)
        vec[1, :, :4] = torch.from_numpy(b)
        durations = torch.tensor([[3, 4], [4, 0]])
        out = phoneme_avg_pool(vec, durations)
        np.testing.assert_allclose(
            out[0].numpy(), loop_mean_oracle(a, np.array([3, 4])), atol=1e-12
        )
        np.testing.assert_allclose(
            out[1, :, 0].numpy(), b.mean(axis=1), atol=1e-12
        )
        assert torch.count_nonzero(out[1, :, 1]) == 0


class TestPhonemeAttention:
    def make(self, ssl_dim=3, hidden=2, seed=0) -> PhonemeAttention:
        torch.manual_seed(seed)
        return PhonemeAttention(ssl_dim, hidden).eval()

    def test_single_frame_slice_returns_projected_value(self):
        attn = self.make()
        vec = torch.randn(3, 4)
        durations = torch.tensor([1, 3])
        q1 = torch.randn(2, 2)
        q2 = torch.randn(2, 2)
        out1 = attn(q1, vec, durations)
        out2 = attn(q2, vec, durations)
        expected = attn.value_proj(vec.unsqueeze(0)).squeeze(0)[:, 0]
        torch.testing.assert_close(out1[:, 0], expected)
        torch.testing.assert_close(out2[:, 0], expected)  # query-independent

    def test_identical_frames_give_projected_shared_column(self):
        attn = self.make()
        col = torch.randn(3, 1)
        vec = col.expand(3, 5).contiguous()
        out = attn(torch.randn(2, 2), vec, torch.tensor([2, 3]))
        expected = attn.value_proj(col.unsqueeze(0)).squeeze(0).expand(2, 2)
        torch.testing.assert_close(out, expected)

    def test_matches_hand_computed_two_frame_instance(self):
        attn = self.make()
        with torch.no_grad():
            attn.key_proj.weight.copy_(
                torch.tensor([[[0.5], [-1.0], [0.25]], [[1.0], [0.0], [-0.5]]])
            )
            attn.key_proj.bias.copy_(torch.tensor([0.1, -0.2]))
            attn.value_proj.weight.copy_(
                torch.tensor([[[1.0], [2.0], [3.0]], [[-1.0], [0.5], [0.0]]])
            )
            attn.value_proj.bias.copy_(torch.tensor([0.0, 0.3]))
        q = np.array([1.2, -0.7])
        v1, v2 = np.array([0.3, -0.1, 0.8]), np.array([-0.5, 0.9, 0.2])
        K = np.array([[0.5, -1.0, 0.25], [1.0, 0.0, -0.5]])
        V = np.array([[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]])
        bk, bv = np.array([0.1, -0.2]), np.array([0.0, 0.3])
        logits = np.array([q @ (K @ v1 + bk), q @ (K @ v2 + bk)]) / math.sqrt(2)
        weights = np.exp(logits - logits.max())
        weights /= weights.sum()
        expected = weights[0] * (V @ v1 + bv) + weights[1] * (V @ v2 + bv)

        vec = torch.tensor(np.stack([v1, v2], axis=1), dtype=torch.float32)
        out = attn(torch.tensor(q, dtype=torch.float32).unsqueeze(1), vec, torch.tensor([2]))
        np.testing.assert_allclose(out[:, 0].detach().numpy(), expected, atol=1e-6)

    def test_weights_sum_to_one_and_respect_slices(self):
        attn = self.make(ssl_dim=8, hidden=4, seed=3)
        rng = np.random.default_rng(4)
        for _ in range(25):
            n_ph = int(rng.integers(1, 6))
            durations = torch.tensor(rng.integers(1, 5, size=n_ph))
            frames = int(durations.sum())
            vec = torch.randn(8, frames)
            q = torch.randn(4, n_ph)
            _, weights = attn(q, vec, durations, return_weights=True)
            sums = weights.sum(dim=1)
            torch.testing.assert_close(sums, torch.ones(n_ph), rtol=0, atol=1e-6)
            start = 0
            for i, d in enumerate(durations.tolist()):
                outside = torch.cat([weights[i, :start], weights[i, start + d :]])
                assert torch.count_nonzero(outside) == 0
                assert (weights[i, start : start + d] >= 0).all()
                start += d

    def test_query_scaling_preserves_argmax(self):
        attn = self.make(ssl_dim=6, hidden=4, seed=5)
        vec = torch.randn(6, 9)
        durations = torch.tensor([4, 5])
        q = torch.randn(4, 2)
        _, w1 = attn(q, vec, durations, return_weights=True)
        _, w2 = attn(3.5 * q, vec, durations, return_weights=True)
        assert not torch.allclose(w1, w2)  # scaling changes the weights
        start = 0
        for i, d in enumerate(durations.tolist()):
            s1 = w1[i, start : start + d]
            s2 = w2[i, start : start + d]
            assert int(s1.argmax()) == int(s2.argmax())
            start += d

    def test_dimension_mismatches_rejected(self):
        attn = self.make()
        with pytest.raises(ValueError, match="hidden dim"):
            attn(torch.randn(3, 2), torch.randn(3, 4), torch.tensor([1, 3]))
        with pytest.raises(ValueError, match="phoneme count"):
            attn(torch.randn(2, 3), torch.randn(3, 4), torch.tensor([1, 3]))


class TestFusion:
    def test_zero_beta_drops_attention_path(self):
        c_avg, c_att = torch.randn(4, 3), torch.randn(4, 3)
        torch.testing.assert_close(fuse_ssl(c_avg, c_att, 2.0, 0.0), 2.0 * c_avg)

    def test_default_weights_with_equal_inputs(self):
        c = torch.randn(4, 3, dtype=torch.float64)
        out = fuse_ssl(c, c.clone(), alpha=1.0, beta=0.5)
        torch.testing.assert_close(out, 1.5 * c, rtol=0, atol=1e-6)

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(6)
        a, b = rng.standard_normal((3, 5)), rng.standard_normal((3, 5))
        out = fuse_ssl(torch.from_numpy(a), torch.from_numpy(b), 0.7, -1.3)
        np.testing.assert_allclose(out.numpy(), 0.7 * a - 1.3 * b, atol=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            fuse_ssl(torch.randn(2, 3), torch.randn(2, 4), 1.0, 0.5)


class TestSslEncoder:
    def test_end_to_end_shapes_and_fusion_identity(self):
        cfg = SslConfig(alpha=1.0, beta=0.5, input_dim=24, hidden_dim=16)
        torch.manual_seed(7)
        enc = SslEncoder(cfg).eval()
        vec = torch.randn(1, 24, 12)
        c_text = torch.randn(1, 16, 3)
        out = enc(c_text, vec, torch.tensor([[3, 4, 5]]))
        assert out.vec_dur.shape == (1, 24, 3)
        assert out.c_avg.shape == out.c_att.shape == out.c_ssl.shape == (1, 16, 3)
        torch.testing.assert_close(out.c_ssl, 1.0 * out.c_avg + 0.5 * out.c_att)
        assert out.alpha == 1.0 and out.beta == 0.5
