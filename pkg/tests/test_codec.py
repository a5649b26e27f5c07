import numpy as np
import pytest
import torch

from conchshell.codec import (CodecConfig, CodecLevel, build_codec, codebook_losses, decode, encode, nearest_codes,
                              quantize, train_codec)

from conftest import zero_biases
from oracles import brute_nearest

SMALL = dict(channels=8, codebook_size=32)


@pytest.mark.parametrize("level,length,steps", [("deep", 128000, 16000), ("high", 128000, 1000),
                                                ("low", 16000, 500), ("high", 16000, 125)])
def test_latent_lengths(level, length, steps):
    codec = build_codec(CodecConfig(level=level, **SMALL))
    z = encode(codec, torch.zeros(length))
    assert z.shape == (64, steps)
    assert decode(codec, z).shape == (length,)


def test_level_names():
    assert CodecLevel.named("Deep").hop == 8
    with pytest.raises(ValueError):
        CodecLevel.named("medium")


def test_indivisible_length_rejected():
    with pytest.raises(ValueError, match="not divisible"):
        encode(build_codec(CodecConfig(level="high", **SMALL)), torch.zeros(1000))


def test_zero_in_zero_out_without_bias():
    codec = zero_biases(build_codec(CodecConfig(**SMALL)))
    z = encode(codec, torch.zeros(256))
    assert not z.any()
    assert not decode(codec, z).any()


def test_decode_rejects_wrong_channels():
    with pytest.raises(ValueError):
        decode(build_codec(CodecConfig(**SMALL)), torch.zeros(3, 10))


def test_codebook_member_maps_to_itself():
    cb = build_codec(CodecConfig(**SMALL)).codebook.detach()
    codes, q = quantize(cb[17].view(64, 1).repeat(1, 3), cb)
    assert codes.tolist() == [17, 17, 17]
    assert torch.equal(q[:, 0], cb[17])


def test_nearest_matches_brute_force():
    g = torch.Generator().manual_seed(0)
    cb = torch.randn(40, 8, generator=g, dtype=torch.float64)
    z = torch.randn(100, 8, generator=g, dtype=torch.float64)
    np.testing.assert_array_equal(nearest_codes(z, cb).numpy(), brute_nearest(z, cb))


def test_exact_tie_picks_lowest_index():
    cb = torch.tensor([[5.0, 5.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    codes, _ = quantize(torch.zeros(2, 4), cb)
    assert codes.tolist() == [1, 1, 1, 1]


def test_quantized_values_are_codebook_rows():
    cb = torch.randn(16, 4, generator=torch.Generator().manual_seed(1))
    codes, q = quantize(torch.randn(2, 4, 7), cb)
    assert torch.equal(q, cb[codes].transpose(1, 2))


def test_straight_through_gradient():
    cb = torch.randn(16, 4)
    z = torch.randn(4, 9, requires_grad=True)
    w = torch.randn(4, 9)
    _, q = quantize(z, cb)
    (q * w).sum().backward()
    assert torch.equal(z.grad, w)


def test_codebook_losses_are_mse():
    cb = torch.randn(8, 4, requires_grad=True)
    z = torch.randn(1, 4, 5, requires_grad=True)
    codes, _ = quantize(z, cb)
    cbl, commit = codebook_losses(z, codes, cb)
    ref = ((cb[codes[0]].T - z[0]) ** 2).mean()
    assert torch.allclose(cbl, ref) and torch.allclose(commit, ref)
    commit.backward()
    assert cb.grad is None or not cb.grad.any()


def test_training_lowers_reconstruction(manifest):
    cfg = CodecConfig(channels=16, codebook_size=64, steps=120)
    _, history = train_codec(manifest, cfg, n_samples=16000)
    assert len(history) == 120
    assert np.mean(history[-10:]) < np.mean(history[:10])


def test_training_deterministic(manifest):
    cfg = CodecConfig(channels=8, codebook_size=16, steps=5)
    a, ha = train_codec(manifest, cfg, n_samples=4096)
    b, hb = train_codec(manifest, cfg, n_samples=4096)
    assert ha == hb
    assert torch.equal(a.codebook, b.codebook)
