import numpy as np
import pytest
import torch

from conchshell.st_encoder import (StEncoderConfig, build_st_encoder, calibrate, encode_st, freeze,
                                   pretrain_st_encoder)

from conftest import zero_biases
from oracles import conv3d, leaky

TINY = StEncoderConfig(widths=(2, 3, 2, 2), out_dim=4, image_size=16)


def test_paper_shape():
    enc = build_st_encoder()
    out = encode_st(enc, torch.rand(3, 18, 224, 224, generator=torch.Generator().manual_seed(0)))
    assert out.shape == (256, 18)


def test_batched_shape():
    enc = build_st_encoder(TINY)
    assert encode_st(enc, torch.zeros(2, 3, 18, 16, 16)).shape == (2, 4, 18)


def test_wrong_shape_rejected():
    with pytest.raises(ValueError):
        encode_st(build_st_encoder(TINY), torch.zeros(3, 17, 16, 16))


def test_zero_input_zero_output_without_bias():
    enc = zero_biases(build_st_encoder(TINY))
    assert not encode_st(enc, torch.zeros(3, 18, 16, 16)).any()


def test_matches_nested_loop_conv3d():
    enc = build_st_encoder(TINY).double()
    x = torch.rand(3, 18, 16, 16, generator=torch.Generator().manual_seed(1), dtype=torch.float64)
    ref = x.numpy()
    for conv in enc.stages:
        ref = leaky(conv3d(ref, conv.weight.numpy(), conv.bias.numpy(), stride=(1, 2, 2), pad=1))
    w = enc.proj.weight.numpy()[:, :, 0, 0, 0]
    ref = np.einsum("oc,cthw->othw", w, ref) + enc.proj.bias.numpy()[:, None, None, None]
    np.testing.assert_allclose(encode_st(enc, x).numpy(), ref.mean(axis=(-2, -1)), atol=1e-10)


def test_seeded_and_frozen():
    a, b = build_st_encoder(TINY), build_st_encoder(TINY)
    for p, q in zip(a.parameters(), b.parameters()):
        assert torch.equal(p, q) and not p.requires_grad
    assert not a.training


def test_frozen_weights_survive_an_optimizer_step():
    enc = build_st_encoder(TINY)
    head = torch.nn.Linear(4, 1)
    before = [p.clone() for p in enc.parameters()]
    opt = torch.optim.AdamW(list(head.parameters()) + list(enc.parameters()), lr=0.1)
    x = torch.rand(2, 3, 18, 16, 16)
    head(enc(x).mean(-1)).sum().backward()
    opt.step()
    for p, q in zip(enc.parameters(), before):
        assert torch.equal(p, q)


def test_calibrate_standardises():
    # raw outputs differ only slightly between images, so check in double
    enc = build_st_encoder(TINY).double()
    x = torch.rand(6, 3, 18, 16, 16, generator=torch.Generator().manual_seed(2), dtype=torch.float64)
    calibrate(enc, x)
    out = enc(x)
    assert torch.allclose(out.mean(0), torch.zeros(4, 18, dtype=torch.float64), atol=1e-9)
    assert torch.allclose(out.std(0, unbiased=False), torch.ones(4, 18, dtype=torch.float64), atol=1e-9)


def test_calibrate_constant_inputs_stay_finite():
    enc = build_st_encoder(TINY)
    calibrate(enc, torch.ones(3, 3, 18, 16, 16))
    assert torch.isfinite(enc(torch.rand(1, 3, 18, 16, 16))).all()


def test_pretrain_lowers_loss_then_freezes():
    enc = build_st_encoder(TINY)
    g = torch.Generator().manual_seed(3)
    labels = torch.tensor([0, 1, 0, 1, 0, 1, 0, 1])
    x = torch.rand(8, 3, 18, 16, 16, generator=g) + labels.view(-1, 1, 1, 1, 1).float()
    history = pretrain_st_encoder(enc, x, labels, epochs=15, lr=1e-2)
    assert history[-1] < history[0]
    assert all(not p.requires_grad for p in enc.parameters()) and not enc.training


def test_freeze_returns_eval_module():
    m = freeze(torch.nn.Linear(2, 2).train())
    assert not m.training and not m.weight.requires_grad
