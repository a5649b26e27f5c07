"""Frozen 3-D convolutional encoder from time features to a feature sequence.

A small stand-in for a pretrained video network: four 3x3x3 conv stages
that halve the spatial size and keep the time axis, then a pointwise
projection and spatial global-average pooling.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .data.io import IMAGE_SIZE


@dataclass
class StEncoderConfig:
    widths: tuple[int, ...] = (8, 16, 32, 64)
    out_dim: int = 256
    time_len: int = 18
    image_size: int = IMAGE_SIZE
    seed: int = 0

    def __post_init__(self):
        self.widths = tuple(self.widths)


class StEncoder(nn.Module):
    def __init__(self, cfg: StEncoderConfig | None = None):
        super().__init__()
        self.cfg = cfg or StEncoderConfig()
        convs, c_in = [], 3
        for width in self.cfg.widths:
            convs.append(nn.Conv3d(c_in, width, 3, stride=(1, 2, 2), padding=1))
            c_in = width
        self.stages = nn.ModuleList(convs)
        self.proj = nn.Conv3d(c_in, self.cfg.out_dim, 1)
        # output standardisation; identity until calibrate() is called
        self.register_buffer("out_mean", torch.zeros(self.cfg.out_dim, self.cfg.time_len))
        self.register_buffer("out_scale", torch.ones(self.cfg.out_dim, self.cfg.time_len))

    def raw(self, x: torch.Tensor) -> torch.Tensor:
        for conv in self.stages:
            x = F.leaky_relu(conv(x), 0.2)
        return self.proj(x).mean(dim=(-2, -1))  # (B, D_st, T)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return (self.raw(x) - self.out_mean) / self.out_scale


def freeze(module: nn.Module) -> nn.Module:
    for p in module.parameters():
        p.requires_grad_(False)
    return module.eval()


def build_st_encoder(cfg: StEncoderConfig | None = None) -> StEncoder:
    """Seeded random initialisation, returned frozen."""
    cfg = cfg or StEncoderConfig()
    with torch.random.fork_rng():
        torch.manual_seed(cfg.seed)
        return freeze(StEncoder(cfg))


@torch.no_grad()
def calibrate(model: StEncoder, time_features: torch.Tensor, chunk: int = 4) -> StEncoder:
    """Set the output standardisation from a set of ``B x 3 x T x S x S`` time features.

    Random 3-D features pooled over space differ only slightly between
    images; standardising every (dimension, frame) entry over the corpus
    keeps those differences visible to the generator.
    """
    raw = torch.cat([model.raw(time_features[i:i + chunk]) for i in range(0, len(time_features), chunk)])
    mean = raw.mean(dim=0)
    std = raw.std(dim=0, unbiased=False)
    floor = 1e-6 * float(raw.abs().max()) + 1e-12
    model.out_mean.copy_(mean)
    model.out_scale.copy_(torch.clamp(std, min=floor))
    return model


@torch.no_grad()
def encode_st(model: StEncoder, f) -> torch.Tensor:
    """``D_st x T_st`` features from a ``3 x T x S x S`` time feature (batch optional)."""
    x = torch.as_tensor(f, dtype=next(model.parameters()).dtype)
    single = x.dim() == 4
    if single:
        x = x.unsqueeze(0)
    c = model.cfg
    expected = (3, c.time_len, c.image_size, c.image_size)
    if x.dim() != 5 or tuple(x.shape[1:]) != expected:
        raise ValueError(f"expected time feature of shape {expected}, got {tuple(f.shape)}")
    out = model(x)
    return out[0] if single else out


def pretrain_st_encoder(model: StEncoder, time_features: torch.Tensor, labels: torch.Tensor,
                        epochs: int = 5, lr: float = 1e-3, batch_size: int = 4, seed: int = 0) -> list[float]:
    """Optionally fit the encoder as a category classifier, then freeze it again.

    A throwaway linear head reads the time-averaged raw features.  Returns
    the mean cross-entropy of every epoch.
    """
    gen = torch.Generator().manual_seed(seed)
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        head = nn.Linear(model.cfg.out_dim, int(labels.max()) + 1)
    for p in model.parameters():
        p.requires_grad_(True)
    model.train()
    opt = torch.optim.AdamW(list(model.parameters()) + list(head.parameters()), lr=lr, foreach=False)
    history = []
    for _ in range(epochs):
        order = torch.randperm(len(labels), generator=gen)
        total = 0.0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            loss = F.cross_entropy(head(model.raw(time_features[idx]).mean(-1)), labels[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        history.append(total / len(labels))
    freeze(model)
    return history
