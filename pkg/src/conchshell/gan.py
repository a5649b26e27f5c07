"""Latent-space generator and three-scale discriminator.

The generator maps the encoder's feature sequence to a codec latent
sequence: pointwise input projection, linear time interpolation to a base
rate, a residual stack of wide kernels (up to 40 taps), a learned dense
projection from the base rate to the full latent length, a short
dilated residual stack and a pointwise projection to the latent dimension.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .codec import LEVEL_HOPS

# channel width per codec level; deeper levels emit longer sequences
GEN_PRESETS = {
    "high": {"hidden": 64},
    "low": {"hidden": 96},
    "deep": {"hidden": 128},
}
NUM_SCALES = 3


@dataclass
class GeneratorConfig:
    level: str = "deep"
    n_samples: int = 128000
    st_dim: int = 256
    st_len: int = 18
    latent_dim: int = 64
    hidden: int | None = None
    base_len: int = 128  # time steps before the dense time projection
    kernels: tuple[int, ...] = (40, 21, 9)
    seed: int = 0

    def __post_init__(self):
        preset = GEN_PRESETS[self.level.lower()]
        self.level = self.level.lower()
        if self.hidden is None:
            self.hidden = preset["hidden"]
        self.kernels = tuple(self.kernels)
        if self.n_samples % LEVEL_HOPS[self.level]:
            raise ValueError(f"{self.n_samples} samples not divisible by hop {LEVEL_HOPS[self.level]}")
        if self.base_len < 1:
            raise ValueError("base_len must be positive")

    @property
    def latent_len(self) -> int:
        return self.n_samples // LEVEL_HOPS[self.level]


class SameConv1d(nn.Conv1d):
    """Stride-1 convolution padded to keep the length; even kernels pad one extra on the right."""

    def forward(self, x):
        total = self.dilation[0] * (self.kernel_size[0] - 1)
        return super().forward(F.pad(x, (total // 2, total - total // 2)))


class ResidualStack(nn.Module):
    """``x <- x + conv_k(lrelu(x))`` for each kernel size, length preserving."""

    def __init__(self, channels: int, kernels, dilations=None):
        super().__init__()
        dilations = dilations or [1] * len(kernels)
        self.convs = nn.ModuleList(
            SameConv1d(channels, channels, k, dilation=d) for k, d in zip(kernels, dilations)
        )

    def forward(self, x):
        for conv in self.convs:
            x = x + conv(F.leaky_relu(x, 0.2))
        return x


class Generator(nn.Module):
    def __init__(self, cfg: GeneratorConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or GeneratorConfig()
        h = cfg.hidden
        self.in_proj = nn.Conv1d(cfg.st_dim, h, 1)
        self.body = ResidualStack(h, cfg.kernels)
        # every output step sees the whole base sequence, which lets each
        # item place its own phase; a transposed-conv stack fits far slower
        self.time_proj = nn.Linear(cfg.base_len, cfg.latent_len)
        self.post = ResidualStack(h, (3, 3), (1, 3))
        self.out_proj = nn.Conv1d(h, cfg.latent_dim, 1)

    def forward(self, st: torch.Tensor) -> torch.Tensor:
        x = self.in_proj(st)
        x = F.interpolate(x, size=self.cfg.base_len, mode="linear", align_corners=False)
        x = self.post(self.time_proj(self.body(x)))
        return self.out_proj(F.leaky_relu(x, 0.2))


@dataclass
class DiscriminatorConfig:
    latent_dim: int = 64
    channels: tuple[int, ...] = (64, 128, 128)
    num_scales: int = NUM_SCALES
    seed: int = 1

    def __post_init__(self):
        self.channels = tuple(self.channels)


class SubDiscriminator(nn.Module):
    def __init__(self, latent_dim: int, channels):
        super().__init__()
        c0, c1, c2 = channels
        self.layers = nn.ModuleList([
            nn.Conv1d(latent_dim, c0, 5, padding=2),
            nn.Conv1d(c0, c1, 9, stride=2, padding=4),
            nn.Conv1d(c1, c2, 9, stride=2, padding=4),
            nn.Conv1d(c2, c2, 5, padding=2),
        ])
        self.post = nn.Conv1d(c2, 1, 3, padding=1)

    def forward(self, z):
        feats = []
        for layer in self.layers:
            z = F.leaky_relu(layer(z), 0.2)
            feats.append(z)
        return self.post(z).mean(dim=(1, 2)), feats


class MultiScaleDiscriminator(nn.Module):
    """Scale k sees the input average-pooled over time by ``2 ** (k - 1)``."""

    def __init__(self, cfg: DiscriminatorConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or DiscriminatorConfig()
        self.discriminators = nn.ModuleList(
            SubDiscriminator(cfg.latent_dim, cfg.channels) for _ in range(cfg.num_scales)
        )

    def scale_inputs(self, z: torch.Tensor) -> list[torch.Tensor]:
        footprint = 2 ** (self.cfg.num_scales - 1)
        if z.shape[-1] < footprint:
            raise ValueError(f"latent length {z.shape[-1]} is shorter than the pooling footprint {footprint}")
        return [z if k == 0 else F.avg_pool1d(z, 2 ** k) for k in range(self.cfg.num_scales)]

    def forward(self, z: torch.Tensor):
        return [d(x) for d, x in zip(self.discriminators, self.scale_inputs(z))]


def _seeded(cls, cfg):
    with torch.random.fork_rng():
        torch.manual_seed(cfg.seed)
        return cls(cfg)


def build_generator(cfg: GeneratorConfig | None = None) -> Generator:
    return _seeded(Generator, cfg or GeneratorConfig())


def build_discriminator(cfg: DiscriminatorConfig | None = None) -> MultiScaleDiscriminator:
    return _seeded(MultiScaleDiscriminator, cfg or DiscriminatorConfig())


def generate(g: Generator, st) -> torch.Tensor:
    """Feature sequence ``(D_st, T_st)`` (batch optional) -> latents ``(D_lat, T_lat)``."""
    x = torch.as_tensor(st, dtype=g.in_proj.weight.dtype)
    single = x.dim() == 2
    if single:
        x = x.unsqueeze(0)
    expected = (g.cfg.st_dim, g.cfg.st_len)
    if x.dim() != 3 or tuple(x.shape[1:]) != expected:
        raise ValueError(f"expected features of shape {expected}, got {tuple(st.shape)}")
    out = g(x)
    return out[0] if single else out


def discriminate(d: MultiScaleDiscriminator, z):
    """Per scale, ``(score, layer_features)``; scores are raw (no sigmoid)."""
    z = torch.as_tensor(z, dtype=d.discriminators[0].post.weight.dtype)
    single = z.dim() == 2
    if single:
        z = z.unsqueeze(0)
    if z.dim() != 3 or z.shape[1] != d.cfg.latent_dim:
        raise ValueError(f"expected latents with {d.cfg.latent_dim} channels, got {tuple(z.shape)}")
    outs = d(z)
    if single:
        outs = [(s[0], [f[0] for f in feats]) for s, feats in outs]
    return outs


def model_stats(model: nn.Module) -> int:
    """Number of scalar parameters registered on ``model``."""
    return sum(p.numel() for p in model.parameters())
