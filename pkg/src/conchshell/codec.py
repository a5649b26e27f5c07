"""Multi-level VQ-VAE waveform codec (stand-in for a pretrained music codec).

Three levels trade temporal resolution for compression: ``high`` keeps one
latent per 128 samples, ``low`` one per 32 and ``deep`` one per 8.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .data import DatasetManifest, load_audio
from .errors import DataError

log = logging.getLogger(__name__)

LEVEL_HOPS = {"high": 128, "low": 32, "deep": 8}


@dataclass(frozen=True)
class CodecLevel:
    name: str
    hop: int
    latent_dim: int

    @classmethod
    def named(cls, name: str, latent_dim: int = 64) -> "CodecLevel":
        key = name.lower()
        if key not in LEVEL_HOPS:
            raise ValueError(f"unknown codec level {name!r}; choose from {sorted(LEVEL_HOPS)}")
        return cls(key, LEVEL_HOPS[key], latent_dim)

    def latent_len(self, n_samples: int) -> int:
        if n_samples % self.hop:
            raise ValueError(f"waveform length {n_samples} is not divisible by hop {self.hop} ({self.name})")
        return n_samples // self.hop


@dataclass
class CodecConfig:
    level: str = "deep"
    channels: int = 32
    latent_dim: int = 64
    codebook_size: int = 512
    beta: float = 0.25
    steps: int = 500
    lr: float = 1e-3
    batch_size: int = 2
    seed: int = 0


class Codec(nn.Module):
    def __init__(self, cfg: CodecConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or CodecConfig()
        self.level = CodecLevel.named(cfg.level, cfg.latent_dim)
        n_down = int(math.log2(self.level.hop))
        c = cfg.channels

        enc = [nn.Conv1d(1, c, 7, padding=3)]
        for _ in range(n_down):
            enc += [nn.LeakyReLU(0.2), nn.Conv1d(c, c, 4, stride=2, padding=1)]
        enc += [nn.LeakyReLU(0.2), nn.Conv1d(c, cfg.latent_dim, 3, padding=1)]
        self.encoder = nn.Sequential(*enc)

        dec = [nn.Conv1d(cfg.latent_dim, c, 3, padding=1)]
        for _ in range(n_down):
            dec += [nn.LeakyReLU(0.2), nn.ConvTranspose1d(c, c, 4, stride=2, padding=1)]
        dec += [nn.LeakyReLU(0.2), nn.Conv1d(c, 1, 7, padding=3)]
        self.decoder = nn.Sequential(*dec)

        # distinct entries by construction (continuous random draw)
        self.codebook = nn.Parameter(torch.empty(cfg.codebook_size, cfg.latent_dim).uniform_(-1.0, 1.0))


def build_codec(cfg: CodecConfig | None = None) -> Codec:
    cfg = cfg or CodecConfig()
    with torch.random.fork_rng():
        torch.manual_seed(cfg.seed)
        return Codec(cfg)


def _batch(x, dtype) -> tuple[torch.Tensor, bool]:
    x = torch.as_tensor(x, dtype=dtype)
    single = x.dim() == 1
    return (x.unsqueeze(0) if single else x), single


def encode(codec: Codec, x) -> torch.Tensor:
    """Waveform ``(L,)`` or ``(B, L)`` -> latents ``(D_lat, L/hop)`` (batched alike)."""
    x, single = _batch(x, codec.codebook.dtype)
    codec.level.latent_len(x.shape[-1])
    z = codec.encoder(x.unsqueeze(1))
    return z[0] if single else z


class _StraightThrough(torch.autograd.Function):
    """Forward returns the quantized values; backward passes the gradient unchanged."""

    @staticmethod
    def forward(ctx, z, q):
        return q.clone()

    @staticmethod
    def backward(ctx, grad):
        return grad, None


def nearest_codes(vectors: torch.Tensor, codebook: torch.Tensor) -> torch.Tensor:
    """Index of the L2-nearest codebook row for every row of ``vectors``.

    Distances are differences, not the expanded dot-product form, so exact
    ties stay ties and argmin resolves them to the lowest index.
    """
    d = torch.cdist(vectors.unsqueeze(0), codebook.unsqueeze(0),
                    compute_mode="donot_use_mm_for_euclid_dist")[0]
    return d.argmin(dim=-1)


def quantize(latents, codebook) -> tuple[torch.Tensor, torch.Tensor]:
    """Map each time step of ``(D, T)`` / ``(B, D, T)`` latents to its nearest entry.

    Returns ``(codes, quantized)``. Gradients reaching ``quantized`` flow to
    ``latents`` as if quantization were the identity.
    """
    if isinstance(codebook, Codec):
        codebook = codebook.codebook
    z = torch.as_tensor(latents)
    single = z.dim() == 2
    if single:
        z = z.unsqueeze(0)
    if z.shape[1] != codebook.shape[1]:
        raise ValueError(f"latent dim {z.shape[1]} does not match codebook dim {codebook.shape[1]}")
    flat = z.transpose(1, 2).reshape(-1, z.shape[1])
    codes = nearest_codes(flat.detach(), codebook.detach()).reshape(z.shape[0], z.shape[2])
    q = F.embedding(codes, codebook).transpose(1, 2)
    out = _StraightThrough.apply(z, q.detach())
    return (codes[0], out[0]) if single else (codes, out)


def codebook_losses(z: torch.Tensor, codes: torch.Tensor, codebook: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """(codebook loss, commitment loss), each a mean squared error."""
    q = F.embedding(codes, codebook).transpose(1, 2)
    return F.mse_loss(q, z.detach()), F.mse_loss(z, q.detach())


def decode(codec: Codec, z) -> torch.Tensor:
    """Latents ``(D_lat, T)`` / ``(B, D_lat, T)`` -> waveform of ``T * hop`` samples in [-1, 1]."""
    z = torch.as_tensor(z, dtype=codec.codebook.dtype)
    single = z.dim() == 2
    if single:
        z = z.unsqueeze(0)
    if z.dim() != 3 or z.shape[1] != codec.level.latent_dim:
        raise ValueError(f"expected latents with {codec.level.latent_dim} channels, got {tuple(z.shape)}")
    x = torch.tanh(codec.decoder(z)).squeeze(1)
    return x[0] if single else x


def load_waveforms(manifest: DatasetManifest, split: str, n_samples: int) -> torch.Tensor:
    items = manifest.split(split)
    if not items:
        raise DataError(f"manifest has an empty {split} split")
    return torch.from_numpy(np.stack([load_audio(manifest.resolve(it.audio_path), n_samples) for it in items]))


@torch.no_grad()
def init_codebook_from_data(codec: Codec, waves: torch.Tensor, seed: int = 0) -> None:
    """Overwrite the codebook with jittered encoder outputs so early steps use many entries."""
    k, d = codec.codebook.shape
    z0 = encode(codec, waves).transpose(1, 2).reshape(-1, d)
    g = torch.Generator().manual_seed(seed)
    pick = torch.randint(len(z0), (k,), generator=g)
    codec.codebook.copy_(z0[pick] + 1e-3 * torch.randn(k, d, generator=g))


def train_codec(manifest: DatasetManifest, cfg: CodecConfig | None = None, n_samples: int = 16000,
                codec: Codec | None = None, waves: torch.Tensor | None = None) -> tuple[Codec, list[float]]:
    """Reconstruction L1 + codebook + beta * commitment training.

    A freshly built codec gets a data-initialised codebook; a codec passed
    in keeps its parameters as the starting point. Returns the codec and
    the per-step reconstruction loss.
    """
    cfg = cfg or CodecConfig()
    if waves is None:
        waves = load_waveforms(manifest, "train", n_samples)
    if len(waves) == 0:
        raise DataError("no training audio")
    if codec is None:
        codec = build_codec(cfg)
        init_codebook_from_data(codec, waves, cfg.seed)
    codec.train()

    opt = torch.optim.AdamW(codec.parameters(), lr=cfg.lr, weight_decay=0.0, foreach=False)
    gen = torch.Generator().manual_seed(cfg.seed + 1)
    history = []
    for step in range(cfg.steps):
        idx = torch.randint(len(waves), (cfg.batch_size,), generator=gen)
        x = waves[idx]
        z = encode(codec, x)
        codes, q = quantize(z, codec.codebook)
        recon = F.l1_loss(decode(codec, q), x)
        cb, commit = codebook_losses(z, codes, codec.codebook)
        loss = recon + cb + cfg.beta * commit
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(recon.item())
        if step % 100 == 0:
            log.info("codec step %d recon %.4f", step, history[-1])
    codec.eval()
    return codec, history
