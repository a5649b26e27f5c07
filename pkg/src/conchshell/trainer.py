"""Adversarial training loop: one discriminator step then one generator step per batch."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import codec as codec_mod
from .codec import Codec
from .data import DatasetManifest, load_audio, load_image
from .errors import DataError, NumericError
from .gan import Generator, MultiScaleDiscriminator, discriminate, generate
from .objectives import (LossWeights, disc_loss, feature_matching_loss, gen_loss, mel_loss,
                         total_loss, wave_loss, weighted_total)
from .optim import OptimizerConfig, lr_at_step, make_adamw, set_lr
from .st_encoder import StEncoder, encode_st, freeze
from .store import save_gan
from .tcnn import TcnnModel, time_features_for_images

log = logging.getLogger(__name__)


@dataclass
class GanTrainConfig:
    steps: int = 200
    checkpoint_every: int = 0  # 0: final checkpoint only
    max_items: int | None = None  # cap on training pairs (fixture smoke runs)
    seed: int = 0
    optim: OptimizerConfig = field(default_factory=OptimizerConfig)
    weights: LossWeights = field(default_factory=LossWeights)


def parameter_digest(module: torch.nn.Module) -> str:
    h = hashlib.sha256()
    for name, t in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


@torch.no_grad()
def conditioning_features(tcnn: TcnnModel, st_enc: StEncoder, images: torch.Tensor,
                          chunk: int = 4) -> torch.Tensor:
    """Image batch -> encoder feature sequences ``(B, D_st, T_st)``."""
    out = []
    for start in range(0, len(images), chunk):
        f = time_features_for_images(tcnn, images[start:start + chunk], st_enc.cfg.image_size)
        out.append(encode_st(st_enc, f))
    return torch.cat(out)


@torch.no_grad()
def target_latents(codec: Codec, waves: torch.Tensor) -> torch.Tensor:
    """Quantized codec embeddings of the ground-truth audio."""
    return codec_mod.quantize(codec_mod.encode(codec, waves), codec.codebook)[1]


def _finite(step: int, **terms) -> None:
    for name, v in terms.items():
        v = float(v.detach()) if isinstance(v, torch.Tensor) else float(v)
        if not math.isfinite(v):
            raise NumericError(f"non-finite {name} at step {step}: {v}")


@dataclass
class GanRun:
    records: list[dict]
    checkpoints: list[Path]


def train_gan(manifest: DatasetManifest, tcnn: TcnnModel, st_enc: StEncoder, codec: Codec,
              g: Generator, d: MultiScaleDiscriminator, cfg: GanTrainConfig | None = None,
              out_dir=None, checkpoint_extra: dict | None = None) -> GanRun:
    """Train ``g`` and ``d`` in place against frozen upstream modules.

    Writes ``logs/gan.jsonl`` (one record per step) and checkpoints under
    ``out_dir`` when given.
    """
    cfg = cfg or GanTrainConfig()
    items = manifest.train[: cfg.max_items] if cfg.max_items else manifest.train
    if not items:
        raise DataError("manifest has an empty train split")
    for m in (tcnn, st_enc, codec):
        freeze(m)
    n_samples = g.cfg.n_samples
    if codec.level.name != g.cfg.level:
        raise ValueError(f"generator level {g.cfg.level!r} does not match codec level {codec.level.name!r}")

    images = torch.from_numpy(np.stack([load_image(manifest.resolve(it.image_path), tcnn.cfg.image_size)
                                        for it in items]))
    waves = torch.from_numpy(np.stack([load_audio(manifest.resolve(it.audio_path), n_samples) for it in items]))
    # upstream modules are frozen, so their outputs are fixed per item
    st_all = conditioning_features(tcnn, st_enc, images)
    vq_real = target_latents(codec, waves)

    oc = cfg.optim
    opt_g = make_adamw(g.parameters(), oc)
    opt_d = make_adamw(d.parameters(), oc)
    gen = torch.Generator().manual_seed(cfg.seed)
    g.train()
    d.train()

    out_dir = Path(out_dir) if out_dir is not None else None
    log_file = None
    if out_dir is not None:
        (out_dir / "logs").mkdir(parents=True, exist_ok=True)
        log_file = open(out_dir / "logs" / "gan.jsonl", "w", encoding="utf-8")
    ckpts: list[Path] = []

    def checkpoint(step: int, name: str) -> None:
        if out_dir is None:
            return
        path = out_dir / "checkpoints" / name
        save_gan(path, g, d, st_enc, step, checkpoint_extra)
        ckpts.append(path)

    records = []
    order = torch.randperm(len(items), generator=gen)
    cursor = 0

    def next_batch() -> torch.Tensor:
        nonlocal order, cursor
        idx = []
        while len(idx) < oc.batch_size:
            if cursor == len(order):
                order, cursor = torch.randperm(len(items), generator=gen), 0
            idx.append(int(order[cursor]))
            cursor += 1
        return torch.tensor(idx)

    try:
        for step in range(cfg.steps):
            lr_g, lr_d = lr_at_step("generator", step, oc), lr_at_step("discriminator", step, oc)
            set_lr(opt_g, lr_g)
            set_lr(opt_d, lr_d)
            batches = [next_batch() for _ in range(oc.grad_accum)]

            opt_d.zero_grad()
            l_d_total = 0.0
            for idx in batches:
                with torch.no_grad():
                    fake = generate(g, st_all[idx])
                real_out = discriminate(d, vq_real[idx])
                fake_out = discriminate(d, fake)
                l_d = disc_loss([s for s, _ in real_out], [s for s, _ in fake_out])
                _finite(step, l_d=l_d)
                (l_d / oc.grad_accum).backward()
                l_d_total += l_d.item() / oc.grad_accum
            opt_d.step()

            opt_g.zero_grad()
            parts_acc = dict.fromkeys(("l_g", "l_fm", "l_wave", "l_mel"), 0.0)
            for idx in batches:
                fake = generate(g, st_all[idx])
                fake_out = discriminate(d, fake)
                with torch.no_grad():
                    real_out = discriminate(d, vq_real[idx])
                x_hat = codec_mod.decode(codec, fake)
                parts = {
                    "l_g": gen_loss([s for s, _ in fake_out]),
                    "l_fm": feature_matching_loss([f for _, f in real_out], [f for _, f in fake_out]),
                    "l_wave": wave_loss(waves[idx], x_hat),
                    "l_mel": mel_loss(waves[idx], x_hat),
                }
                _finite(step, **parts)
                (weighted_total(parts, cfg.weights) / oc.grad_accum).backward()
                for k, v in parts.items():
                    parts_acc[k] += v.item() / oc.grad_accum
            opt_g.step()

            report = total_loss({"l_d": l_d_total, **parts_acc}, cfg.weights)
            record = {"step": step, "lr_g": lr_g, "lr_d": lr_d, **report.as_dict()}
            records.append(record)
            if log_file is not None:
                log_file.write(json.dumps(record) + "\n")
            if step % 20 == 0:
                log.info("gan step %d l_d %.4f l_cs %.4f l_wave %.4f", step, report.l_d, report.l_cs, report.l_wave)
            if cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0 and step + 1 < cfg.steps:
                checkpoint(step + 1, f"gan-step{step + 1:07d}.ckpt")
    finally:
        if log_file is not None:
            log_file.close()
    g.eval()
    d.eval()
    checkpoint(cfg.steps, "gan.ckpt")
    return GanRun(records, ckpts)
