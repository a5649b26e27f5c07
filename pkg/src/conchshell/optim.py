"""Optimizer settings, the step-decay learning-rate schedule and seeding."""
from __future__ import annotations

import random
from dataclasses import dataclass
from decimal import Decimal

import numpy as np
import torch

ROLES = ("generator", "discriminator")


@dataclass
class OptimizerConfig:
    beta1: float = 0.5
    beta2: float = 0.999
    weight_decay: float = 0.01
    lr0: float = 1e-5
    gen_decay: float = 0.8
    disc_decay: float = 0.9
    decay_every: int = 20000
    batch_size: int = 2
    grad_accum: int = 1

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if not self.lr0 > 0:
            raise ValueError("lr0 must be positive")
        for d in (self.gen_decay, self.disc_decay):
            if not 0 < d <= 1:
                raise ValueError("decay factors must lie in (0, 1]")
        if self.decay_every <= 0 or self.batch_size <= 0 or self.grad_accum <= 0:
            raise ValueError("decay_every, batch_size and grad_accum must be positive")


def lr_at_step(role: str, step: int, cfg: OptimizerConfig) -> float:
    """``lr0 * decay ** (step // decay_every)`` for the given role.

    Evaluated in decimal so that e.g. 1e-5 * 0.8 yields the double nearest
    8e-6 rather than accumulating binary rounding error.
    """
    if step < 0:
        raise ValueError("step must be non-negative")
    if role not in ROLES:
        raise ValueError(f"role must be one of {ROLES}, got {role!r}")
    decay = cfg.gen_decay if role == "generator" else cfg.disc_decay
    k = step // cfg.decay_every
    return float(Decimal(repr(cfg.lr0)) * Decimal(repr(decay)) ** k)


def make_adamw(params, cfg: OptimizerConfig, lr: float | None = None) -> torch.optim.AdamW:
    return torch.optim.AdamW(
        params,
        lr=cfg.lr0 if lr is None else lr,
        betas=(cfg.beta1, cfg.beta2),
        weight_decay=cfg.weight_decay,
        foreach=False,
    )


def set_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr


def seed_everything(seed: int, deterministic: bool = True) -> torch.Generator:
    """Seed python/numpy/torch and pin torch to single-threaded deterministic kernels."""
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True)
        torch.set_num_threads(1)
    gen = torch.Generator()
    gen.manual_seed(seed)
    return gen
