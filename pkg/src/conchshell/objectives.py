"""Adversarial, feature-matching and perceptual losses and their weighted total."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import torch

from . import dsp
from .errors import NumericError

NUM_SCALES = 3


@dataclass(frozen=True)
class LossWeights:
    lambda_g: float = 0.5
    lambda_fm: float = 3.0
    lambda_w: float = 40.0
    lambda_m: float = 15.0

    def __post_init__(self):
        for name, v in asdict(self).items():
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")


@dataclass(frozen=True)
class LossReport:
    l_d: float
    l_g: float
    l_fm: float
    l_wave: float
    l_mel: float
    l_cs: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def _scores(scores, name: str) -> list[torch.Tensor]:
    scores = [torch.as_tensor(s, dtype=torch.float64) if not isinstance(s, torch.Tensor) else s for s in scores]
    if len(scores) != NUM_SCALES:
        raise ValueError(f"{name}: expected {NUM_SCALES} discriminator scores, got {len(scores)}")
    for s in scores:
        if not torch.isfinite(s).all():
            raise NumericError(f"{name}: non-finite discriminator score")
    return scores


def disc_loss(real_scores: Sequence, fake_scores: Sequence) -> torch.Tensor:
    """Hinge loss: sum over scales of E[relu(1 - real)] + E[relu(1 + fake)]."""
    real = _scores(real_scores, "real_scores")
    fake = _scores(fake_scores, "fake_scores")
    return sum(torch.relu(1 - r).mean() + torch.relu(1 + f).mean() for r, f in zip(real, fake))


def gen_loss(fake_scores: Sequence) -> torch.Tensor:
    """Sum over scales of E[-fake]."""
    return sum(-f.mean() for f in _scores(fake_scores, "fake_scores"))


def feature_matching_loss(real_feats: Sequence[Sequence], fake_feats: Sequence[Sequence]) -> torch.Tensor:
    """Mean over scales of the sum over layers of per-layer mean absolute error."""
    if len(real_feats) != len(fake_feats) or not real_feats:
        raise ValueError(f"scale count mismatch: {len(real_feats)} vs {len(fake_feats)}")
    per_scale = []
    for k, (rs, fs) in enumerate(zip(real_feats, fake_feats)):
        if len(rs) != len(fs):
            raise ValueError(f"scale {k}: layer count mismatch {len(rs)} vs {len(fs)}")
        total = 0
        for i, (r, f) in enumerate(zip(rs, fs)):
            r, f = torch.as_tensor(r), torch.as_tensor(f)
            if r.shape != f.shape:
                raise ValueError(f"scale {k} layer {i}: shape mismatch {tuple(r.shape)} vs {tuple(f.shape)}")
            total = total + (r - f).abs().mean()
        per_scale.append(total)
    return sum(per_scale) / len(per_scale)


def _pair(x, y):
    x, y = torch.as_tensor(x), torch.as_tensor(y)
    if x.shape != y.shape:
        raise ValueError(f"waveform length mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    return x, y


def wave_loss(x_g, x_hat) -> torch.Tensor:
    """Mean absolute sample difference."""
    x, y = _pair(x_g, x_hat)
    return (x - y).abs().mean()


def mel_loss(x_g, x_hat) -> torch.Tensor:
    """Mean absolute difference of log-mel spectrograms."""
    x, y = _pair(x_g, x_hat)
    return (dsp.mel(x) - dsp.mel(y)).abs().mean()


PART_NAMES = ("l_g", "l_fm", "l_wave", "l_mel")


def _scalar(v) -> float:
    return float(v.detach()) if isinstance(v, torch.Tensor) else float(v)


def _check_parts(parts: Mapping) -> None:
    for name, v in parts.items():
        if not math.isfinite(_scalar(v)):
            raise NumericError(f"non-finite loss term {name}")


def weighted_total(parts: Mapping, w: LossWeights = LossWeights()):
    """Generator objective as a differentiable expression of the part tensors."""
    _check_parts(parts)
    return (w.lambda_g * parts["l_g"] + w.lambda_fm * parts["l_fm"]
            + w.lambda_w * parts["l_wave"] + w.lambda_m * parts["l_mel"])


def total_loss(parts: Mapping, w: LossWeights = LossWeights()) -> LossReport:
    """Report all terms plus ``l_cs``, the weighted sum of the generator terms."""
    _check_parts(parts)
    vals = {k: _scalar(parts.get(k, 0.0)) for k in ("l_d",) + PART_NAMES}
    l_cs = (w.lambda_g * vals["l_g"] + w.lambda_fm * vals["l_fm"]
            + w.lambda_w * vals["l_wave"] + w.lambda_m * vals["l_mel"])
    return LossReport(l_cs=l_cs, **vals)
