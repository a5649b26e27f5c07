"""Time-convolutional image classifier and time-feature forging.

The classifier is a stack of six conv blocks. After training, the per-block
activations are collapsed over channels, brought back to image resolution,
and each one is repeated three times along a new time axis, yielding an
18-frame pseudo-video for the spatio-temporal encoder.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .data import DatasetManifest, bilinear_resize, load_image
from .data.io import IMAGE_SIZE
from .errors import DataError

log = logging.getLogger(__name__)

NUM_BLOCKS = 6
NUM_CLASSES = 6
FRAMES_PER_BLOCK = 3


@dataclass
class TcnnConfig:
    widths: tuple[int, ...] = (16, 32, 64, 64, 128, 128)
    convs_per_block: int = 1  # 1 -> TCNN-6, 3 -> TCNN-18
    image_size: int = IMAGE_SIZE
    epochs: int = 30
    batch_size: int = 8
    lr: float = 1e-3
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.widths = tuple(self.widths)
        if len(self.widths) != NUM_BLOCKS:
            raise ValueError(f"TCNN needs exactly {NUM_BLOCKS} block widths, got {len(self.widths)}")


class TcnnModel(nn.Module):
    def __init__(self, cfg: TcnnConfig | None = None):
        super().__init__()
        self.cfg = cfg or TcnnConfig()
        blocks, c_in = [], 3
        for width in self.cfg.widths:
            layers = []
            for _ in range(self.cfg.convs_per_block):
                layers += [nn.Conv2d(c_in, width, 3, padding=1), nn.ReLU()]
                c_in = width
            layers.append(nn.MaxPool2d(2))
            blocks.append(nn.Sequential(*layers))
        self.blocks = nn.ModuleList(blocks)
        self.head = nn.Linear(c_in, NUM_CLASSES)

    def features(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        for block in self.blocks:
            x = block(x)
            feats.append(x)
        return feats

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x)[-1].mean(dim=(-2, -1)))


def build_tcnn(cfg: TcnnConfig | None = None, seed: int | None = None) -> TcnnModel:
    cfg = cfg or TcnnConfig()
    with torch.random.fork_rng():
        torch.manual_seed(cfg.seed if seed is None else seed)
        return TcnnModel(cfg)


def _batched(model: TcnnModel, image) -> tuple[torch.Tensor, bool]:
    x = torch.as_tensor(image, dtype=next(model.parameters()).dtype)
    single = x.dim() == 3
    if single:
        x = x.unsqueeze(0)
    s = model.cfg.image_size
    if x.dim() != 4 or tuple(x.shape[1:]) != (3, s, s):
        raise ValueError(f"expected image of shape (3, {s}, {s}), got {tuple(image.shape)}")
    return x, single


@torch.no_grad()
def classify(model: TcnnModel, image) -> torch.Tensor:
    """Class probabilities (softmax over 6 logits) for one image or a batch."""
    x, single = _batched(model, image)
    probs = F.softmax(model(x), dim=-1)
    return probs[0] if single else probs


@torch.no_grad()
def extract_block_features(model: TcnnModel, image) -> list[torch.Tensor]:
    """Activations output by each of the six blocks."""
    x, single = _batched(model, image)
    feats = model.features(x)
    return [f[0] for f in feats] if single else feats


def forge_time_feature(features, size: int = IMAGE_SIZE) -> torch.Tensor:
    """Stack six block activations into a ``3 x 18 x size x size`` time feature.

    Each ``C x H x W`` map is averaged over channels, bilinearly resized to
    ``size x size``, copied to three colour channels, and appended three
    times along the time axis. Batched ``B x C x H x W`` maps give a leading
    batch dimension in the output.
    """
    features = list(features)
    if len(features) != NUM_BLOCKS:
        raise ValueError(f"expected {NUM_BLOCKS} feature maps, got {len(features)}")
    frames = []
    for f in features:
        f = torch.as_tensor(f)
        if f.dim() not in (3, 4):
            raise ValueError(f"feature map must be C x H x W (optionally batched), got {tuple(f.shape)}")
        frame = bilinear_resize(f.mean(dim=-3), (size, size))  # (..., S, S)
        frame = frame.unsqueeze(-3).unsqueeze(-3).expand(*frame.shape[:-2], 3, 1, size, size)
        frames += [frame] * FRAMES_PER_BLOCK
    return torch.cat(frames, dim=-3).contiguous()


def time_features_for_images(model: TcnnModel, images, size: int | None = None) -> torch.Tensor:
    size = size or model.cfg.image_size
    return forge_time_feature(extract_block_features(model, images), size)


def _load_split(manifest: DatasetManifest, split: str, size: int):
    items = manifest.split(split)
    if not items:
        raise DataError(f"manifest has an empty {split} split")
    images = np.stack([load_image(manifest.resolve(it.image_path), size) for it in items])
    labels = np.array([it.category_id for it in items], dtype=np.int64)
    return torch.from_numpy(images), torch.from_numpy(labels)


def accuracy(model: TcnnModel, images: torch.Tensor, labels: torch.Tensor) -> float:
    return float((classify(model, images).argmax(-1) == labels).float().mean())


def train_tcnn(manifest: DatasetManifest, cfg: TcnnConfig | None = None,
               model: TcnnModel | None = None) -> tuple[TcnnModel, list[float]]:
    """Cross-entropy training on the manifest's train split.

    Returns the model and the mean loss of every epoch.
    """
    cfg = cfg or TcnnConfig()
    images, labels = _load_split(manifest, "train", cfg.image_size)
    model = model or build_tcnn(cfg)
    model.train()
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay, foreach=False)
    gen = torch.Generator().manual_seed(cfg.seed)
    history = []
    for epoch in range(cfg.epochs):
        order = torch.randperm(len(images), generator=gen)
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss = F.cross_entropy(model(images[idx]), labels[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        history.append(total / len(images))
        log.info("tcnn epoch %d loss %.4f", epoch, history[-1])
    model.eval()
    return model, history
