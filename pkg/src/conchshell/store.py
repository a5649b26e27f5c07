"""Save and restore each pipeline stage through the checkpoint container."""
from __future__ import annotations

from dataclasses import asdict
from pathlib import Path

import torch

from .checkpoint import Checkpoint, arrays_from_modules, load_checkpoint, save_checkpoint
from .codec import Codec, CodecConfig
from .errors import CheckpointError
from .gan import DiscriminatorConfig, Generator, GeneratorConfig, MultiScaleDiscriminator
from .st_encoder import StEncoder, StEncoderConfig, freeze
from .tcnn import TcnnConfig, TcnnModel


def _restore(module: torch.nn.Module, ckpt: Checkpoint, prefix: str, path) -> None:
    state = ckpt.state_dict(prefix + ".")
    try:
        module.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: arrays do not match the {prefix} architecture: {exc}") from exc


def _read(path, kind: str) -> Checkpoint:
    ckpt = load_checkpoint(path)
    if ckpt.kind != kind:
        raise CheckpointError(f"{path}: expected a {kind} checkpoint, found {ckpt.kind!r}")
    return ckpt


def save_tcnn(path, model: TcnnModel, step: int = 0, extra: dict | None = None) -> None:
    save_checkpoint(Checkpoint(arrays_from_modules(tcnn=model), step, "tcnn",
                               {"tcnn": asdict(model.cfg), **(extra or {})}), path)


def load_tcnn(path) -> TcnnModel:
    ckpt = _read(path, "tcnn")
    model = TcnnModel(TcnnConfig(**ckpt.config["tcnn"]))
    _restore(model, ckpt, "tcnn", path)
    return freeze(model)


def save_codec(path, codec: Codec, step: int = 0, extra: dict | None = None) -> None:
    cfg = asdict(codec.cfg)
    meta = {"codec": cfg, "level": codec.level.name, "hop": codec.level.hop,
            "codebook_size": cfg["codebook_size"], "latent_dim": cfg["latent_dim"], **(extra or {})}
    save_checkpoint(Checkpoint(arrays_from_modules(codec=codec), step, "codec", meta), path)


def load_codec(path) -> Codec:
    ckpt = _read(path, "codec")
    codec = Codec(CodecConfig(**ckpt.config["codec"]))
    _restore(codec, ckpt, "codec", path)
    return freeze(codec)


def save_gan(path, g: Generator, d: MultiScaleDiscriminator, st_enc: StEncoder, step: int = 0,
             extra: dict | None = None) -> None:
    meta = {"generator": asdict(g.cfg), "discriminator": asdict(d.cfg), "st_encoder": asdict(st_enc.cfg),
            **(extra or {})}
    save_checkpoint(Checkpoint(arrays_from_modules(g=g, d=d, st=st_enc), step, "gan", meta), path)


def load_gan(path) -> tuple[Generator, MultiScaleDiscriminator, StEncoder]:
    ckpt = _read(path, "gan")
    g = Generator(GeneratorConfig(**ckpt.config["generator"]))
    d = MultiScaleDiscriminator(DiscriminatorConfig(**ckpt.config["discriminator"]))
    st_enc = StEncoder(StEncoderConfig(**ckpt.config["st_encoder"]))
    for module, prefix in ((g, "g"), (d, "d"), (st_enc, "st")):
        _restore(module, ckpt, prefix, path)
    return freeze(g), freeze(d), freeze(st_enc)


def require(path, what: str) -> Path:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"missing {what} checkpoint: {path}")
    return path
