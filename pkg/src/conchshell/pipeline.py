"""Stage runners shared by the command line and the end-to-end tests.

Each stage reads its inputs from and writes its outputs to the fixed layout
under ``cfg.out``: ``manifest.jsonl``, ``checkpoints/``, ``logs/``,
``reports/`` and ``wavs/``.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
import torch

from . import codec as codec_mod
from . import evaluate as ev
from .config import RunConfig
from .data import DatasetManifest, build_manifest, load_image, save_wav
from .errors import DataError
from .gan import build_discriminator, build_generator, generate
from .st_encoder import build_st_encoder, calibrate, encode_st, pretrain_st_encoder
from .store import load_codec, load_gan, load_tcnn, require, save_codec, save_tcnn
from .tcnn import time_features_for_images, train_tcnn
from .trainer import GanRun, train_gan

log = logging.getLogger(__name__)

LAYOUT = ("checkpoints", "logs", "reports", "wavs")


def paths(cfg: RunConfig) -> dict[str, Path]:
    out = {name: cfg.out / name for name in LAYOUT}
    out.update(tcnn=out["checkpoints"] / "tcnn.ckpt", codec=out["checkpoints"] / "codec.ckpt",
               gan=out["checkpoints"] / "gan.ckpt")
    return out


def _write_jsonl(path: Path, records) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


def prepare(cfg: RunConfig, root=None) -> DatasetManifest:
    manifest = build_manifest(root if root is not None else cfg.data_root,
                              cfg["data"]["split_ratio"], cfg.seed)
    manifest.save(cfg.manifest_path)
    return manifest


def load_manifest(cfg: RunConfig) -> DatasetManifest:
    path = cfg.manifest_path
    if not path.is_file():
        raise DataError(f"manifest not found: {path} (run `conchshell prepare` first)")
    return DatasetManifest.load(path)


def run_tcnn(cfg: RunConfig) -> Path:
    p = paths(cfg)
    model, history = train_tcnn(load_manifest(cfg), cfg.tcnn_config())
    _write_jsonl(p["logs"] / "tcnn.jsonl", ({"epoch": i, "loss": v} for i, v in enumerate(history)))
    save_tcnn(p["tcnn"], model, len(history))
    return p["tcnn"]


def run_codec(cfg: RunConfig) -> Path:
    p = paths(cfg)
    codec, history = codec_mod.train_codec(load_manifest(cfg), cfg.codec_config(), cfg.n_samples)
    _write_jsonl(p["logs"] / "codec.jsonl", ({"step": i, "recon": v} for i, v in enumerate(history)))
    save_codec(p["codec"], codec, len(history))
    return p["codec"]


def _train_images(manifest: DatasetManifest, size: int, limit: int | None):
    items = manifest.train[:limit] if limit else manifest.train
    images = torch.from_numpy(np.stack([load_image(manifest.resolve(it.image_path), size) for it in items]))
    return images, torch.tensor([it.category_id for it in items])


def run_gan(cfg: RunConfig) -> GanRun:
    p = paths(cfg)
    tcnn = load_tcnn(require(p["tcnn"], "tcnn (run `conchshell train tcnn` first)"))
    codec = load_codec(require(p["codec"], "codec (run `conchshell train codec` first)"))
    if codec.level.name != cfg.level:
        raise DataError(f"codec checkpoint is level {codec.level.name!r} but the run targets {cfg.level!r}")
    manifest = load_manifest(cfg)
    gcfg = cfg.gan_config()
    st_enc = build_st_encoder(cfg.st_encoder_config())
    if cfg["st_encoder"]["calibrate"] or cfg["st_encoder"]["pretrain_epochs"]:
        images, labels = _train_images(manifest, tcnn.cfg.image_size, gcfg.max_items)
        feats = time_features_for_images(tcnn, images, st_enc.cfg.image_size)
        if cfg["st_encoder"]["pretrain_epochs"]:
            pretrain_st_encoder(st_enc, feats, labels, cfg["st_encoder"]["pretrain_epochs"], seed=cfg.seed)
        if cfg["st_encoder"]["calibrate"]:
            calibrate(st_enc, feats)
    g = build_generator(cfg.generator_config())
    d = build_discriminator(cfg.discriminator_config())
    return train_gan(manifest, tcnn, st_enc, codec, g, d, gcfg, out_dir=cfg.out,
                     checkpoint_extra={"profile": cfg.profile, "n_samples": cfg.n_samples})


class Synthesizer:
    """Frozen image-to-waveform path assembled from the three checkpoints."""

    def __init__(self, checkpoints):
        checkpoints = Path(checkpoints)
        self.tcnn = load_tcnn(require(checkpoints / "tcnn.ckpt", "tcnn"))
        self.codec = load_codec(require(checkpoints / "codec.ckpt", "codec"))
        self.g, _, self.st_enc = load_gan(require(checkpoints / "gan.ckpt", "gan"))
        if self.codec.level.name != self.g.cfg.level:
            raise DataError(f"codec level {self.codec.level.name!r} does not match generator level {self.g.cfg.level!r}")

    @property
    def n_samples(self) -> int:
        return self.g.cfg.n_samples

    @torch.no_grad()
    def waveform(self, image: np.ndarray) -> np.ndarray:
        feats = time_features_for_images(self.tcnn, torch.from_numpy(image)[None], self.st_enc.cfg.image_size)
        latents = generate(self.g, encode_st(self.st_enc, feats[0]))
        return codec_mod.decode(self.codec, latents).numpy().astype(np.float32)

    def from_path(self, image_path) -> np.ndarray:
        return self.waveform(load_image(image_path, self.tcnn.cfg.image_size))


def generate_wav(image_path, checkpoints, out_wav) -> Path:
    synth = Synthesizer(checkpoints)
    wave = synth.from_path(image_path)
    out_wav = Path(out_wav)
    out_wav.parent.mkdir(parents=True, exist_ok=True)
    save_wav(out_wav, wave)
    return out_wav


def run_evaluate(cfg: RunConfig, pesq_file=None, synthesize=None) -> dict:
    """Score the validation split and write every report file.

    ``synthesize`` maps a manifest item to a waveform; by default the trained
    checkpoints render each item's image.
    """
    p = paths(cfg)
    manifest = load_manifest(cfg)
    items = manifest.val
    if not items:
        raise DataError("validation split is empty")
    if synthesize is None:
        synth = Synthesizer(p["checkpoints"])
        n_samples = synth.n_samples
        synthesize = lambda it: synth.from_path(manifest.resolve(it.image_path))  # noqa: E731
    else:
        n_samples = cfg.n_samples
    pesq = ev.read_pesq_scores(pesq_file) if pesq_file else None
    rows = ev.score_items(manifest, items, n_samples, synthesize, p["wavs"] / "val", pesq)
    reports = p["reports"]
    reports.mkdir(parents=True, exist_ok=True)
    ev.write_stoi_csv(rows, reports / "stoi.csv")
    ev.write_mos_sheet(rows, reports / "mos_sheet.csv")
    summary = ev.summarize(rows)
    (reports / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    ev.plot_stoi(rows, reports / "stoi.png")
    ev.plot_losses(p["logs"] / "gan.jsonl", reports / "losses.png")
    return {"rows": rows, "summary": summary}
