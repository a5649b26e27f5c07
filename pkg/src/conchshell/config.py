"""Run configuration: a YAML file of sections mirroring the module configs.

Every key has a documented default.  Two profiles exist: ``paper`` (8 s
audio, full-size modules, the published optimizer settings) and ``test``
(1 s audio, small modules, a short GAN run that fits in CI).  Unknown keys
are rejected; missing keys fall back to the profile default with a notice.
"""
from __future__ import annotations

import copy
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .codec import CodecConfig
from .dsp import SAMPLE_RATE
from .errors import ConfigError
from .gan import DiscriminatorConfig, GeneratorConfig
from .objectives import LossWeights
from .optim import OptimizerConfig
from .st_encoder import StEncoderConfig
from .tcnn import TcnnConfig
from .trainer import GanTrainConfig

log = logging.getLogger(__name__)

DATA_ENV = "CONCHSHELL_DATA"
PROFILES = ("paper", "test")
LEVELS = ("high", "low", "deep")

# section -> key -> (paper-profile default, comment)
SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "profile": ("paper", "paper | test; selects the defaults below"),
        "level": ("deep", "codec level the generator targets: high | low | deep"),
        "seed": (0, "seeds every initialisation, shuffle and split"),
        "out": ("runs/conchshell", "output root: checkpoints/ logs/ reports/ wavs/"),
        "duration_s": (8.0, "clip length in seconds at 16 kHz"),
    },
    "data": {
        "root": ("data/bop", "corpus root, one folder per category; $CONCHSHELL_DATA overrides"),
        "manifest": (None, "manifest path; null means <out>/manifest.jsonl"),
        "split_ratio": (0.85, "fraction of items in the train split"),
    },
    "tcnn": {
        "widths": ([16, 32, 64, 64, 128, 128], "channels of the six conv blocks"),
        "convs_per_block": (1, "1 -> TCNN-6, 3 -> TCNN-18"),
        "epochs": (30, "classifier training epochs"),
        "batch_size": (8, "classifier batch size"),
        "lr": (1e-3, "classifier AdamW learning rate"),
        "weight_decay": (0.0, "classifier AdamW weight decay"),
    },
    "st_encoder": {
        "widths": ([8, 16, 32, 64], "channels of the four 3-D conv stages"),
        "out_dim": (256, "feature dimension fed to the generator"),
        "calibrate": (True, "standardise outputs per (dim, frame) over the train images"),
        "pretrain_epochs": (0, "0 keeps the seeded random encoder; >0 first fits it as a classifier"),
    },
    "codec": {
        "channels": (32, "encoder/decoder width"),
        "latent_dim": (64, "codebook vector size"),
        "codebook_size": (512, "number of codebook vectors"),
        "beta": (0.25, "commitment weight"),
        "steps": (500, "codec training steps"),
        "lr": (1e-3, "codec AdamW learning rate"),
        "batch_size": (2, "codec batch size"),
    },
    "generator": {
        "hidden": (None, "channel width; null takes the level preset (64 / 96 / 128)"),
        "base_len": (128, "time steps before the dense time projection"),
        "kernels": ([40, 21, 9], "residual conv kernel sizes"),
    },
    "discriminator": {
        "channels": ([64, 128, 128], "conv widths of each sub-discriminator"),
    },
    "gan": {
        "steps": (100000, "adversarial optimizer steps"),
        "checkpoint_every": (5000, "periodic checkpoint interval; 0 keeps the final one only"),
        "max_items": (None, "cap on training pairs; null uses the whole train split"),
    },
    "optim": {
        "beta1": (0.5, "AdamW beta1"),
        "beta2": (0.999, "AdamW beta2"),
        "weight_decay": (0.01, "AdamW weight decay"),
        "lr0": (1e-5, "initial learning rate for both networks"),
        "gen_decay": (0.8, "generator lr factor per decay interval"),
        "disc_decay": (0.9, "discriminator lr factor per decay interval"),
        "decay_every": (20000, "steps per decay interval"),
        "batch_size": (2, "pairs per batch"),
        "grad_accum": (1, "batches accumulated per optimizer step"),
    },
    "weights": {
        "lambda_g": (0.5, "adversarial term"),
        "lambda_fm": (3.0, "feature matching term"),
        "lambda_w": (40.0, "waveform L1 term"),
        "lambda_m": (15.0, "mel L1 term"),
    },
}

TEST_OVERRIDES = {
    "run": {"profile": "test", "duration_s": 1.0, "out": "runs/test"},
    "data": {"root": "tests/fixtures/bop"},
    "tcnn": {"widths": [8, 8, 16, 16, 16, 16], "epochs": 15, "lr": 3e-3},
    "st_encoder": {"widths": [4, 8, 8, 16], "out_dim": 32},
    "codec": {"channels": 16, "codebook_size": 64, "steps": 300},
    "generator": {"hidden": 32},
    "discriminator": {"channels": [16, 32, 32]},
    "gan": {"steps": 200, "checkpoint_every": 0, "max_items": 4},
    "optim": {"lr0": 3e-3},
}


def profile_defaults(profile: str = "paper") -> dict:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; expected one of {', '.join(PROFILES)}")
    out = {sec: {k: copy.deepcopy(v[0]) for k, v in keys.items()} for sec, keys in SCHEMA.items()}
    if profile == "test":
        for sec, keys in TEST_OVERRIDES.items():
            out[sec].update(copy.deepcopy(keys))
    return out


def default_yaml(profile: str = "paper") -> str:
    """The full config for ``profile`` with each key's meaning as a trailing comment."""
    values = profile_defaults(profile)
    lines = [f"# conchshell run configuration ({profile} profile)"]
    for sec, keys in SCHEMA.items():
        lines.append(f"{sec}:")
        for key, (_, comment) in keys.items():
            text = yaml.safe_dump(values[sec][key], default_flow_style=True).strip()
            text = text.removesuffix("\n...").removesuffix("...").strip()
            lines.append(f"  {key}: {text}  # {comment}")
    return "\n".join(lines) + "\n"


@dataclass
class RunConfig:
    values: dict = field(default_factory=profile_defaults)

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def profile(self) -> str:
        return self.values["run"]["profile"]

    @property
    def level(self) -> str:
        return self.values["run"]["level"]

    @property
    def seed(self) -> int:
        return int(self.values["run"]["seed"])

    @property
    def out(self) -> Path:
        return Path(self.values["run"]["out"])

    @property
    def n_samples(self) -> int:
        return int(round(float(self.values["run"]["duration_s"]) * SAMPLE_RATE))

    @property
    def data_root(self) -> Path:
        return Path(os.environ.get(DATA_ENV) or self.values["data"]["root"])

    @property
    def manifest_path(self) -> Path:
        m = self.values["data"]["manifest"]
        return Path(m) if m else self.out / "manifest.jsonl"

    def tcnn_config(self) -> TcnnConfig:
        return TcnnConfig(**self["tcnn"], seed=self.seed)

    def st_encoder_config(self) -> StEncoderConfig:
        sec = dict(self["st_encoder"])
        sec.pop("calibrate")
        sec.pop("pretrain_epochs")
        return StEncoderConfig(**sec, seed=self.seed)

    def codec_config(self) -> CodecConfig:
        return CodecConfig(level=self.level, **self["codec"], seed=self.seed)

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(level=self.level, n_samples=self.n_samples,
                               st_dim=self["st_encoder"]["out_dim"],
                               latent_dim=self["codec"]["latent_dim"], **self["generator"], seed=self.seed)

    def discriminator_config(self) -> DiscriminatorConfig:
        return DiscriminatorConfig(latent_dim=self["codec"]["latent_dim"], **self["discriminator"],
                                   seed=self.seed + 1)

    def gan_config(self) -> GanTrainConfig:
        return GanTrainConfig(**self["gan"], seed=self.seed, optim=OptimizerConfig(**self["optim"]),
                              weights=LossWeights(**self["weights"]))

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.values, sort_keys=False)


def _check_types(values: dict) -> None:
    run = values["run"]
    if run["level"] not in LEVELS:
        raise ConfigError(f"run.level must be one of {', '.join(LEVELS)}, got {run['level']!r}")
    if not 0 < float(values["data"]["split_ratio"]) < 1:
        raise ConfigError("data.split_ratio must lie in (0, 1)")
    if float(run["duration_s"]) <= 0:
        raise ConfigError("run.duration_s must be positive")


def _module_check(cfg: RunConfig) -> None:
    # constructing every module config surfaces value errors at load time
    try:
        for build in (cfg.tcnn_config, cfg.st_encoder_config, cfg.codec_config, cfg.generator_config,
                      cfg.discriminator_config, cfg.gan_config):
            build()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read ``path`` (optional) and apply ``overrides`` (``{"run": {...}}`` style).

    The profile is resolved first (override, then file, then ``paper``);
    its defaults fill every key the file leaves out.
    """
    raw: dict = {}
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must be a mapping of sections")
    overrides = overrides or {}

    for source in (raw, overrides):
        for sec, keys in source.items():
            if sec not in SCHEMA:
                raise ConfigError(f"unknown config section {sec!r}")
            if not isinstance(keys, dict):
                raise ConfigError(f"config section {sec!r} must be a mapping")
            for key in keys:
                if key not in SCHEMA[sec]:
                    raise ConfigError(f"unknown config key {sec}.{key}")

    profile = (overrides.get("run", {}).get("profile") or raw.get("run", {}).get("profile") or "paper")
    values = profile_defaults(profile)
    if path is not None:
        missing = [f"{sec}.{key}" for sec in SCHEMA for key in SCHEMA[sec] if key not in raw.get(sec, {})]
        if missing:
            log.info("config %s: %d keys missing, using %s-profile defaults: %s",
                     path, len(missing), profile, ", ".join(missing))
    for source in (raw, overrides):
        for sec, keys in source.items():
            values[sec].update(copy.deepcopy(keys))
    values["run"]["profile"] = profile
    _check_types(values)
    cfg = RunConfig(values)
    _module_check(cfg)
    return cfg
