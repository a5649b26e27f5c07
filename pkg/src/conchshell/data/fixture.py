"""Procedural six-category image/audio corpus used by tests and demos."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from ..dsp import SAMPLE_RATE
from .io import save_wav

# name, base colour, chord (Hz)
CATEGORIES = (
    ("beach", (0.95, 0.85, 0.55), (261.63, 329.63, 392.00)),
    ("forest", (0.15, 0.55, 0.20), (220.00, 261.63, 329.63)),
    ("night", (0.05, 0.05, 0.25), (196.00, 233.08, 293.66)),
    ("ocean", (0.10, 0.35, 0.80), (293.66, 369.99, 440.00)),
    ("snow", (0.92, 0.95, 0.98), (329.63, 415.30, 493.88)),
    ("sunset", (0.95, 0.45, 0.20), (174.61, 220.00, 261.63)),
)


def _image(rng: np.random.Generator, colour, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    phase = rng.uniform(0, 2 * np.pi)
    ripple = 0.15 * np.sin(2 * np.pi * (2 * yy + xx) + phase)
    img = np.stack([np.full((size, size), c) for c in colour]) + ripple[None]
    img += 0.05 * rng.standard_normal(img.shape)
    return (np.clip(img, 0, 1) * 255).round().astype(np.uint8).transpose(1, 2, 0)


def _chord(rng: np.random.Generator, freqs, n: int, sr: int) -> np.ndarray:
    t = np.arange(n) / sr
    env = np.exp(-2.0 * t) * (1 - np.exp(-40 * t))
    x = sum(np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi)) for f in freqs)
    return 0.3 * env * x / len(freqs)


def write_fixture(root, pairs_per_category: int = 4, duration_s: float = 1.0,
                  image_size: int = 64, seed: int = 0, sample_rate: int = SAMPLE_RATE) -> Path:
    """Write ``6 * pairs_per_category`` PNG/WAV pairs under ``root/<category>/``."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    for name, colour, chord in CATEGORIES:
        folder = root / name
        folder.mkdir(parents=True, exist_ok=True)
        for i in range(pairs_per_category):
            stem = folder / f"{name}_{i:02d}"
            PILImage.fromarray(_image(rng, colour, image_size)).save(stem.with_suffix(".png"))
            save_wav(stem.with_suffix(".wav"), _chord(rng, chord, n, sample_rate), sample_rate)
    return root
