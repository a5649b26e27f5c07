"""Image and RIFF/WAVE loading, normalised to the pipeline's input formats."""
from __future__ import annotations

import wave
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image as PILImage, UnidentifiedImageError

from ..dsp import SAMPLE_RATE, resample
from ..errors import DataError

IMAGE_SIZE = 224


def bilinear_resize(arr, size: tuple[int, int]) -> torch.Tensor:
    """Half-pixel-centred bilinear resize of ``(..., H, W)`` with no antialiasing."""
    t = torch.as_tensor(arr)
    if tuple(t.shape[-2:]) == tuple(size):
        return t.clone()
    lead = t.shape[:-2]
    flat = t.reshape((-1, 1) + tuple(t.shape[-2:]))
    out = F.interpolate(flat, size=size, mode="bilinear", align_corners=False)
    return out.reshape(lead + tuple(size))


def load_image(path, size: int = IMAGE_SIZE) -> np.ndarray:
    """Decode a raster image into a ``3 x size x size`` float32 RGB array in [0, 1]."""
    try:
        with PILImage.open(path) as im:
            im.load()
            rgb = im.convert("RGB")
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"cannot decode image {path}: {exc}") from exc
    pixels = np.asarray(rgb, dtype=np.float64).transpose(2, 0, 1) / 255.0
    out = bilinear_resize(pixels, (size, size)).numpy()
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read PCM WAVE into float64 ``(channels, frames)`` and its sample rate."""
    try:
        with wave.open(str(path), "rb") as w:
            n_ch, width, rate, n = w.getnchannels(), w.getsampwidth(), w.getframerate(), w.getnframes()
            raw = w.readframes(n)
    except (wave.Error, EOFError) as exc:
        raise DataError(f"{path}: not a readable PCM RIFF/WAVE file ({exc})") from exc
    if len(raw) != n * n_ch * width:
        raise DataError(f"{path}: truncated audio data")
    if width == 1:
        data = (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif width == 2:
        data = np.frombuffer(raw, dtype="<i2") / 32768.0
    elif width == 3:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        data = ints / float(1 << 23)
    elif width == 4:
        data = np.frombuffer(raw, dtype="<i4") / float(1 << 31)
    else:
        raise DataError(f"{path}: unsupported sample width {width}")
    return data.reshape(-1, n_ch).T, rate


def fit_length(x: np.ndarray, target_len: int) -> np.ndarray:
    """Keep the head of a long signal, zero-pad the tail of a short one."""
    if len(x) >= target_len:
        return x[:target_len]
    return np.concatenate([x, np.zeros(target_len - len(x), dtype=x.dtype)])


def load_audio(path, target_len: int | None = None, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Load a WAV file as mono float32 at ``sample_rate``, fitted to ``target_len``."""
    data, rate = read_wav(path)
    mono = data.mean(axis=0)
    if rate != sample_rate:
        mono = resample(mono, rate, sample_rate)
    if target_len is not None:
        mono = fit_length(mono, target_len)
    return np.clip(mono, -1.0, 1.0).astype(np.float32)


def save_wav(path, samples, sample_rate: int = SAMPLE_RATE) -> None:
    """Write mono PCM signed 16-bit little-endian."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise DataError("refusing to write non-finite audio")
    ints = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(ints.tobytes())
