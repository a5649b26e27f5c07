"""Signal processing kernel: STFT, mel filterbank, log-mel, resampling and STOI.

The STFT/mel path is written in torch so the mel perceptual loss can be
back-propagated; resampling and STOI are evaluation-side numpy code.
"""
from __future__ import annotations

import math
import struct
from functools import lru_cache
from pathlib import Path

import numpy as np
import torch

from .errors import DataError

SAMPLE_RATE = 16000
N_FFT = 1024
HOP = 256
N_MELS = 80
F_MIN = 0.0
F_MAX = 8000.0
LOG_FLOOR = 1e-5


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def hann_window(n: int, dtype=torch.float64) -> torch.Tensor:
    """Periodic Hann window, the usual choice for STFT analysis."""
    return torch.hann_window(n, periodic=True, dtype=dtype)


def stft(x, n_fft: int = N_FFT, hop: int = HOP) -> torch.Tensor:
    """One-sided STFT without centre padding.

    Accepts a 1-D signal or a batch ``(..., L)``; returns a complex tensor of
    shape ``(..., n_fft // 2 + 1, T)`` with ``T = 1 + (L - n_fft) // hop``.
    """
    x = _as_tensor(x)
    if x.shape[-1] < n_fft:
        raise ValueError(f"signal of length {x.shape[-1]} is shorter than n_fft={n_fft}")
    frames = x.unfold(-1, n_fft, hop) * hann_window(n_fft, dtype=x.dtype)
    return torch.fft.rfft(frames, dim=-1).transpose(-1, -2)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(n_mels: int = N_MELS, f_min: float = F_MIN, f_max: float = F_MAX) -> np.ndarray:
    """The ``n_mels + 2`` corner frequencies (Hz); band i peaks at edge i+1."""
    return mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))


@lru_cache(maxsize=8)
def _filterbank_cached(sr, n_fft, n_mels, f_min, f_max) -> np.ndarray:
    edges = mel_band_edges(n_mels, f_min, f_max)
    freqs = np.arange(n_fft // 2 + 1) * sr / n_fft
    lo, centre, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (centre - lo)
    falling = (hi - freqs[None, :]) / (hi - centre)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.setflags(write=False)
    return fb


def mel_filterbank(
    sr: int = SAMPLE_RATE,
    n_fft: int = N_FFT,
    n_mels: int = N_MELS,
    f_min: float = F_MIN,
    f_max: float = F_MAX,
) -> np.ndarray:
    """Triangular HTK-mel filters, peak-normalised, shape ``(n_mels, n_fft//2 + 1)``."""
    return _filterbank_cached(sr, n_fft, n_mels, float(f_min), float(f_max))


def mel(x, sr: int = SAMPLE_RATE, n_fft: int = N_FFT, hop: int = HOP, n_mels: int = N_MELS) -> torch.Tensor:
    """Log-magnitude mel spectrogram ``log(max(fb @ |STFT|, 1e-5))``."""
    x = _as_tensor(x)
    mag = stft(x, n_fft, hop).abs()
    fb = torch.tensor(mel_filterbank(sr, n_fft, n_mels), dtype=mag.dtype)
    return torch.log(torch.clamp(fb @ mag, min=LOG_FLOOR))


def n_frames(length: int, n_fft: int = N_FFT, hop: int = HOP) -> int:
    return 1 + (length - n_fft) // hop


# ---------------------------------------------------------------------------
# resampling


def _kaiser(u: np.ndarray, beta: float) -> np.ndarray:
    inside = np.abs(u) < 1.0
    out = np.zeros_like(u)
    out[inside] = np.i0(beta * np.sqrt(1.0 - u[inside] ** 2)) / np.i0(beta)
    return out


def resample(x, from_hz: int, to_hz: int, zeros: int = 16, beta: float = 8.6) -> np.ndarray:
    """Kaiser-windowed sinc interpolation from ``from_hz`` to ``to_hz``.

    The low-pass cutoff sits at the lower of the two Nyquist frequencies.
    Each output sample is normalised by the sum of its tap weights, so a
    constant input stays exactly constant (including at the edges).
    """
    if from_hz <= 0 or to_hz <= 0:
        raise ValueError("sample rates must be positive")
    x = np.asarray(x, dtype=np.float64)
    if from_hz == to_hz:
        return x.copy()
    g = math.gcd(int(from_hz), int(to_hz))
    up, down = int(to_hz) // g, int(from_hz) // g
    n_in = x.shape[-1]
    n_out = (n_in * up + down // 2) // down
    cutoff = min(1.0, up / down)
    half = zeros / cutoff
    offsets = np.arange(-math.ceil(half) + 1, math.ceil(half) + 1)

    y = np.empty(x.shape[:-1] + (n_out,), dtype=np.float64)
    chunk = 4096
    for start in range(0, n_out, chunk):
        n = np.arange(start, min(start + chunk, n_out), dtype=np.int64)
        base = (n * down) // up
        frac = ((n * down) % up) / up
        k = base[:, None] + offsets[None, :]
        d = frac[:, None] - offsets[None, :]
        w = cutoff * np.sinc(cutoff * d) * _kaiser(d / half, beta)
        valid = (k >= 0) & (k < n_in)
        w = np.where(valid, w, 0.0)
        taps = x[..., np.clip(k, 0, n_in - 1)]
        y[..., start:start + len(n)] = (taps * w).sum(-1) / w.sum(-1)
    return y


# ---------------------------------------------------------------------------
# STOI (Taal et al. 2011)

STOI_FS = 10000
STOI_FRAME = 256
STOI_NFFT = 512
STOI_BANDS = 15
STOI_MIN_FREQ = 150.0
STOI_SEGMENT = 30  # frames per analysis segment: 384 ms at 10 kHz
STOI_BETA = -15.0  # lower SDR bound for clipping, dB
STOI_DYN_RANGE = 40.0


def _stoi_window() -> np.ndarray:
    return np.hanning(STOI_FRAME + 2)[1:-1]


def third_octave_bands(fs: int = STOI_FS, nfft: int = STOI_NFFT, num_bands: int = STOI_BANDS,
                       min_freq: float = STOI_MIN_FREQ) -> tuple[np.ndarray, np.ndarray]:
    """One-third octave band matrix ``(num_bands, nfft//2 + 1)`` and centre frequencies."""
    f = np.linspace(0, fs, nfft + 1)[: nfft // 2 + 1]
    k = np.arange(num_bands, dtype=np.float64)
    cf = 2.0 ** (k / 3.0) * min_freq
    f_low = min_freq * 2.0 ** ((2 * k - 1) / 6)
    f_high = min_freq * 2.0 ** ((2 * k + 1) / 6)
    obm = np.zeros((num_bands, len(f)))
    for i in range(num_bands):
        lo = int(np.argmin((f - f_low[i]) ** 2))
        hi = int(np.argmin((f - f_high[i]) ** 2))
        obm[i, lo:hi] = 1.0
    return obm, cf


def _frames(x: np.ndarray, hop: int) -> np.ndarray:
    idx = np.arange(0, len(x) - STOI_FRAME + 1, hop)
    return np.stack([x[i:i + STOI_FRAME] for i in idx]) * _stoi_window() if len(idx) else np.zeros((0, STOI_FRAME))


def _overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    n, size = frames.shape
    out = np.zeros((n - 1) * hop + size)
    for i, fr in enumerate(frames):
        out[i * hop:i * hop + size] += fr
    return out


def remove_silent_frames(x: np.ndarray, y: np.ndarray, dyn_range: float = STOI_DYN_RANGE):
    """Drop frames of ``x`` more than ``dyn_range`` dB below its loudest frame.

    The same frames are removed from ``y``; both are re-synthesised by
    overlap-add of the windowed frames.
    """
    hop = STOI_FRAME // 2
    xf, yf = _frames(x, hop), _frames(y, hop)
    norms = np.linalg.norm(xf, axis=1)
    if len(norms) == 0 or norms.max() == 0.0:
        raise DataError("no active frames in clean signal")
    energies = 20.0 * np.log10(norms + np.finfo(np.float64).eps)
    mask = energies > energies.max() - dyn_range
    return _overlap_add(xf[mask], hop), _overlap_add(yf[mask], hop)


def _stoi_spectrum(x: np.ndarray) -> np.ndarray:
    hop = STOI_FRAME // 2
    idx = range(0, len(x) - STOI_FRAME, hop)
    w = _stoi_window()
    return np.stack([np.fft.rfft(w * x[i:i + STOI_FRAME], n=STOI_NFFT) for i in idx], axis=1)


def stoi(clean, degraded, fs: int = SAMPLE_RATE) -> float:
    """Short-time objective intelligibility of ``degraded`` against ``clean``."""
    x = np.asarray(clean, dtype=np.float64).ravel()
    y = np.asarray(degraded, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if fs != STOI_FS:
        x = resample(x, fs, STOI_FS)
        y = resample(y, fs, STOI_FS)
    x, y = remove_silent_frames(x, y)

    x_spec, y_spec = _stoi_spectrum(x), _stoi_spectrum(y)
    if x_spec.shape[1] < STOI_SEGMENT:
        raise DataError(
            f"only {x_spec.shape[1]} active STFT frames; STOI needs at least {STOI_SEGMENT}"
        )
    obm, _ = third_octave_bands()
    x_tob = np.sqrt(obm @ np.abs(x_spec) ** 2)
    y_tob = np.sqrt(obm @ np.abs(y_spec) ** 2)

    # (segments, bands, frames)
    n_seg = x_tob.shape[1] - STOI_SEGMENT + 1
    xs = np.stack([x_tob[:, m:m + STOI_SEGMENT] for m in range(n_seg)])
    ys = np.stack([y_tob[:, m:m + STOI_SEGMENT] for m in range(n_seg)])

    x_norm = np.linalg.norm(xs, axis=2, keepdims=True)
    y_norm = np.linalg.norm(ys, axis=2, keepdims=True)
    gain = np.divide(x_norm, y_norm, out=np.zeros_like(x_norm), where=y_norm > 0)
    clip = 10.0 ** (-STOI_BETA / 20.0)
    y_prime = np.minimum(ys * gain, xs * (1.0 + clip))

    xc = xs - xs.mean(axis=2, keepdims=True)
    yc = y_prime - y_prime.mean(axis=2, keepdims=True)
    denom = np.linalg.norm(xc, axis=2) * np.linalg.norm(yc, axis=2)
    num = (xc * yc).sum(axis=2)
    corr = np.divide(num, denom, out=np.zeros_like(num), where=denom > 0)
    return float(corr.mean())


# ---------------------------------------------------------------------------
# spectrogram dump: magic, version, ndim, dims (u32 LE), float32 LE payload

_SPEC_MAGIC = b"CSMS"
_SPEC_VERSION = 1


def save_spectrogram(spec, path) -> None:
    arr = np.ascontiguousarray(np.asarray(spec, dtype="<f4"))
    header = _SPEC_MAGIC + struct.pack("<BB", _SPEC_VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.tobytes())


def load_spectrogram(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != _SPEC_MAGIC:
        raise DataError(f"{path}: not a spectrogram dump")
    version, ndim = struct.unpack_from("<BB", raw, 4)
    if version != _SPEC_VERSION:
        raise DataError(f"{path}: unsupported spectrogram dump version {version}")
    dims = struct.unpack_from(f"<{ndim}I", raw, 6)
    offset = 6 + 4 * ndim
    count = int(np.prod(dims)) if dims else 1
    if len(raw) - offset != 4 * count:
        raise DataError(f"{path}: truncated spectrogram dump")
    return np.frombuffer(raw, dtype="<f4", offset=offset).reshape(dims).copy()
