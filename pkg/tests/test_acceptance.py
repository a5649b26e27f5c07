"""The ten acceptance criteria, each at its stated tolerance.

Every test records a ``PASS``/``FAIL`` line (shown in the terminal summary
and printed directly) before asserting.
"""
import json
import struct
import wave

import numpy as np
import pytest
import torch

from conchshell import dsp
from conchshell.checkpoint import FORMAT_VERSION, MAGIC, Checkpoint, load_checkpoint, save_checkpoint
from conchshell.cli import main
from conchshell.codec import quantize
from conchshell.errors import CheckpointError
from conchshell.gan import DiscriminatorConfig, GeneratorConfig, build_discriminator, build_generator
from conchshell.objectives import disc_loss, feature_matching_loss, gen_loss, mel_loss, total_loss, wave_loss
from conchshell.optim import OptimizerConfig, lr_at_step
from conchshell.st_encoder import StEncoderConfig, build_st_encoder
from conchshell.tcnn import forge_time_feature

from conftest import ACCEPTANCE, FIXTURE, run_pipeline
from oracles import brute_nearest, fd_relative_error, hann, module_fd_error, naive_dft


def record(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {title} ({detail})"
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line


def test_c1_forge_contract():
    g = torch.Generator().manual_seed(0)
    bad = 0
    for _ in range(100):
        feats = [torch.rand(int(torch.randint(1, 9, (1,), generator=g)), 224 >> (i + 1), 224 >> (i + 1),
                            generator=g) for i in range(6)]
        f = forge_time_feature(feats)
        ok = f.shape == (3, 18, 224, 224)
        ok &= all(torch.equal(f[:, 3 * i], f[:, 3 * i + j]) for i in range(6) for j in (1, 2))
        bad += not ok
    record(1, "forged time feature is 3x18x224x224 with identical frame triples", bad == 0,
           f"{100 - bad}/100 inputs")


def test_c2_loss_arithmetic():
    def s(*v):
        return [torch.tensor([x], dtype=torch.float64) for x in v]
    checks = [
        float(disc_loss(s(1, 1, 1), s(-1, -1, -1))) == 0.0,
        float(disc_loss(s(0, 0, 0), s(0, 0, 0))) == 6.0,
        float(disc_loss(s(2, 3, 5), s(-2, -9, -1.5))) == 0.0,
        float(gen_loss(s(0, 0, 0))) == 0.0,
        float(gen_loss(s(1, 1, 1))) == -3.0,
        float(gen_loss(s(-1, 2, 0.5))) == -1.5,
        total_loss({"l_g": 1, "l_fm": 1, "l_wave": 1, "l_mel": 1}).l_cs == 58.5,
        total_loss({"l_g": 0, "l_fm": 0, "l_wave": 0, "l_mel": 0}).l_cs == 0.0,
    ]
    record(2, "loss arithmetic examples exact, unit parts give 58.5", all(checks),
           f"{sum(checks)}/{len(checks)} exact")


def test_c3_gradient_audit():
    g = torch.Generator().manual_seed(1)
    errs = {}
    gen = build_generator(GeneratorConfig(level="high", n_samples=1024, st_dim=4, latent_dim=3, hidden=3,
                                          base_len=4, kernels=(5, 4)))
    errs["generator (conv1d, linear time projection)"] = module_fd_error(
        gen, lambda o: (o ** 2).sum(), [torch.randn(1, 4, 18, generator=g)])
    disc = build_discriminator(DiscriminatorConfig(latent_dim=3, channels=(2, 2, 2)))
    errs["discriminator (strided conv1d, average pooling)"] = module_fd_error(
        disc, lambda outs: sum(sc.sum() + sum(f.mean() for f in fs) for sc, fs in outs),
        [torch.randn(1, 3, 16, generator=g)])
    conv2d = torch.nn.Sequential(torch.nn.Conv2d(2, 2, 3, padding=1), torch.nn.ReLU(), torch.nn.MaxPool2d(2))
    errs["conv2d + max pooling"] = module_fd_error(conv2d, lambda o: (o ** 2).sum(),
                                                   [torch.randn(1, 2, 8, 8, generator=g)])
    enc = build_st_encoder(StEncoderConfig(widths=(2, 2, 2, 2), out_dim=2, time_len=4, image_size=8))
    errs["conv3d encoder"] = module_fd_error(enc, lambda o: (o ** 2).sum(), [torch.randn(1, 3, 4, 8, 8, generator=g)])
    real = [torch.tensor([0.3, -0.4], dtype=torch.float64) for _ in range(3)]
    fake = [torch.tensor([-0.2, 0.5], dtype=torch.float64) for _ in range(3)]
    errs["hinge losses"] = max(fd_relative_error(lambda *x: disc_loss(x[:3], x[3:]), real + fake),
                               fd_relative_error(lambda *x: gen_loss(x), fake))
    a, b = torch.randn(2, 6, generator=g), torch.randn(2, 6, generator=g)
    errs["feature matching"] = fd_relative_error(lambda x, y: feature_matching_loss([[x]], [[y]]), [a, b])
    x, y = torch.randn(1024, generator=g), torch.randn(1024, generator=g)
    errs["wave loss"] = fd_relative_error(wave_loss, [x[:64], y[:64]])
    errs["mel loss (away from floor)"] = fd_relative_error(lambda u: mel_loss(u, y), [x])
    worst = max(errs.values())
    record(3, "central finite differences match autograd", worst < 1e-4,
           f"worst relative error {worst:.2e} over {len(errs)} operations")


def test_c4_vq_oracle():
    rng = np.random.default_rng(2)
    mismatches = 0
    for n in range(1000):
        k, d = int(rng.integers(1, 33)), int(rng.integers(1, 9))
        cb = rng.standard_normal((k, d))
        if n % 4 == 0 and k > 1:  # exact duplicates force ties
            cb[int(rng.integers(1, k))] = cb[0]
        z = rng.standard_normal((d, 5))
        if n % 4 == 0:
            z[:, 0] = cb[0]
        codes, _ = quantize(torch.from_numpy(z), torch.from_numpy(cb))
        mismatches += not np.array_equal(codes.numpy(), brute_nearest(z.T, cb))
    z = torch.randn(8, 20, dtype=torch.float64, requires_grad=True)
    w = torch.randn(8, 20, dtype=torch.float64)
    _, q = quantize(z, torch.randn(32, 8, dtype=torch.float64))
    (q * w).sum().backward()
    st_ok = torch.equal(z.grad, w)
    record(4, "quantize equals exhaustive search; straight-through gradient is the identity",
           mismatches == 0 and st_ok, f"{1000 - mismatches}/1000 instances, gradient identity {st_ok}")


def test_c5_dsp_oracle():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(4096)
    spec = dsp.stft(x).numpy()
    dft_err = max(np.max(np.abs(spec[:, t] - naive_dft(x[t * 256:t * 256 + 1024] * hann(1024))))
                  for t in range(spec.shape[1]))
    tone = 0.5 * np.sin(2 * np.pi * 1000 * np.arange(16000) / 16000)
    peak_ok = bool(torch.all(dsp.stft(tone).abs().argmax(0) == 64))
    t = np.arange(24000) / 16000
    active = np.sin(2 * np.pi * 300 * t) * (1.2 + np.sin(2 * np.pi * 2 * t)) + 0.05 * rng.standard_normal(len(t))
    stoi_err = max(abs(dsp.stoi(active, a * active) - 1.0) for a in (1.0, 0.1, 7.0))
    ok = dft_err < 1e-9 and peak_ok and stoi_err < 1e-9
    record(5, "STFT equals naive DFT, 1 kHz at bin 64, STOI identity and gain invariance", ok,
           f"DFT err {dft_err:.1e}, peak {peak_ok}, STOI err {stoi_err:.1e}")


def test_c6_schedule():
    cfg = OptimizerConfig()
    got = (lr_at_step("generator", 0, cfg), lr_at_step("generator", 20000, cfg),
           lr_at_step("discriminator", 40000, cfg))
    record(6, "learning-rate schedule values exact", got == (1e-5, 8e-6, 8.1e-6), f"got {got}")


def test_c7_overfit_smoke(trained_run):
    records = [json.loads(line) for line in
               (trained_run / "logs" / "gan.jsonl").read_text(encoding="utf-8").splitlines()]
    assert len(records) == 200
    wave0, wave1 = records[0]["l_wave"], records[-1]["l_wave"]
    first = np.mean([r["l_cs"] for r in records[:20]])
    last = np.mean([r["l_cs"] for r in records[-20:]])
    ratio = wave1 / wave0
    record(7, "200 GAN steps: final l_wave < 50% of initial and l_cs window decreases",
           ratio < 0.5 and last < first,
           f"l_wave {wave0:.4f} -> {wave1:.4f} (ratio {ratio:.3f}); l_cs window {first:.2f} -> {last:.2f}")


def test_c8_end_to_end_generate(trained_run, tmp_path):
    image = sorted(FIXTURE.rglob("*.png"))[0]
    codes = [main(["generate", "--profile", "test", "--out", str(trained_run), str(image), "-o",
                   str(tmp_path / f"{n}.wav")]) for n in ("a", "b")]
    with wave.open(str(tmp_path / "a.wav")) as w:
        fmt = (w.getnchannels(), w.getsampwidth(), w.getframerate(), w.getnframes())
    same = (tmp_path / "a.wav").read_bytes() == (tmp_path / "b.wav").read_bytes()
    ok = codes == [0, 0] and fmt == (1, 2, 16000, 16000) and same
    record(8, "generate writes a 16000-sample PCM16 mono WAV, identical across runs", ok,
           f"exit {codes}, (channels, width, rate, frames) {fmt}, identical {same}")


def test_c9_pipeline_determinism(trained_run, tmp_path):
    second = run_pipeline(tmp_path / "again")
    names = ("tcnn.ckpt", "codec.ckpt", "gan.ckpt")
    same = [(trained_run / "checkpoints" / n).read_bytes() == (second / "checkpoints" / n).read_bytes()
            for n in names]
    record(9, "two fixture pipeline runs give byte-identical checkpoints", all(same),
           ", ".join(f"{n} {'identical' if s else 'differs'}" for n, s in zip(names, same)))


def test_c10_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    arrays = {f"w{i}": rng.standard_normal(rng.integers(1, 6, 3)).astype(np.float32) for i in range(5)}
    path = tmp_path / "c.ckpt"
    save_checkpoint(Checkpoint(arrays, step=3, kind="x"), path)
    loaded = load_checkpoint(path).arrays
    exact = all(loaded[k].tobytes() == v.tobytes() and loaded[k].shape == v.shape for k, v in arrays.items())
    raw = path.read_bytes()

    def rejected(data, pattern):
        p = tmp_path / "bad.ckpt"
        p.write_bytes(data)
        with pytest.raises(CheckpointError, match=pattern):
            load_checkpoint(p)
        return True

    corrupt = bytearray(raw)
    corrupt[-10] ^= 1
    future = bytearray(raw)
    struct.pack_into("<H", future, len(MAGIC), FORMAT_VERSION + 1)
    ok = (exact and rejected(bytes(corrupt), "checksum") and rejected(raw[:-7], "truncated")
          and rejected(bytes(future), "unsupported checkpoint version"))
    record(10, "checkpoint round trip bit-exact; corrupt, truncated and future-version files rejected", ok,
           f"round trip exact {exact}")
