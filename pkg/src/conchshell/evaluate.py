"""Validation reports: per-item STOI, an optional external PESQ column, the
human-rating sheet and its aggregation, and matplotlib figures.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .data import DatasetManifest, ManifestItem, load_audio, save_wav  # noqa: E402
from .dsp import stoi  # noqa: E402
from .errors import DataError  # noqa: E402

log = logging.getLogger(__name__)

MOS_METRICS = ("i2m_mos", "melody_mos", "noise_mos")
MOS_PASSES = (1, 2)
STOI_FIELDS = ("item_id", "category", "status", "stoi", "pesq", "generated_path")

MOS_INSTRUCTIONS = """\
Listening test
==============
Each generated clip appears twice in mos_sheet.csv, once per pass.
Rate every clip on a 1-5 scale in three columns:
  i2m_mos     how well the music fits the image it was generated from
  melody_mos  how pleasant and coherent the melody is
  noise_mos   how free the clip is of noise and artefacts (5 = clean)
Complete pass 1 for all clips, take a break, then repeat the whole
evaluation as pass 2 without looking at your first scores.
Leave a cell blank if you cannot rate it.  Then run
  conchshell aggregate-mos mos_sheet.csv
"""


@dataclass
class StoiRow:
    item_id: str
    category: int
    status: str  # "ok" | "skipped: <reason>"
    stoi: float | None
    pesq: float | None
    generated_path: str

    def as_csv(self) -> list[str]:
        def fmt(v):
            return "n/a" if v is None else f"{v:.6f}"
        return [self.item_id, str(self.category), self.status, fmt(self.stoi), fmt(self.pesq), self.generated_path]


def read_pesq_scores(path) -> dict[str, float]:
    """External PESQ results: CSV with ``item_id`` and ``pesq`` columns."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return {r["item_id"]: float(r["pesq"]) for r in csv.DictReader(fh)}
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read PESQ scores {path}: {exc}") from exc


def score_items(manifest: DatasetManifest, items: list[ManifestItem], n_samples: int,
                synthesize: Callable[[ManifestItem], np.ndarray], wav_dir=None,
                pesq: dict[str, float] | None = None) -> list[StoiRow]:
    """One row per item, in manifest order; unusable items are kept as skipped rows."""
    rows = []
    for it in items:
        out_path = ""
        audio_path = manifest.resolve(it.audio_path)
        if not audio_path.is_file():
            log.warning("skipping %s: missing audio %s", it.item_id, audio_path)
            rows.append(StoiRow(it.item_id, it.category_id, "skipped: missing audio", None, None, ""))
            continue
        try:
            clean = load_audio(audio_path, n_samples)
            generated = np.asarray(synthesize(it), dtype=np.float32)
            if wav_dir is not None:
                out = Path(wav_dir) / f"{it.item_id}.wav"
                out.parent.mkdir(parents=True, exist_ok=True)
                save_wav(out, generated)
                out_path = out.as_posix()
            value = stoi(clean, generated)
        except DataError as exc:
            log.warning("skipping %s: %s", it.item_id, exc)
            rows.append(StoiRow(it.item_id, it.category_id, f"skipped: {exc}", None, None, out_path))
            continue
        rows.append(StoiRow(it.item_id, it.category_id, "ok", value,
                            (pesq or {}).get(it.item_id), out_path))
    return rows


def summarize(rows: list[StoiRow]) -> dict:
    scored = [r.stoi for r in rows if r.stoi is not None]
    pesq = [r.pesq for r in rows if r.pesq is not None]
    return {
        "items": len(rows),
        "scored": len(scored),
        "skipped": len(rows) - len(scored),
        "stoi_mean": float(np.mean(scored)) if scored else None,
        "pesq_mean": float(np.mean(pesq)) if pesq else None,
    }


def write_stoi_csv(rows: list[StoiRow], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STOI_FIELDS)
        for r in rows:
            w.writerow(r.as_csv())


def write_mos_sheet(rows: list[StoiRow], path) -> Path:
    """Blank rating sheet: one line per (clip, pass); instructions alongside."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("item_id", "audio_path", "pass") + MOS_METRICS)
        for p in MOS_PASSES:
            for r in rows:
                if r.generated_path:
                    w.writerow((r.item_id, r.generated_path, p) + ("",) * len(MOS_METRICS))
    path.with_name("MOS_INSTRUCTIONS.txt").write_text(MOS_INSTRUCTIONS, encoding="utf-8")
    return path


def aggregate_mos(sheets) -> dict[str, dict]:
    """Average each item over its passes, then mean and sample sd across items.

    ``sheets`` is one or more filled-in rating CSVs.  Metrics with no scores
    report ``n = 0`` and no mean.
    """
    if isinstance(sheets, (str, Path)):
        sheets = [sheets]
    per_item: dict[str, dict[str, list[float]]] = {m: {} for m in MOS_METRICS}
    for sheet in sheets:
        try:
            with open(sheet, newline="", encoding="utf-8") as fh:
                reader = csv.DictReader(fh)
                missing = [c for c in ("item_id",) + MOS_METRICS if c not in (reader.fieldnames or [])]
                if missing:
                    raise DataError(f"{sheet}: missing columns {', '.join(missing)}")
                for row in reader:
                    for m in MOS_METRICS:
                        cell = (row[m] or "").strip()
                        if not cell:
                            continue
                        score = float(cell)
                        if not 1 <= score <= 5:
                            raise DataError(f"{sheet}: {m} score {score} for {row['item_id']} is outside 1-5")
                        per_item[m].setdefault(row["item_id"], []).append(score)
        except OSError as exc:
            raise DataError(f"cannot read rating sheet {sheet}: {exc}") from exc
        except ValueError as exc:
            raise DataError(f"{sheet}: non-numeric score: {exc}") from exc
    out = {}
    for m in MOS_METRICS:
        means = [statistics.fmean(v) for v in per_item[m].values()]
        out[m] = {
            "n": len(means),
            "mean": statistics.fmean(means) if means else None,
            "sd": statistics.stdev(means) if len(means) > 1 else (0.0 if means else None),
        }
    return out


def plot_stoi(rows: list[StoiRow], path) -> None:
    scored = [r for r in rows if r.stoi is not None]
    fig, ax = plt.subplots(figsize=(max(4, 0.4 * len(rows) + 2), 3))
    ax.bar(range(len(scored)), [r.stoi for r in scored], color="tab:blue")
    ax.set_xticks(range(len(scored)), [r.item_id.rsplit("/", 1)[-1] for r in scored], rotation=60,
                  ha="right", fontsize=7)
    if scored:
        ax.axhline(float(np.mean([r.stoi for r in scored])), color="k", ls="--", lw=1, label="mean")
        ax.legend(fontsize=8)
    ax.set_ylabel("STOI")
    ax.set_title("validation STOI per item")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_losses(log_path, path) -> bool:
    """Loss curves from a per-step GAN log; ``False`` if the log is absent."""
    log_path = Path(log_path)
    if not log_path.is_file():
        return False
    records = [json.loads(line) for line in log_path.read_text(encoding="utf-8").splitlines() if line]
    if not records:
        return False
    steps = [r["step"] for r in records]
    keys = ("l_d", "l_g", "l_fm", "l_wave", "l_mel", "l_cs")
    fig, axes = plt.subplots(2, 3, figsize=(10, 5), sharex=True)
    for ax, k in zip(axes.flat, keys):
        ax.plot(steps, [r[k] for r in records], lw=1)
        ax.set_title(k)
    for ax in axes[-1]:
        ax.set_xlabel("step")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return True


def format_summary(summary: dict) -> str:
    def fmt(v):
        if v is None:
            return "n/a"
        return f"{v:.4f}" if isinstance(v, float) and not math.isnan(v) else str(v)
    return "\n".join(f"{k}\t{fmt(v)}" for k, v in summary.items())
