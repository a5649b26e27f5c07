import csv

import numpy as np
import pytest

from conchshell.config import load_config
from conchshell.data import load_audio
from conchshell.errors import DataError
from conchshell.evaluate import aggregate_mos, read_pesq_scores, score_items, summarize
from conchshell.pipeline import prepare, run_evaluate


def _cfg(tmp_path):
    cfg = load_config(overrides={"run": {"profile": "test", "out": str(tmp_path / "out")}})
    return cfg


def test_identity_generation_scores_one(tmp_path, fixture_root):
    cfg = _cfg(tmp_path)
    manifest = prepare(cfg, fixture_root)
    truth = lambda it: load_audio(manifest.resolve(it.audio_path), cfg.n_samples)  # noqa: E731
    result = run_evaluate(cfg, synthesize=truth)
    assert len(result["rows"]) == len(manifest.val)
    assert abs(result["summary"]["stoi_mean"] - 1.0) < 1e-9
    reports = cfg.out / "reports"
    for name in ("stoi.csv", "mos_sheet.csv", "MOS_INSTRUCTIONS.txt", "summary.json", "stoi.png"):
        assert (reports / name).is_file()
    with open(reports / "stoi.csv", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(manifest.val) and all(r["pesq"] == "n/a" for r in rows)
    assert [r["item_id"] for r in rows] == [it.item_id for it in manifest.val]


def test_pesq_column_from_external_file(tmp_path, fixture_root):
    cfg = _cfg(tmp_path)
    manifest = prepare(cfg, fixture_root)
    first = manifest.val[0].item_id
    (tmp_path / "pesq.csv").write_text(f"item_id,pesq\n{first},3.1\n", encoding="utf-8")
    truth = lambda it: load_audio(manifest.resolve(it.audio_path), cfg.n_samples)  # noqa: E731
    rows = run_evaluate(cfg, pesq_file=tmp_path / "pesq.csv", synthesize=truth)["rows"]
    assert rows[0].pesq == 3.1 and all(r.pesq is None for r in rows[1:])


def test_missing_audio_is_skipped_and_counted(tmp_path, manifest):
    items = list(manifest.val)
    broken = items[0].__class__(**{**items[0].__dict__, "audio_path": "missing/none.wav"})
    rows = score_items(manifest, [broken] + items[1:], 16000,
                       lambda it: load_audio(manifest.resolve(it.audio_path), 16000))
    assert rows[0].status == "skipped: missing audio" and rows[0].stoi is None
    summary = summarize(rows)
    assert summary["items"] == len(items) and summary["skipped"] == 1 and summary["scored"] == len(items) - 1


def _sheet(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("item_id", "audio_path", "pass", "i2m_mos", "melody_mos", "noise_mos"))
        w.writerows(rows)
    return path


def test_mos_two_passes_average(tmp_path):
    sheet = _sheet(tmp_path / "s.csv", [("a", "a.wav", 1, 3, 3, ""), ("b", "b.wav", 1, 4, 4, ""),
                                        ("a", "a.wav", 2, 4, 3, ""), ("b", "b.wav", 2, 4, 4, "")])
    out = aggregate_mos(sheet)
    assert out["i2m_mos"]["mean"] == 3.75 and out["i2m_mos"]["n"] == 2
    assert out["i2m_mos"]["sd"] == pytest.approx(np.std([3.5, 4.0], ddof=1))
    assert out["melody_mos"]["mean"] == 3.5
    assert out["noise_mos"] == {"n": 0, "mean": None, "sd": None}


def test_mos_rejects_out_of_range(tmp_path):
    sheet = _sheet(tmp_path / "s.csv", [("a", "a.wav", 1, 6, 3, 3)])
    with pytest.raises(DataError, match="outside 1-5"):
        aggregate_mos(sheet)


def test_pesq_file_errors(tmp_path):
    (tmp_path / "p.csv").write_text("id,score\nx,1\n", encoding="utf-8")
    with pytest.raises(DataError):
        read_pesq_scores(tmp_path / "p.csv")
