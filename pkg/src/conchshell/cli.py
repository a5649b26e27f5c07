"""``conchshell`` command line.

Exit codes: 0 success, 1 usage or configuration error, 2 data error
(including missing or corrupt checkpoints), 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import LEVELS, PROFILES, default_yaml, load_config
from .data import read_wav, write_fixture
from .dsp import SAMPLE_RATE, mel, save_spectrogram
from .errors import ConchShellError, ConfigError, DataError, NumericError
from .evaluate import MOS_METRICS, aggregate_mos
from .optim import seed_everything

log = logging.getLogger("conchshell")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(**fields) -> None:
    for k, v in fields.items():
        print(f"{k}\t{v}")


def _config(args):
    run = {}
    for key in ("profile", "level", "seed", "out"):
        value = getattr(args, key, None)
        if value is not None:
            run[key] = str(value) if key == "out" else value
    cfg = load_config(args.config, {"run": run} if run else None)
    seed_everything(cfg.seed)
    return cfg


def cmd_prepare(args) -> int:
    cfg = _config(args)
    manifest = pipeline.prepare(cfg, args.root)
    _emit(manifest=cfg.manifest_path.as_posix(), items=len(manifest.items), train=len(manifest.train),
          val=len(manifest.val))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    if args.stage == "tcnn":
        _emit(checkpoint=pipeline.run_tcnn(cfg).as_posix())
    elif args.stage == "codec":
        _emit(checkpoint=pipeline.run_codec(cfg).as_posix())
    else:
        run = pipeline.run_gan(cfg)
        last = run.records[-1] if run.records else {}
        _emit(checkpoint=pipeline.paths(cfg)["gan"].as_posix(), steps=len(run.records),
              **{k: f"{last[k]:.6f}" for k in ("l_d", "l_cs", "l_wave") if k in last})
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = _config(args)
    checkpoints = Path(args.checkpoints) if args.checkpoints else pipeline.paths(cfg)["checkpoints"]
    out = Path(args.output) if args.output else pipeline.paths(cfg)["wavs"] / (Path(args.image).stem + ".wav")
    path = pipeline.generate_wav(args.image, checkpoints, out)
    _emit(wav=path.as_posix(), samples=read_wav(path)[0].shape[-1])
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    result = pipeline.run_evaluate(cfg, args.pesq_scores)
    reports = pipeline.paths(cfg)["reports"]
    print("---- per-item STOI ----")
    print("item_id\tstatus\tstoi\tpesq")
    for r in result["rows"]:
        cells = r.as_csv()
        print("\t".join((cells[0], cells[2], cells[3], cells[4])))
    print("---- summary ----")
    for k, v in result["summary"].items():
        print(f"{k}\t{'n/a' if v is None else (f'{v:.4f}' if isinstance(v, float) else v)}")
    _emit(report=(reports / "stoi.csv").as_posix(), mos_sheet=(reports / "mos_sheet.csv").as_posix(),
          figure=(reports / "stoi.png").as_posix())
    return EXIT_OK


def cmd_aggregate_mos(args) -> int:
    result = aggregate_mos(args.sheets)
    print("metric\tn\tmean\tsd")
    for m in MOS_METRICS:
        r = result[m]
        mean = "n/a" if r["mean"] is None else f"{r['mean']:.4f}"
        sd = "n/a" if r["sd"] is None else f"{r['sd']:.4f}"
        print(f"{m}\t{r['n']}\t{mean}\t{sd}")
    if args.json:
        Path(args.json).write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_make_fixture(args) -> int:
    root = write_fixture(args.root, args.pairs, args.duration, seed=args.seed or 0)
    _emit(fixture=Path(root).as_posix(), pairs=6 * args.pairs)
    return EXIT_OK


def cmd_mel(args) -> int:
    samples, sr = read_wav(args.wav)
    if sr != SAMPLE_RATE:
        raise DataError(f"{args.wav}: expected {SAMPLE_RATE} Hz audio, got {sr} Hz")
    spec = mel(samples.mean(axis=0)).numpy()
    save_spectrogram(spec, args.output)
    _emit(spectrogram=Path(args.output).as_posix(), bands=spec.shape[0], frames=spec.shape[1])
    return EXIT_OK


def cmd_config(args) -> int:
    sys.stdout.write(default_yaml(args.profile or "paper"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--profile", choices=PROFILES, help="paper (8 s) or test (1 s) defaults")
    common.add_argument("--level", choices=LEVELS, help="codec level the generator targets")
    common.add_argument("--out", help="output root (checkpoints/ logs/ reports/ wavs/)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = _Parser(prog="conchshell", description="Image-to-piano generation pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", parents=[common], help="build the train/val manifest")
    p.add_argument("root", nargs="?", help="corpus root (default: data.root or $CONCHSHELL_DATA)")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", parents=[common], help="train one stage")
    p.add_argument("stage", choices=("tcnn", "codec", "gan"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", parents=[common], help="render a WAV from an image")
    p.add_argument("image")
    p.add_argument("-o", "--output", help="WAV path (default: <out>/wavs/<image stem>.wav)")
    p.add_argument("--checkpoints", help="checkpoint directory (default: <out>/checkpoints)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", parents=[common], help="STOI report, rating sheet and figures")
    p.add_argument("--pesq-scores", help="CSV of externally computed PESQ (item_id,pesq)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("aggregate-mos", parents=[common], help="mean and sd of filled rating sheets")
    p.add_argument("sheets", nargs="+")
    p.add_argument("--json", help="also write the result as JSON")
    p.set_defaults(func=cmd_aggregate_mos)

    p = sub.add_parser("make-fixture", parents=[common], help="write the synthetic six-category corpus")
    p.add_argument("root")
    p.add_argument("--pairs", type=int, default=4, help="pairs per category")
    p.add_argument("--duration", type=float, default=1.0, help="clip length in seconds")
    p.set_defaults(func=cmd_make_fixture)

    p = sub.add_parser("mel", parents=[common], help="dump the log-mel spectrogram of a 16 kHz WAV")
    p.add_argument("wav")
    p.add_argument("output")
    p.set_defaults(func=cmd_mel)

    p = sub.add_parser("config", parents=[common], help="print the documented default configuration")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConchShellError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
