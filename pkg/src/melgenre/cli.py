"""Command line entry point: ``melgenre <subcommand> [options]``.

Exit status is 0 on success, 1 for invalid configuration or inputs, 2 when a
stage fails at run time.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, load_config
from .corpus import synth_corpus
from .dataset import DatasetError
from .dsp import SpectrogramFileError

log = logging.getLogger("melgenre")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help="worker processes for extract/train")
    p.add_argument("--out", dest="output_root", help="output root directory")
    p.add_argument("--manifest")
    p.add_argument("--genre-table", dest="genre_table")
    p.add_argument("--audio-root", dest="audio_root")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="melgenre",
                                     description="Linear vs mel spectrogram genre experiment")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="write linear and mel dB tensors per track")
    _common(p)
    p.add_argument("--force", action="store_true", help="recompute existing tensors")

    p = sub.add_parser("render", help="render one tensor as a PPM image")
    _common(p)
    p.add_argument("track_id")
    p.add_argument("--kind", choices=("linear", "mel"), default="mel")

    p = sub.add_parser("split", help="stratified test split and per-genre OVA subsets")
    _common(p)

    p = sub.add_parser("train", help="train one classifier per genre x kind x variant")
    _common(p)
    p.add_argument("--force", action="store_true", help="retrain existing cells")

    p = sub.add_parser("evaluate", help="per-genre metrics on the test split")
    _common(p)

    p = sub.add_parser("compare", help="Shapiro-Wilk + paired t-test on linear vs mel F1")
    _common(p)
    p.add_argument("--pairing", choices=("model", "cell"))
    p.add_argument("--records", type=Path, help="records CSV to compare (default: eval output)")

    p = sub.add_parser("report", help="markdown summary of evaluation and comparison")
    _common(p)

    p = sub.add_parser("synth-corpus", help="generate a synthetic WAV corpus and manifest")
    p.add_argument("out_dir", type=Path)
    p.add_argument("--size", type=int, default=320)
    p.add_argument("--genres", type=int, default=4, help="number of synthetic genres (16 = full table)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=1.5, help="seconds per track")
    p.add_argument("--variants", default="32,128", help="variants written to experiment.cfg")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _config_from_args(args):
    overrides = {k: getattr(args, k, None)
                 for k in ("seed", "jobs", "output_root", "manifest", "genre_table", "audio_root")}
    overrides = {k: (str(v) if isinstance(v, int) else v) for k, v in overrides.items()}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value
    if getattr(args, "pairing", None):
        overrides["pairing"] = args.pairing
    return load_config(args.config, overrides)


def _run(args) -> int:
    if args.command == "synth-corpus":
        corpus = synth_corpus(args.out_dir, size=args.size, n_genres=args.genres,
                              seed=args.seed, duration=args.duration)
        cfg_path = args.out_dir / "experiment.cfg"
        cfg_path.write_text(
            "# generated by synth-corpus\n"
            "manifest = manifest.csv\ngenre_table = genres.csv\naudio_root = audio\n"
            f"output_root = out\nseed = {args.seed}\nvariants = {args.variants}\n"
            f"epochs = {args.epochs}\n", encoding="utf-8")
        print(f"wrote {len(corpus.records)} tracks to {corpus.audio_dir}; config {cfg_path}")
        return EXIT_OK

    cfg = _config_from_args(args)
    cfg.validate(need_inputs=args.command in ("extract", "split", "train", "evaluate"))

    if args.command == "extract":
        s = pipeline.cmd_extract(cfg, force=args.force)
        print(f"extracted {s.extracted}, skipped {s.skipped}, failed {s.failed} ({s.log_path})")
    elif args.command == "render":
        print(pipeline.cmd_render(cfg, args.track_id, args.kind))
    elif args.command == "split":
        plan = pipeline.cmd_split(cfg)
        print(f"test {len(plan.test_indices)}, train pool {len(plan.train_pool)}; "
              "OVA subsets disjoint from test: yes")
        for w in plan.warnings:
            print(f"warning: {w}")
    elif args.command == "train":
        results = pipeline.cmd_train(cfg, force=args.force)
        trained = sum(1 for _, status in results if status == "trained")
        print(f"{len(results)} cells ({trained} trained, {len(results) - trained} skipped)")
    elif args.command == "evaluate":
        report = pipeline.cmd_evaluate(cfg)
        for (kind, variant), row in report.macro.items():
            print(f"{kind:6s} v{variant:>4s}  macro F1 {row['f1']:.4f}  "
                  f"balanced acc {row['balanced_accuracy']:.4f}")
    elif args.command == "compare":
        out = pipeline.cmd_compare(cfg, args.records)
        r = out.result
        print(f"n={r.n} t={r.t_statistic:.4f} df={r.degrees_of_freedom} p={r.p_value:.4g} "
              f"W={r.shapiro_w:.4f} (p={r.shapiro_p:.4g}) -> {out.result_path}")
    elif args.command == "report":
        print(pipeline.cmd_report(cfg))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (ConfigError, DatasetError, pipeline.StageInputError, SpectrogramFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime failure
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
