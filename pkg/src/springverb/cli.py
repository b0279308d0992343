import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .audio import AudioClip, read_wav, write_wav
from .checkpoint import Checkpoint
from .config import ConfigException, load_run_config
from .dataset import DatasetManifest, SPLITS, build_manifest, load_pairs
from .exceptions import SpringverbException
from .features import analyze_dataset
from .gradcheck import gradcheck_losses, gradcheck_model
from .metrics import evaluate, measure_rtf
from .models import KINDS, MODELS, ModelConfig, build, parameter_count, receptive_field, render
from .training import train
from .utils import dump_json, hardware_descriptor

__all__ = ["main", "build_parser"]

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _manifest(args: argparse.Namespace) -> DatasetManifest:
    if getattr(args, "manifest", None):
        return DatasetManifest.load(args.manifest)
    if getattr(args, "dry_dir", None) and getattr(args, "wet_dir", None):
        return build_manifest(args.dry_dir, args.wet_dir, args.seed,
                              getattr(args, "cond_source", None))
    raise ConfigException("pass --manifest or both --dry-dir and --wet-dir")


def _emit(text: str) -> None:
    sys.stdout.write(text + "\n")


def cmd_build_manifest(args: argparse.Namespace) -> int:
    manifest = build_manifest(args.dry_dir, args.wet_dir, args.seed, args.cond_source)
    manifest.save(args.out)
    _emit(f"{args.out}: {manifest.split_sizes()}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    run = load_run_config(args.config, model=args.model, sample_rate=args.sample_rate,
                          seed=args.seed, dry_dir=args.dry_dir, wet_dir=args.wet_dir,
                          manifest=args.manifest, out_dir=args.out,
                          max_epochs=args.epochs, batch_size=args.batch_size)
    paths = run.paths
    if paths.manifest:
        manifest = DatasetManifest.load(paths.manifest)
    elif paths.dry_dir and paths.wet_dir:
        manifest = build_manifest(paths.dry_dir, paths.wet_dir, run.train.seed, paths.cond_source)
    else:
        raise ConfigException("no corpus given: set paths.manifest or --dry-dir/--wet-dir")

    out_dir = Path(paths.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest.save(out_dir / "manifest.json")
    run.save(out_dir / "run_config.json")
    result = train(run.model, run.train, run.loss, manifest, out_dir, resume=args.resume,
                   run_config=run.to_dict(), progress=False if args.no_progress else None)
    last = result.history[-1] if result.history else {}
    _emit(f"best checkpoint: {result.best_path} (epoch {result.best.epoch}, "
          f"final val loss {last.get('val_loss', float('nan')):.5f})")
    return EXIT_OK


def _checkpoint_model(path: str):
    ckpt = Checkpoint.load(path)
    return ckpt, ckpt.build_model()


def cmd_eval(args: argparse.Namespace) -> int:
    ckpt, model = _checkpoint_model(args.checkpoint)
    manifest = _manifest(args)
    if manifest.sample_rate != model.config.sample_rate:
        raise ConfigException(f"checkpoint expects {model.config.sample_rate} Hz, "
                              f"corpus is {manifest.sample_rate} Hz")
    pairs = load_pairs(manifest, args.split)
    report = evaluate(model, pairs, args.seed, rtf_repeats=args.rtf_repeats,
                      run_config=ckpt.run_config, split=args.split)
    if args.json:
        dump_json(args.json, report.to_dict())
    _emit(report.table())
    return EXIT_OK


def cmd_process(args: argparse.Namespace) -> int:
    _, model = _checkpoint_model(args.checkpoint)
    clip = read_wav(args.input)
    rate = model.config.sample_rate
    if clip.sample_rate != rate:
        if not args.force:
            raise ConfigException(f"{args.input} is {clip.sample_rate} Hz, checkpoint expects "
                                  f"{rate} Hz (use --force to process anyway)")
        logger.warning("processing %d Hz audio with a %d Hz model", clip.sample_rate, rate)
    cond = np.asarray(args.cond if args.cond else [0.0] * model.config.cond_dim)
    if cond.shape[0] != model.config.cond_dim:
        raise ConfigException(f"--cond needs {model.config.cond_dim} values, got {cond.shape[0]}")
    wet = render(model, clip.samples.data, cond)
    clipped = write_wav(AudioClip(wet, clip.sample_rate), args.output, args.bit_depth)
    _emit(f"{args.output}: {len(wet)} samples @ {clip.sample_rate} Hz, {clipped} clipped")
    return EXIT_OK


def cmd_benchmark_rtf(args: argparse.Namespace) -> int:
    if args.checkpoint:
        _, model = _checkpoint_model(args.checkpoint)
    elif args.model:
        config = ModelConfig.default(args.model, sample_rate=args.sample_rate or 16000)
        model = build(config, args.seed)
    else:
        raise ConfigException("pass --checkpoint or --model")
    rate = args.sample_rate or model.config.sample_rate
    result = measure_rtf(model, args.duration_s, rate, repeats=args.repeats, seed=args.seed)
    _emit(f"model: {model}")
    _emit(f"rtf median {result.median:.5f}  min {result.min:.5f}  max {result.max:.5f}  "
          f"({'real-time capable' if result.real_time else 'not real-time'})")
    _emit(f"hardware: {hardware_descriptor()}")
    if args.json:
        dump_json(args.json, dict(result.to_dict(), model=model.config.to_dict(),
                                  hardware=hardware_descriptor()))
    return EXIT_OK


def cmd_analyze_dataset(args: argparse.Namespace) -> int:
    features = analyze_dataset(_manifest(args), args.splits)
    if args.json:
        dump_json(args.json, features.to_dict())
    if args.csv:
        features.write_csv(args.csv)
    for name, row in (("dry", features.dry), ("wet", features.wet)):
        pitch = "-" if row.pitch_hz is None else f"{row.pitch_hz:.1f}"
        _emit(f"{name}: LEQ {row.leq_db:.2f} dB  pitch {pitch} Hz  HFC {row.hfc:.4g}")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    kinds = [args.model] if args.model else list(KINDS)
    reports = [gradcheck_model(ModelConfig.default(kind), seed)
               for kind in kinds for seed in args.seed]
    if args.losses:
        reports.extend(gradcheck_losses(seed) for seed in args.seed)
    for report in reports:
        _emit(report.table())
    failed = [r.subject for r in reports if not r.passed]
    if failed:
        _emit(f"FAILED: {', '.join(failed)}")
        return EXIT_FAILURE
    _emit("all gradient checks passed")
    return EXIT_OK


def cmd_list_models(args: argparse.Namespace) -> int:
    rows = []
    for kind in MODELS:
        config = ModelConfig.default(kind)
        rf = "unbounded (recurrent)" if config.is_recurrent else str(receptive_field(config))
        rows.append({"kind": kind, "parameters": parameter_count(config),
                     "receptive_field": rf, "config": config.to_dict()})
    if args.json:
        _emit(json.dumps(rows, indent=2))
        return EXIT_OK
    for row in rows:
        _emit(f"{row['kind']:8s} params {row['parameters']:7d}  receptive field {row['receptive_field']}")
    return EXIT_OK


def _kind(value: str) -> str:
    return value.lower()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="springverb", description="Neural spring reverb toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    def corpus(p: argparse.ArgumentParser) -> None:
        p.add_argument("--manifest", help="dataset manifest JSON")
        p.add_argument("--dry-dir", help="directory of dry WAV files")
        p.add_argument("--wet-dir", help="directory of wet WAV files, paired by name")
        p.add_argument("--cond-source", help="JSON mapping file stem to conditioning vector")

    p = sub.add_parser("build-manifest", help="pair dry/wet files and assign splits")
    p.add_argument("--dry-dir", required=True)
    p.add_argument("--wet-dir", required=True)
    p.add_argument("--cond-source")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_manifest)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="JSON run config; flags override its values")
    corpus(p)
    p.add_argument("--model", type=_kind, choices=KINDS)
    p.add_argument("--sample-rate", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--resume", help="continue from a last.sprv checkpoint")
    p.add_argument("--no-progress", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="ESR / MRSTFT / RTF report with NB and DR rows")
    p.add_argument("--checkpoint", required=True)
    corpus(p)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rtf-repeats", type=int, default=3)
    p.add_argument("--json", help="write the report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("process", help="render a dry WAV through a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--cond", type=float, nargs="*")
    p.add_argument("--bit-depth", type=int, choices=(16, 24, 32), default=16)
    p.add_argument("--force", action="store_true", help="ignore a sample-rate mismatch")
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("benchmark-rtf", help="median real-time factor of whole-clip inference")
    p.add_argument("--checkpoint")
    p.add_argument("--model", type=_kind, choices=KINDS)
    p.add_argument("--sample-rate", type=int, help="default: the checkpoint rate, else 16000")
    p.add_argument("--duration-s", type=float, default=1.0)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json")
    p.set_defaults(func=cmd_benchmark_rtf)

    p = sub.add_parser("analyze-dataset", help="LEQ, YIN pitch and HFC of dry and wet clips")
    corpus(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--splits", nargs="+", choices=SPLITS, default=list(SPLITS))
    p.add_argument("--json")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_analyze_dataset)

    p = sub.add_parser("gradcheck", help="finite-difference check of tape gradients (float64)")
    p.add_argument("--model", type=_kind, choices=KINDS, help="default: every kind")
    p.add_argument("--seed", type=int, nargs="+", default=[1])
    p.add_argument("--losses", action="store_true", help="also check the loss functions")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("list-models", help="model kinds with default size and receptive field")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_list_models)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigException as exc:
        _emit_error(f"springverb {args.command}: {exc}")
        return EXIT_USAGE
    except SpringverbException as exc:
        _emit_error(f"springverb {args.command}: {exc}")
        return EXIT_FAILURE


def _emit_error(text: str) -> None:
    sys.stderr.write(text + "\n")


if __name__ == "__main__":
    sys.exit(main())
