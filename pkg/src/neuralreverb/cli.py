"""Command-line interface.

Subcommands: pretrain, train, eval, infer, spectrogram. Every report path
(metrics, training log, spectrogram grid) gets a rendered PNG figure next
to the delimited file. Exit codes: 0 success, 1 usage, 2 data error,
3 numeric failure. The NEURALREVERB_SEED environment variable overrides
the root seed.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import dsp, report, training
from .audio_io import load_manifest, load_wav, save_wav, split_dataset
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig, TrainSettings, parse_config_file
from .errors import (
    ConfigError,
    DataError,
    IntegrityError,
    NumericError,
    UnsupportedFormatError,
    VersionError,
    WavParseError,
)
from .training import model_from_checkpoint

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

SEED_ENV_VAR = "NEURALREVERB_SEED"
DEFAULT_SEED = 1234

_DATA_ERRORS = (
    DataError,
    WavParseError,
    UnsupportedFormatError,
    ConfigError,
    IntegrityError,
    VersionError,
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
    ValueError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def root_seed() -> int:
    value = os.environ.get(SEED_ENV_VAR)
    if value is None:
        return DEFAULT_SEED
    try:
        return int(value)
    except ValueError:
        raise DataError(f"{SEED_ENV_VAR} must be an integer, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="neuralreverb", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="initialize the filter bank by reconstruction")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="training log CSV (default: <out>.log.csv)")

    p = sub.add_parser("train", help="end-to-end training from a pretrained checkpoint")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--init", required=True, help="pretrained checkpoint")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="training log CSV (default: <out>.log.csv)")

    p = sub.add_parser("eval", help="objective metrics on one split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", default="test", choices=("train", "validation", "test"))
    p.add_argument("--out", required=True, help="metrics CSV")

    p = sub.add_parser("infer", help="process a WAV file through a trained model")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bit-depth", default="pcm16", choices=("pcm16", "pcm24", "float32"))

    p = sub.add_parser("spectrogram", help="export a log-power spectrogram grid")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="grid CSV")
    p.add_argument("--frame", type=int, default=4096)
    p.add_argument("--hop", type=int, default=2048)

    return parser


def _load_split_dataset(manifest, cfg, seed):
    pairs = load_manifest(manifest, expected_sample_rate=cfg.sample_rate)
    return split_dataset(pairs, seed=seed)


def _write_train_outputs(records, ckpt, out_path, log_path):
    save_checkpoint(ckpt, out_path)
    log_path = log_path or (str(out_path) + ".log.csv")
    report.write_training_log_csv(records, log_path)
    report.render_training_curves(records, report.figure_path_for(log_path))
    return log_path


def cmd_pretrain(args) -> int:
    seed = root_seed()
    cfg, settings = parse_config_file(args.config)
    settings = TrainSettings(**{**settings.__dict__, "seed": seed})
    dataset = _load_split_dataset(args.manifest, cfg, seed)
    records: list = []
    ckpt = training.pretrain(dataset, cfg, settings, log=records)
    log_path = _write_train_outputs(records, ckpt, args.out, args.log)
    print(f"pretrain: best val loss {ckpt.best_val_loss:.6g} at epoch {ckpt.epoch}")
    print(f"wrote {args.out}, {log_path}")
    return EXIT_OK


def cmd_train(args) -> int:
    seed = root_seed()
    cfg, settings = parse_config_file(args.config)
    settings = TrainSettings(**{**settings.__dict__, "seed": seed})
    dataset = _load_split_dataset(args.manifest, cfg, seed)
    init = load_checkpoint(args.init)
    records: list = []
    ckpt = training.train(dataset, cfg, init, settings, log=records)
    log_path = _write_train_outputs(records, ckpt, args.out, args.log)
    print(f"train: best val loss {ckpt.best_val_loss:.6g} at epoch {ckpt.epoch} ({ckpt.phase})")
    print(f"wrote {args.out}, {log_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    seed = root_seed()
    ckpt = load_checkpoint(args.ckpt)
    dataset = _load_split_dataset(args.manifest, ckpt.config, seed)
    model = model_from_checkpoint(ckpt)
    rows = training.evaluate(dataset, args.split, model)
    report.write_metrics_csv(rows, args.out)
    report.render_metrics_figure(rows, report.figure_path_for(args.out))
    mean = rows[-1]
    print(f"eval[{args.split}]: mae={mean[1]:.6g} mse={mean[2]:.6g} loss={mean[3]:.6g}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_infer(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    model = model_from_checkpoint(ckpt)
    clip = load_wav(args.input)
    processed = model.process_clip(clip)
    save_wav(processed, args.out, args.bit_depth)
    print(f"wrote {args.out} ({processed.duration:.3f}s at {processed.sample_rate} Hz)")
    return EXIT_OK


def cmd_spectrogram(args) -> int:
    clip = load_wav(args.input)
    frames = dsp.frame_signal(clip.samples, args.frame, args.hop)
    grid = np.stack([dsp.log_power_spectrum(frame) for frame in frames])
    report.write_spectrogram_csv(grid, clip.sample_rate, args.hop, args.out)
    report.render_spectrogram_figure(grid, clip.sample_rate, args.hop, report.figure_path_for(args.out))
    print(f"wrote {args.out} ({grid.shape[0]} frames x {grid.shape[1]} bins)")
    return EXIT_OK


_COMMANDS = {
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "spectrogram": cmd_spectrogram,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
