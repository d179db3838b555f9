"""Command-line entry point.

Commands:
    dataset     render a synthetic corpus with labels, splits, statistics
    train       optimize a decoder on a dataset split
    eval        score a checkpoint on the full and hard test subsets
    transcribe  print the token transcription of one staff image

Configuration precedence: built-in defaults < config file (--config,
"key = value" lines) < command-line flags.  Exit codes: 0 success,
1 usage error, 2 runtime failure.  Logs go to stderr; reports to files.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import evaluation as ev
from . import ingest
from . import model as md
from . import render as rd
from . import train as tr
from .render import GeneratorKnobs, NoiseOptions


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    decoder: str = "baseline"
    learning_rate: float = 1e-4
    batch_size: int = 16
    max_steps: int = 1000
    seed: int = 0
    data_dir: str = "data"
    out_dir: str = "run"
    checkpoint: str = ""
    split_fractions: str = "0.7,0.15,0.15"
    hard_threshold: int = 41
    n_samples: int = 256
    voices: str = "2,3"
    measures: str = "1,2"
    events_per_measure: str = "2,4"
    rest_prob: float = 0.1
    accidental_prob: float = 0.1
    noise: bool = False
    model_size: str = "small"
    dtype: str = "float32"
    val_every: int = 200
    log_every: int = 25
    grad_clip: float = 0.0
    overfit_n: int = 0
    eval_split: str = "test"
    resume: bool = False

    def pair(self, name: str) -> tuple[int, int]:
        parts = getattr(self, name).split(",")
        if len(parts) != 2:
            raise UsageError(f"{name} must be 'lo,hi', got {getattr(self, name)!r}")
        return int(parts[0]), int(parts[1])

    def fractions(self) -> tuple[float, float, float]:
        parts = [float(x) for x in self.split_fractions.split(",")]
        if len(parts) != 3:
            raise UsageError(f"split_fractions needs 3 values, got {self.split_fractions!r}")
        return tuple(parts)  # type: ignore[return-value]

    def knobs(self) -> GeneratorKnobs:
        return GeneratorKnobs(
            voices=self.pair("voices"),
            measures=self.pair("measures"),
            events_per_measure=self.pair("events_per_measure"),
            rest_prob=self.rest_prob,
            accidental_prob=self.accidental_prob,
        )

    def model_config(self) -> md.ModelConfig:
        if self.model_size == "tiny":
            return md.tiny_config(self.decoder, dtype=self.dtype)
        if self.model_size == "small":
            return md.small_config(self.decoder, dtype=self.dtype)
        if self.model_size == "full":
            return md.ModelConfig(decoder=self.decoder, dtype=self.dtype)
        raise UsageError(f"unknown model size {self.model_size!r}")


_BOOL_FIELDS = {"noise", "resume"}


def load_config_file(path: str | Path) -> dict[str, str]:
    values: dict[str, str] = {}
    known = {f.name for f in fields(RunConfig)}
    for ln, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in known:
            raise UsageError(f"{path}:{ln}: unknown or malformed setting {raw!r}")
        values[key] = value.strip()
    return values


def resolve_config(file_values: dict[str, str], flag_values: dict[str, object]) -> RunConfig:
    cfg = RunConfig()
    casts = {f.name: f.type for f in fields(RunConfig)}
    updates: dict[str, object] = {}
    for key, text in file_values.items():
        kind = type(getattr(cfg, key))
        updates[key] = (text.lower() in ("1", "true", "yes", "on")) if kind is bool else kind(text)
    for key, value in flag_values.items():
        if value is not None:
            updates[key] = value
    del casts
    return replace(cfg, **updates)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="staffscribe",
        description="End-to-end transcription of polyphonic single-staff images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    defaults = RunConfig()

    def add_common(p):
        p.add_argument("--config", help="settings file of 'key = value' lines")
        p.add_argument("--seed", type=int, help=f"run seed (default {defaults.seed})")
        p.add_argument("--data-dir", dest="data_dir", help="dataset directory")
        p.add_argument("--out-dir", dest="out_dir", help="output directory")

    p = sub.add_parser("dataset", help="render a synthetic corpus")
    add_common(p)
    p.add_argument("--n-samples", dest="n_samples", type=int,
                   help=f"corpus size (default {defaults.n_samples})")
    p.add_argument("--voices", help="lo,hi concurrent voices (default 2,3)")
    p.add_argument("--measures", help="lo,hi measures per sample (default 1,2)")
    p.add_argument("--events-per-measure", dest="events_per_measure",
                   help="lo,hi events per measure (default 2,4)")
    p.add_argument("--rest-prob", dest="rest_prob", type=float)
    p.add_argument("--accidental-prob", dest="accidental_prob", type=float)
    p.add_argument("--noise", action="store_const", const=True,
                   help="enable crop jitter and edge clutter")
    p.add_argument("--hard-threshold", dest="hard_threshold", type=int,
                   help=f"density threshold for the hard subset (default {defaults.hard_threshold})")
    p.add_argument("--split-fractions", dest="split_fractions",
                   help="train,val,test fractions (default 0.7,0.15,0.15)")

    p = sub.add_parser("train", help="train a decoder")
    add_common(p)
    p.add_argument("--decoder", choices=md.DECODER_KINDS)
    p.add_argument("--learning-rate", dest="learning_rate", type=float,
                   help=f"Adam learning rate (default {defaults.learning_rate:g})")
    p.add_argument("--batch-size", dest="batch_size", type=int,
                   help=f"batch size (default {defaults.batch_size})")
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--model-size", dest="model_size", choices=("tiny", "small", "full"))
    p.add_argument("--dtype", choices=("float32", "float64"))
    p.add_argument("--val-every", dest="val_every", type=int)
    p.add_argument("--log-every", dest="log_every", type=int)
    p.add_argument("--grad-clip", dest="grad_clip", type=float)
    p.add_argument("--overfit-n", dest="overfit_n", type=int,
                   help="train and validate on the first N train samples")
    p.add_argument("--resume", action="store_const", const=True,
                   help="continue from <out-dir>/last.ckpt")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    add_common(p)
    p.add_argument("--checkpoint", help="checkpoint file (default <out-dir>/best.ckpt)")
    p.add_argument("--decoder", choices=md.DECODER_KINDS,
                   help="expected decoder kind; must match the checkpoint")
    p.add_argument("--eval-split", dest="eval_split", choices=("train", "val", "test"))

    p = sub.add_parser("transcribe", help="transcribe one staff image")
    add_common(p)
    p.add_argument("image", help="path to a PGM staff image")
    p.add_argument("--checkpoint", help="checkpoint file (default <out-dir>/best.ckpt)")
    p.add_argument("--decoder", choices=md.DECODER_KINDS)
    return parser


def _gather_config(args: argparse.Namespace) -> RunConfig:
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
    flag_values = {
        f.name: getattr(args, f.name)
        for f in fields(RunConfig)
        if hasattr(args, f.name)
    }
    return resolve_config(file_values, flag_values)


# ---------------------------------------------------------------------------
# commands

def cmd_dataset(cfg: RunConfig) -> int:
    noise = NoiseOptions() if cfg.noise else None
    data = ds.build_dataset(
        cfg.data_dir,
        n_samples=cfg.n_samples,
        seed=cfg.seed,
        knobs=cfg.knobs(),
        noise=noise,
        hard_threshold=cfg.hard_threshold,
        fractions=cfg.fractions(),
    )
    print(
        f"dataset: {len(data.order)} samples -> {cfg.data_dir} "
        f"(train/val/test = {len(data.splits['train'])}/"
        f"{len(data.splits['val'])}/{len(data.splits['test'])}, "
        f"hard = {len(data.hard_ids)})",
        file=sys.stderr,
    )
    return 0


def _load_split_samples(data: ds.Dataset, ids: list[str], height: int):
    train_samples = []
    eval_samples = []
    for sid in ids:
        record = data.records[sid]
        image = data.load_preprocessed(sid, height)
        train_samples.append(tr.make_train_sample(record, image))
        eval_samples.append(tr.eval_sample_of(record, image))
    return train_samples, eval_samples


def cmd_train(cfg: RunConfig) -> int:
    data = ds.load_dataset(cfg.data_dir)
    model_cfg = cfg.model_config()
    model = md.TranscriptionModel(model_cfg, seed=cfg.seed)
    height = model_cfg.encoder.input_height
    if cfg.overfit_n > 0:
        ids = data.ids("train")[: cfg.overfit_n]
        if len(ids) < cfg.overfit_n:
            raise UsageError(
                f"overfit_n={cfg.overfit_n} but train split has {len(ids)} samples"
            )
        train_samples, val_samples = _load_split_samples(data, ids, height)
    else:
        train_samples, _ = _load_split_samples(data, data.ids("train"), height)
        _, val_samples = _load_split_samples(data, data.ids("val"), height)
    settings = tr.TrainSettings(
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        max_steps=cfg.max_steps,
        seed=cfg.seed,
        val_every=cfg.val_every,
        log_every=cfg.log_every,
        grad_clip=cfg.grad_clip,
    )
    result = tr.train(
        model,
        train_samples,
        settings,
        cfg.out_dir,
        val_samples=val_samples or None,
        resume=cfg.resume,
        progress=True,
    )
    print(
        f"train: {result.steps} steps, final loss {result.final_loss:.4f}, "
        f"best val metric {result.best_metric:.4f} -> {cfg.out_dir}",
        file=sys.stderr,
    )
    return 0


def _load_checkpoint_model(cfg: RunConfig) -> md.TranscriptionModel:
    path = cfg.checkpoint or str(Path(cfg.out_dir) / "best.ckpt")
    model, _ = tr.load_model_checkpoint(path)
    if cfg.checkpoint == "" and not Path(path).exists():
        raise UsageError(f"no checkpoint at {path}")
    if "decoder" in _explicit_flags and model.config.decoder != cfg.decoder:
        raise UsageError(
            f"decoder mismatch: flag requests {cfg.decoder!r} but checkpoint "
            f"{path} holds {model.config.decoder!r}"
        )
    return model


def cmd_eval(cfg: RunConfig) -> int:
    model = _load_checkpoint_model(cfg)
    data = ds.load_dataset(cfg.data_dir)
    height = model.config.encoder.input_height
    ids = data.ids(cfg.eval_split)
    if not ids:
        raise UsageError(f"split {cfg.eval_split!r} is empty in {cfg.data_dir}")
    _, full = _load_split_samples(data, ids, height)
    reports = [ev.evaluate(model, full, dataset_tag="full")]
    hard_ids = data.ids(cfg.eval_split, hard_only=True)
    if hard_ids:
        _, hard = _load_split_samples(data, hard_ids, height)
        reports.append(ev.evaluate(model, hard, dataset_tag="hard"))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval_report.txt").write_text(ev.format_report_table(reports))
    (out / "eval_records.txt").write_text(
        "".join(r.machine_line() + "\n" for r in reports)
    )
    print(ev.format_report_table(reports), end="", file=sys.stderr)
    return 0


def cmd_transcribe(cfg: RunConfig, image_path: str) -> int:
    model = _load_checkpoint_model(cfg)
    pixels = rd.read_pgm(image_path)
    image = md.preprocess(pixels, model.config.encoder.input_height)
    ((pitch, rhythm),) = ev.predict_tokens(model, [image])
    print("pitch\t" + " ".join(pitch))
    print("rhythm\t" + " ".join(rhythm))
    return 0


_explicit_flags: set[str] = set()


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _explicit_flags.clear()
    for key, value in vars(args).items():
        if value is not None and key not in ("command", "config", "image"):
            _explicit_flags.add(key)
    try:
        cfg = _gather_config(args)
        if args.command == "dataset":
            return cmd_dataset(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "transcribe":
            return cmd_transcribe(cfg, args.image)
        raise UsageError(f"unknown command {args.command!r}")
    except (UsageError, ingest.IngestError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # runtime failure
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
