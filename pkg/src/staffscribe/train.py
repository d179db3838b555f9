"""Optimization loop: Adam over per-decoder CTC objectives.

Batches are drawn by a deterministic schedule (a permutation per epoch
seeded from (seed, epoch)), so a run is a pure function of its seed and
resuming from a checkpoint replays the exact remaining trajectory.
Samples inside a batch are bucketed by image width; each bucket runs as
one batched graph and the batch loss is the mean over samples.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field
from math import ceil
from pathlib import Path

import numpy as np

from . import ctc as ctc_mod
from . import diffcore as dc
from . import notation as nt
from .diffcore import Tensor
from .evaluation import EvalSample, evaluate
from .labels import FlagConfiguration, LabelRecord, STREAM_COUNT
from .model import (
    PITCH_BLANK,
    RHYTHM_BLANK,
    TranscriptionModel,
    config_from_header,
    config_to_header,
)


class TrainingDiverged(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# optimizer

class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.values) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.values) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.values -= (self.lr / b1c) * m / (np.sqrt(v / b2c) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {f"adam.m.{k}": v for k, v in self.m.items()}
        out.update({f"adam.v.{k}": v for k, v in self.v.items()})
        out["adam.t"] = np.array(float(self.t))
        return out

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for k in self.m:
            self.m[k] = arrays[f"adam.m.{k}"].copy()
            self.v[k] = arrays[f"adam.v.{k}"].copy()
        self.t = int(arrays["adam.t"])


# ---------------------------------------------------------------------------
# training samples: preprocessed image plus all three target forms

@dataclass(frozen=True)
class TrainSample:
    sample_id: str
    image: np.ndarray  # preprocessed, (H, W), ink high
    pitch_target: tuple[int, ...]
    rhythm_target: tuple[int, ...]
    flag_target: tuple[FlagConfiguration, ...]
    stream_targets: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]


def make_train_sample(record: LabelRecord, image: np.ndarray) -> TrainSample:
    streams = tuple(
        (
            tuple(nt.PITCH_AXIS_INDEX[t] for t in record.multiseq.pitch[k]),
            tuple(nt.RHYTHM_AXIS_INDEX[t] for t in record.multiseq.rhythm[k]),
        )
        for k in range(STREAM_COUNT)
    )
    return TrainSample(
        sample_id=record.sample_id,
        image=image,
        pitch_target=tuple(nt.PITCH_AXIS_INDEX[t] for t in record.advance.pitch),
        rhythm_target=tuple(nt.RHYTHM_AXIS_INDEX[t] for t in record.advance.rhythm),
        flag_target=record.flag,
        stream_targets=streams,
    )


def eval_sample_of(record: LabelRecord, image: np.ndarray) -> EvalSample:
    return EvalSample(
        sample_id=record.sample_id,
        image=image,
        pitch_truth=record.advance.pitch,
        rhythm_truth=record.advance.rhythm,
    )


# ---------------------------------------------------------------------------
# loss assembly

def batch_loss(model: TranscriptionModel, samples: list[TrainSample]) -> Tensor:
    """Mean per-sample loss over a batch, bucketed by image width."""
    buckets: dict[int, list[TrainSample]] = {}
    for s in samples:
        buckets.setdefault(s.image.shape[1], []).append(s)
    terms: list[Tensor] = []
    for width in sorted(buckets):
        group = buckets[width]
        enc = model.encode(np.stack([s.image for s in group]))
        terms.extend(_group_losses(model, enc, group))
    total = terms[0]
    for t in terms[1:]:
        total = dc.add(total, t)
    return dc.scale(total, 1.0 / len(samples))


def _group_losses(model, enc, group) -> list[Tensor]:
    kind = model.config.decoder
    if kind == "baseline":
        pitch_lat, rhythm_lat = model.head_baseline(enc)
        return [
            ctc_mod.loss_baseline(
                dc.index_axis0(pitch_lat, b),
                dc.index_axis0(rhythm_lat, b),
                list(s.pitch_target),
                list(s.rhythm_target),
                PITCH_BLANK,
                RHYTHM_BLANK,
            )
            for b, s in enumerate(group)
        ]
    if kind == "flag":
        activations = model.head_flag(enc)
        return [
            ctc_mod.loss_flag(act, s.flag_target)
            for act, s in zip(activations, group)
        ]
    streams = model.head_rnn(enc)
    out = []
    for b, s in enumerate(group):
        lattices = [
            (dc.index_axis0(p, b), dc.index_axis0(r, b)) for p, r in streams
        ]
        out.append(
            ctc_mod.loss_rnn(
                lattices,
                [(list(p), list(r)) for p, r in s.stream_targets],
                PITCH_BLANK,
                RHYTHM_BLANK,
            )
        )
    return out


# ---------------------------------------------------------------------------
# schedule and loop

def batch_indices(step: int, n: int, batch_size: int, seed: int) -> np.ndarray:
    """Deterministic batch composition: permutation per epoch, sliced."""
    per_epoch = ceil(n / batch_size)
    epoch, slot = divmod(step, per_epoch)
    rng = np.random.default_rng((seed, epoch))
    perm = rng.permutation(n)
    return perm[slot * batch_size : (slot + 1) * batch_size]


@dataclass
class TrainSettings:
    learning_rate: float = 1e-4
    batch_size: int = 16
    max_steps: int = 1000
    seed: int = 0
    val_every: int = 200
    log_every: int = 25
    grad_clip: float = 0.0  # 0 disables clipping
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8


@dataclass
class TrainResult:
    steps: int
    final_loss: float
    best_metric: float
    history: list[tuple[int, float]] = field(default_factory=list)


def train(
    model: TranscriptionModel,
    train_samples: list[TrainSample],
    settings: TrainSettings,
    out_dir: str | Path,
    val_samples: list[EvalSample] | None = None,
    resume: bool = False,
    progress: bool = False,
) -> TrainResult:
    """Optimize the model, logging deterministically to <out_dir>/train.log.

    Writes last.ckpt every validation interval and at the end, and
    best.ckpt whenever validation SER improves.  With resume=True the
    run continues from last.ckpt, replaying the same trajectory the
    uninterrupted run would have produced.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train.log"
    opt = Adam(
        model.params,
        settings.learning_rate,
        settings.adam_beta1,
        settings.adam_beta2,
        settings.adam_eps,
    )
    start_step = 0
    best_metric = np.inf
    log_lines: list[str] = []
    if resume:
        arrays, header = dc.load_checkpoint(out_dir / "last.ckpt")
        if config_from_header(_model_header(header)) != model.config:
            raise dc.CheckpointError("checkpoint model config differs from current run")
        model.load_state({k: v for k, v in arrays.items() if not k.startswith("adam.") and k != "train.step"})
        opt.load_state(arrays)
        start_step = int(arrays["train.step"])
        best_metric = float(arrays.get("train.best", np.array(np.inf)))
        log_lines = log_path.read_text().splitlines() if log_path.exists() else []

    mode = "flag_ctc" if model.config.decoder == "flag" else (
        "mean_stream_ctc" if model.config.decoder == "rnn" else "pitch_plus_rhythm_ctc"
    )
    if not resume:
        log_lines = [
            f"train decoder={model.config.decoder} loss_fn={mode} "
            f"lr={settings.learning_rate:g} batch={settings.batch_size} "
            f"steps={settings.max_steps} seed={settings.seed} "
            f"samples={len(train_samples)}"
        ]

    result = TrainResult(steps=start_step, final_loss=np.nan, best_metric=best_metric)
    t0 = time.monotonic()
    loss_value = np.nan
    for step in range(start_step, settings.max_steps):
        idx = batch_indices(step, len(train_samples), settings.batch_size, settings.seed)
        batch = [train_samples[i] for i in idx]
        loss = batch_loss(model, batch)
        loss_value = loss.item()
        if not np.isfinite(loss_value):
            ids = ",".join(s.sample_id for s in batch)
            _flush(log_path, log_lines + [f"abort step={step} loss={loss_value} batch={ids}"])
            raise TrainingDiverged(
                f"non-finite loss at step {step}; offending batch: {ids}"
            )
        loss.backward()
        if settings.grad_clip > 0.0:
            _clip_gradients(model.params, settings.grad_clip)
        opt.step()
        result.history.append((step, loss_value))
        if (step + 1) % settings.log_every == 0 or step == start_step:
            log_lines.append(f"step={step + 1} loss={loss_value:.6f}")
            if progress:
                rate = (step + 1 - start_step) / max(time.monotonic() - t0, 1e-9)
                print(
                    f"step {step + 1}/{settings.max_steps} loss {loss_value:.4f} "
                    f"({rate:.2f} steps/s)",
                    file=sys.stderr,
                )
        if val_samples and (step + 1) % settings.val_every == 0:
            metric = _validate(model, val_samples, step + 1, log_lines)
            if metric < best_metric:
                best_metric = metric
                _save(model, opt, step + 1, best_metric, out_dir / "best.ckpt")
            _save(model, opt, step + 1, best_metric, out_dir / "last.ckpt")
    final_step = settings.max_steps
    if val_samples:
        metric = _validate(model, val_samples, final_step, log_lines)
        if metric < best_metric:
            best_metric = metric
            _save(model, opt, final_step, best_metric, out_dir / "best.ckpt")
    else:
        _save(model, opt, final_step, best_metric, out_dir / "best.ckpt")
    _save(model, opt, final_step, best_metric, out_dir / "last.ckpt")
    _flush(log_path, log_lines)
    result.steps = final_step
    result.final_loss = loss_value
    result.best_metric = best_metric
    return result


def _clip_gradients(params: dict[str, Tensor], max_norm: float) -> None:
    total = 0.0
    for p in params.values():
        total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = np.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params.values():
            p.grad *= scale


def _validate(model, val_samples, step, log_lines) -> float:
    report = evaluate(model, val_samples, dataset_tag="val")
    metric = report.rhythm.rate + report.pitch.rate
    log_lines.append(
        f"val step={step} rhythm_ser={report.rhythm.percent:.4f} "
        f"pitch_ser={report.pitch.percent:.4f}"
    )
    return metric


def _save(model, opt, step, best_metric, path) -> None:
    arrays = dict(model.state_arrays())
    arrays.update(opt.state_arrays())
    arrays["train.step"] = np.array(float(step))
    arrays["train.best"] = np.array(float(best_metric))
    dc.save_checkpoint(path, arrays, header=config_to_header(model.config))


def _flush(path: Path, lines: list[str]) -> None:
    path.write_text("\n".join(lines) + "\n")


def _model_header(header: dict[str, str]) -> dict[str, str]:
    return header


def load_model_checkpoint(path: str | Path) -> tuple[TranscriptionModel, dict]:
    """Instantiate a model from a checkpoint file (weights + config header)."""
    arrays, header = dc.load_checkpoint(path)
    model = TranscriptionModel(config_from_header(header), seed=0)
    model.load_state(
        {k: v for k, v in arrays.items() if not k.startswith(("adam.", "train."))}
    )
    return model, header
