"""Symbol error rate and the decoder comparison harness.

SER = (insertions + deletions + substitutions) / ground-truth length,
computed from a minimal edit-distance decomposition.  Corpus-level
rates aggregate summed edit counts over summed ground-truth lengths
(micro average), not the mean of per-sample rates.

All decoders are scored in the same token space: predictions are
converted to advance-position pitch and rhythm token sequences before
comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ctc as ctc_mod
from . import notation as nt
from .labels import FlagConfiguration
from .model import PITCH_BLANK, RHYTHM_BLANK, TranscriptionModel
from .notation import AccidentalTracker


class EvalError(ValueError):
    pass


# ---------------------------------------------------------------------------
# edit distance with operation counts

@dataclass(frozen=True)
class EditCounts:
    insertions: int
    deletions: int
    substitutions: int
    truth_len: int

    @property
    def errors(self) -> int:
        return self.insertions + self.deletions + self.substitutions

    @property
    def rate(self) -> float:
        return self.errors / self.truth_len


def ser(predicted, truth) -> EditCounts:
    """Minimal edit decomposition between token sequences.

    Ground truth must be non-empty.  Ties between decompositions of
    equal total cost are broken substitution-first (standard traceback
    order); the total always equals the Levenshtein distance.
    """
    truth = list(truth)
    predicted = list(predicted)
    n, m = len(truth), len(predicted)
    if n == 0:
        raise EvalError("ground truth is empty (SER undefined)")
    # dp[i][j]: (cost, ins, del, sub) aligning truth[:i] with predicted[:j];
    # an extra predicted token is an insertion, a missing one a deletion
    prev = [(j, j, 0, 0) for j in range(m + 1)]
    for i in range(1, n + 1):
        cur = [(i, 0, i, 0)] + [None] * m
        for j in range(1, m + 1):
            if truth[i - 1] == predicted[j - 1]:
                cost, a, b, c = prev[j - 1]
                cur[j] = (cost, a, b, c)
                continue
            sub = prev[j - 1]
            dele = prev[j]
            ins = cur[j - 1]
            best = min(sub[0], dele[0], ins[0])
            if sub[0] == best:
                cur[j] = (best + 1, sub[1], sub[2], sub[3] + 1)
            elif dele[0] == best:
                cur[j] = (best + 1, dele[1], dele[2] + 1, dele[3])
            else:
                cur[j] = (best + 1, ins[1] + 1, ins[2], ins[3])
        prev = cur
    _, ins, dele, sub = prev[m]
    return EditCounts(ins, dele, sub, n)


# ---------------------------------------------------------------------------
# reports

@dataclass
class AxisAggregate:
    insertions: int = 0
    deletions: int = 0
    substitutions: int = 0
    truth_len: int = 0

    def add(self, c: EditCounts) -> None:
        self.insertions += c.insertions
        self.deletions += c.deletions
        self.substitutions += c.substitutions
        self.truth_len += c.truth_len

    @property
    def rate(self) -> float:
        errors = self.insertions + self.deletions + self.substitutions
        return errors / self.truth_len if self.truth_len else 0.0

    @property
    def percent(self) -> float:
        return 100.0 * self.rate


@dataclass
class SERReport:
    decoder: str
    dataset_tag: str  # "full" | "hard" | free-form
    rhythm: AxisAggregate = field(default_factory=AxisAggregate)
    pitch: AxisAggregate = field(default_factory=AxisAggregate)
    per_sample: list[tuple[str, EditCounts, EditCounts]] = field(default_factory=list)

    def add_sample(self, sample_id: str, rhythm: EditCounts, pitch: EditCounts) -> None:
        self.rhythm.add(rhythm)
        self.pitch.add(pitch)
        self.per_sample.append((sample_id, rhythm, pitch))

    def machine_line(self) -> str:
        r, p = self.rhythm, self.pitch
        return (
            f"report\t{self.decoder}\t{self.dataset_tag}"
            f"\trhythm_ser={r.percent:.4f}\tpitch_ser={p.percent:.4f}"
            f"\trhythm_IDSN={r.insertions},{r.deletions},{r.substitutions},{r.truth_len}"
            f"\tpitch_IDSN={p.insertions},{p.deletions},{p.substitutions},{p.truth_len}"
            f"\tsamples={len(self.per_sample)}"
        )


def format_report_table(reports: list[SERReport]) -> str:
    """Aligned table, one decoder per row, (full | hard) column pairs."""
    tags = []
    for r in reports:
        if r.dataset_tag not in tags:
            tags.append(r.dataset_tag)
    decoders = []
    for r in reports:
        if r.decoder not in decoders:
            decoders.append(r.decoder)
    by_key = {(r.decoder, r.dataset_tag): r for r in reports}
    header = f"{'decoder':<10}"
    for tag in tags:
        header += f"  {tag + ' rhythm SER%':>18}  {tag + ' pitch SER%':>17}"
    lines = [header]
    for d in decoders:
        row = f"{d:<10}"
        for tag in tags:
            r = by_key.get((d, tag))
            if r is None:
                row += f"  {'-':>18}  {'-':>17}"
            else:
                row += f"  {r.rhythm.percent:>18.2f}  {r.pitch.percent:>17.2f}"
        lines.append(row)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# prediction -> advance-position token sequences

def flag_configs_to_advance(
    configs: list[FlagConfiguration],
) -> tuple[list[str], list[str]]:
    """Best-effort conversion of decoded configurations to token sequences.

    Unlike the strict codec, model output may be arbitrary: multiple
    staff bits become consecutive staff-symbol events, notes seen
    before any clef are dropped, and grid rows are read bottom-to-top
    without pairing checks.
    """
    pitch_events: list[list[str]] = []
    rhythm_events: list[list[str]] = []
    current_clef = None
    tracker = AccidentalTracker()
    rest_base = nt.STAFF_SYMBOL_COUNT
    for cfg in configs:
        staff_bits = sorted(b for b in cfg.bits if b < rest_base)
        rest_bits = sorted(b for b in cfg.bits if b >= rest_base)
        for b in staff_bits:
            sym = nt.STAFF_SYMBOLS[b]
            if sym.kind == "clef":
                current_clef = sym
            elif sym.kind == "keysig":
                tracker.set_key(sym.keysig)
            elif sym.kind == "barline":
                tracker.barline()
            tok = sym.spell()
            pitch_events.append([tok])
            rhythm_events.append([tok])
        ptoks: list[str] = []
        rtoks: list[str] = []
        for b in rest_bits:
            rhythm = nt.RhythmToken(nt.BASE_DURATIONS[b - rest_base])
            ptoks.append("rest")
            rtoks.append(rhythm.spell(rest=True))
        for row, rhy_class, acc_class in cfg.rows:
            if current_clef is None:
                continue
            s = nt.position_from_index(row // 2)
            notated = nt.ACCIDENTAL_ORDER[acc_class]
            base = nt.position_to_pitch(current_clef, 0, nt.Accidental.NONE, s)
            sounded = tracker.sound(base.step, base.octave, notated)
            ptoks.append(nt.PitchToken(base.step, base.octave, sounded).spell())
            rtoks.append(nt.ALL_RHYTHMS[rhy_class - 1].spell())
        if ptoks:
            pitch_events.append(ptoks)
            rhythm_events.append(rtoks)
    return _join_events(pitch_events), _join_events(rhythm_events)


def merge_streams(stream_tokens: list[list[str]]) -> list[str]:
    """Combine per-stream decodes by emission index, dropping noNote.

    Streams may be ragged at inference time; missing tail entries count
    as noNote.  Events whose members all vanish are skipped.
    """
    n_events = max((len(s) for s in stream_tokens), default=0)
    events = []
    for e in range(n_events):
        toks = [
            s[e]
            for s in stream_tokens
            if e < len(s) and s[e] != nt.NO_NOTE
        ]
        if toks:
            events.append(toks)
    return _join_events(events)


def _join_events(events: list[list[str]]) -> list[str]:
    out: list[str] = []
    for i, toks in enumerate(events):
        if i:
            out.append(nt.PLUS)
        out.extend(toks)
    return out


def predict_tokens(
    model: TranscriptionModel, images: list[np.ndarray]
) -> list[tuple[list[str], list[str]]]:
    """Greedy transcription of preprocessed images into advance-position
    pitch/rhythm token sequences.  Images are bucketed by width so each
    bucket runs as one batch."""
    results: list[tuple[list[str], list[str]] | None] = [None] * len(images)
    buckets: dict[int, list[int]] = {}
    for i, img in enumerate(images):
        buckets.setdefault(img.shape[1], []).append(i)
    for width in sorted(buckets):
        idx = buckets[width]
        batch = np.stack([images[i] for i in idx])
        enc = model.encode(batch)
        for pos, i in enumerate(idx):
            results[i] = _decode_one(model, enc, pos)
    return results  # type: ignore[return-value]


def _decode_one(model, enc, b) -> tuple[list[str], list[str]]:
    kind = model.config.decoder
    if kind == "baseline":
        pitch_lat, rhythm_lat = model.head_baseline(enc)
        p = ctc_mod.greedy_decode(pitch_lat.values[b], PITCH_BLANK)
        r = ctc_mod.greedy_decode(rhythm_lat.values[b], RHYTHM_BLANK)
        return [nt.PITCH_AXIS_VOCAB[i] for i in p], [nt.RHYTHM_AXIS_VOCAB[i] for i in r]
    if kind == "flag":
        act = model.head_flag(enc)[b]
        staff = 1.0 / (1.0 + np.exp(-act.staff_logits.values))
        rhythm = np.exp(act.rhythm_logits.values - act.rhythm_logits.values.max(axis=-1, keepdims=True))
        rhythm /= rhythm.sum(axis=-1, keepdims=True)
        acc = np.exp(act.accidental_logits.values - act.accidental_logits.values.max(axis=-1, keepdims=True))
        acc /= acc.sum(axis=-1, keepdims=True)
        configs = ctc_mod.greedy_decode_flag(staff, rhythm, acc)
        return flag_configs_to_advance(configs)
    streams = model.head_rnn(enc)
    pitch_streams, rhythm_streams = [], []
    for pitch_lat, rhythm_lat in streams:
        p = ctc_mod.greedy_decode(pitch_lat.values[b], PITCH_BLANK)
        r = ctc_mod.greedy_decode(rhythm_lat.values[b], RHYTHM_BLANK)
        pitch_streams.append([nt.PITCH_AXIS_VOCAB[i] for i in p])
        rhythm_streams.append([nt.RHYTHM_AXIS_VOCAB[i] for i in r])
    return merge_streams(pitch_streams), merge_streams(rhythm_streams)


# ---------------------------------------------------------------------------
# dataset-level evaluation

@dataclass(frozen=True)
class EvalSample:
    sample_id: str
    image: np.ndarray  # preprocessed (ink high), fixed height
    pitch_truth: tuple[str, ...]
    rhythm_truth: tuple[str, ...]


def evaluate(
    model: TranscriptionModel,
    samples: list[EvalSample],
    dataset_tag: str,
    batch_size: int = 16,
) -> SERReport:
    report = SERReport(decoder=model.config.decoder, dataset_tag=dataset_tag)
    for lo in range(0, len(samples), batch_size):
        chunk = samples[lo : lo + batch_size]
        predictions = predict_tokens(model, [s.image for s in chunk])
        for s, (p_tokens, r_tokens) in zip(chunk, predictions):
            report.add_sample(
                s.sample_id,
                rhythm=ser(r_tokens, s.rhythm_truth),
                pitch=ser(p_tokens, s.pitch_truth),
            )
    return report
