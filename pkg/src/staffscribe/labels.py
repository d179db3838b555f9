"""Bidirectional codecs between a symbolic score and the three label formats.

* advance-position: parallel pitch/rhythm token sequences with a `+`
  between consecutive events and chord members listed bottom-to-top.
* flag configurations: one composite symbol per event, made of a binary
  staff-symbol section (staff symbols plus one bit per undotted rest
  duration) and a 2-rows-per-staff-position note grid of
  (rhythm class, accidental class) entries.
* multi-stream: a fixed number of parallel (pitch, rhythm) sequences;
  stream k carries the k-th-from-bottom member of every event and
  `noNote` where an event has fewer members.

Decoding emits canonical scores: voices are renumbered 1..k per event
(voice identity is not part of any encoding) and accidentals are
re-derived from key-signature and measure context.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import notation as nt
from .notation import (
    Accidental,
    AccidentalTracker,
    Note,
    PitchToken,
    RhythmToken,
    ScoreEvent,
    StaffSymbol,
    SymbolicScore,
)


class CodecError(ValueError):
    """Malformed label input."""


# ---------------------------------------------------------------------------
# advance-position encoding

@dataclass(frozen=True)
class AdvanceLabels:
    pitch: tuple[str, ...]
    rhythm: tuple[str, ...]


def encode_advance(score: SymbolicScore) -> AdvanceLabels:
    pitch: list[str] = []
    rhythm: list[str] = []
    for i, event in enumerate(score.events):
        if i:
            pitch.append(nt.PLUS)
            rhythm.append(nt.PLUS)
        if event.is_symbol:
            tok = event.symbol.spell()
            pitch.append(tok)
            rhythm.append(tok)
        else:
            for n in event.notes:
                pitch.append(n.pitch.spell())
                rhythm.append(n.rhythm.spell(rest=n.pitch.is_rest))
    return AdvanceLabels(tuple(pitch), tuple(rhythm))


def _split_events(tokens: tuple[str, ...]) -> list[list[str]]:
    groups: list[list[str]] = [[]]
    for tok in tokens:
        if tok == nt.PLUS:
            groups.append([])
        else:
            groups[-1].append(tok)
    return groups


def decode_advance(labels: AdvanceLabels) -> SymbolicScore:
    plus_p = [i for i, t in enumerate(labels.pitch) if t == nt.PLUS]
    plus_r = [i for i, t in enumerate(labels.rhythm) if t == nt.PLUS]
    if plus_p != plus_r:
        extras = set(plus_p).symmetric_difference(plus_r)
        where = min(
            [a for a, b in zip(plus_p, plus_r) if a != b] + sorted(extras)
        )
        raise CodecError(f"separator positions disagree at token index {where}")
    if not labels.pitch:
        return SymbolicScore(())
    events: list[ScoreEvent] = []
    current_clef: StaffSymbol | None = None
    for gi, (ptoks, rtoks) in enumerate(
        zip(_split_events(labels.pitch), _split_events(labels.rhythm))
    ):
        if len(ptoks) != len(rtoks):
            raise CodecError(
                f"event {gi}: {len(ptoks)} pitch tokens vs {len(rtoks)} rhythm tokens"
            )
        if not ptoks:
            raise CodecError(f"event {gi}: empty (consecutive separators)")
        if _is_staff(ptoks[0]):
            if len(ptoks) != 1 or rtoks[0] != ptoks[0]:
                raise CodecError(f"event {gi}: malformed staff-symbol event")
            sym = nt.parse_staff_symbol(ptoks[0])
            if sym.kind == "clef":
                current_clef = sym
            events.append(ScoreEvent(symbol=sym))
            continue
        entries = []
        for k, (pt, rt) in enumerate(zip(ptoks, rtoks)):
            try:
                pitch = nt.parse_pitch(pt)
                rhy, is_rest = nt.parse_rhythm(rt)
            except ValueError as e:
                raise CodecError(f"event {gi} token {k}: {e}") from None
            if pitch.is_rest != is_rest:
                raise CodecError(
                    f"event {gi} token {k}: pitch {pt!r} vs rhythm {rt!r} rest mismatch"
                )
            if pitch.is_rest:
                entries.append((pitch, rhy, None))
            else:
                if current_clef is None:
                    raise CodecError(f"event {gi}: note before any clef")
                entries.append((pitch, rhy, nt.pitch_to_position(current_clef, pitch)))
        events.append(nt.note_group(entries))
    return SymbolicScore(tuple(events))


def _is_staff(token: str) -> bool:
    return token == "barline" or token.startswith(("clef-", "keysig-", "timesig-"))


# ---------------------------------------------------------------------------
# flag configurations

@dataclass(frozen=True)
class FlagSpace:
    """Dimensions of the composite flag alphabet.

    staff_bits covers the staff-symbol vocabulary followed by one bit
    per rest duration class; the note grid has two rows per staff
    position.  rhythm_classes includes class 0 = noNote.
    """

    staff_bits: int = nt.STAFF_SYMBOL_COUNT + len(nt.REST_FLAG_DURATIONS)
    positions: int = nt.POSITION_COUNT
    rhythm_classes: int = 1 + len(nt.ALL_RHYTHMS)
    accidental_classes: int = nt.ACCIDENTAL_CLASSES

    @property
    def rows(self) -> int:
        return 2 * self.positions


DEFAULT_FLAG_SPACE = FlagSpace()
_REST_BIT_BASE = nt.STAFF_SYMBOL_COUNT


@dataclass(frozen=True)
class FlagConfiguration:
    """One composite symbol: set staff bits plus occupied note-grid rows.

    rows holds (row_index, rhythm_class >= 1, accidental_class), sorted
    by row index.  The all-off configuration (no bits, no rows) is the
    blank of the flag alphabet and never appears as a target symbol.
    """

    bits: frozenset[int] = frozenset()
    rows: tuple[tuple[int, int, int], ...] = ()

    def validate(self, space: FlagSpace) -> None:
        for b in self.bits:
            if not 0 <= b < space.staff_bits:
                raise CodecError(f"staff bit {b} outside [0, {space.staff_bits})")
        last = -1
        for row, rhy, acc in self.rows:
            if not 0 <= row < space.rows:
                raise CodecError(f"grid row {row} outside [0, {space.rows})")
            if row <= last:
                raise CodecError("grid rows out of order or duplicated")
            last = row
            if not 1 <= rhy < space.rhythm_classes:
                raise CodecError(f"rhythm class {rhy} outside [1, {space.rhythm_classes})")
            if not 0 <= acc < space.accidental_classes:
                raise CodecError(f"accidental class {acc} outside [0, {space.accidental_classes})")

    @property
    def is_all_off(self) -> bool:
        return not self.bits and not self.rows


ALL_OFF = FlagConfiguration()

_RHYTHM_CLASS = {r: i + 1 for i, r in enumerate(nt.ALL_RHYTHMS)}
_ACC_CLASS = {a: i for i, a in enumerate(nt.ACCIDENTAL_ORDER)}


def encode_flag(score: SymbolicScore) -> tuple[FlagConfiguration, ...]:
    """One flag configuration per score event."""
    configs: list[FlagConfiguration] = []
    tracker = AccidentalTracker()
    for event in score.events:
        if event.is_symbol:
            sym = event.symbol
            configs.append(
                FlagConfiguration(bits=frozenset({nt.STAFF_SYMBOL_INDEX[sym]}))
            )
            if sym.kind == "keysig":
                tracker.set_key(sym.keysig)
            elif sym.kind == "barline":
                tracker.barline()
            continue
        bits: set[int] = set()
        per_position: dict[int, int] = {}
        rows: list[tuple[int, int, int]] = []
        for n in event.notes:
            if n.pitch.is_rest:
                if n.rhythm.dots:
                    raise CodecError(
                        f"dotted rest {n.rhythm.spell(rest=True)} has no flag representation"
                    )
                bit = _REST_BIT_BASE + nt.BASE_DURATIONS.index(n.rhythm.base)
                if bit in bits:
                    raise CodecError(
                        f"two simultaneous {n.rhythm.base} rests have no flag representation"
                    )
                bits.add(bit)
            else:
                i = nt.position_index(n.position)
                slot = per_position.get(i, 0)
                if slot > 1:
                    raise CodecError(f"more than two notes on staff position {n.position}")
                per_position[i] = slot + 1
                acc = tracker.notate(n.pitch)
                rows.append((2 * i + slot, _RHYTHM_CLASS[n.rhythm], _ACC_CLASS[acc]))
        configs.append(FlagConfiguration(frozenset(bits), tuple(sorted(rows))))
    return tuple(configs)


def decode_flag(configs: tuple[FlagConfiguration, ...]) -> SymbolicScore:
    """Rebuild a score, tracking clef/key and measure accidental state."""
    events: list[ScoreEvent] = []
    current_clef: StaffSymbol | None = None
    tracker = AccidentalTracker()
    for ci, cfg in enumerate(configs):
        cfg.validate(DEFAULT_FLAG_SPACE)
        if cfg.is_all_off:
            continue
        staff_bits = [b for b in cfg.bits if b < _REST_BIT_BASE]
        rest_bits = sorted(b for b in cfg.bits if b >= _REST_BIT_BASE)
        if staff_bits:
            if len(staff_bits) > 1 or rest_bits or cfg.rows:
                raise CodecError(f"configuration {ci}: mixed staff-symbol event")
            sym = nt.STAFF_SYMBOLS[staff_bits[0]]
            if sym.kind == "clef":
                current_clef = sym
            elif sym.kind == "keysig":
                tracker.set_key(sym.keysig)
            elif sym.kind == "barline":
                tracker.barline()
            events.append(ScoreEvent(symbol=sym))
            continue
        entries: list[tuple[PitchToken, RhythmToken, int | None]] = []
        for bit in rest_bits:
            entries.append(
                (nt.REST, RhythmToken(nt.BASE_DURATIONS[bit - _REST_BIT_BASE]), None)
            )
        occupied = {row for row, _, _ in cfg.rows}
        for row, rhy_class, acc_class in cfg.rows:
            if row % 2 == 1 and (row - 1) not in occupied:
                raise CodecError(
                    f"configuration {ci}: upper grid row {row} occupied without lower row"
                )
            if current_clef is None:
                raise CodecError(f"configuration {ci}: note before any clef")
            s = nt.position_from_index(row // 2)
            notated = nt.ACCIDENTAL_ORDER[acc_class]
            base = nt.position_to_pitch(current_clef, 0, Accidental.NONE, s)
            sounded = tracker.sound(base.step, base.octave, notated)
            pitch = PitchToken(base.step, base.octave, sounded)
            entries.append((pitch, nt.ALL_RHYTHMS[rhy_class - 1], s))
        events.append(nt.note_group(entries))
    return SymbolicScore(tuple(events))


# ---------------------------------------------------------------------------
# multi-stream encoding

STREAM_COUNT = 10


@dataclass(frozen=True)
class MultiSeqLabels:
    """STREAM_COUNT parallel (pitch, rhythm) token sequences of equal length."""

    pitch: tuple[tuple[str, ...], ...]
    rhythm: tuple[tuple[str, ...], ...]


def encode_multiseq(score: SymbolicScore) -> MultiSeqLabels:
    pitch: list[list[str]] = [[] for _ in range(STREAM_COUNT)]
    rhythm: list[list[str]] = [[] for _ in range(STREAM_COUNT)]
    for event in score.events:
        if event.is_symbol:
            tok = event.symbol.spell()
            members = [(tok, tok)]
        else:
            if len(event.notes) > STREAM_COUNT:
                raise CodecError(
                    f"event with {len(event.notes)} simultaneous symbols exceeds "
                    f"{STREAM_COUNT} streams"
                )
            members = [
                (n.pitch.spell(), n.rhythm.spell(rest=n.pitch.is_rest))
                for n in event.notes
            ]
        for k in range(STREAM_COUNT):
            if k < len(members):
                pitch[k].append(members[k][0])
                rhythm[k].append(members[k][1])
            else:
                pitch[k].append(nt.NO_NOTE)
                rhythm[k].append(nt.NO_NOTE)
    return MultiSeqLabels(
        tuple(tuple(s) for s in pitch), tuple(tuple(s) for s in rhythm)
    )


def decode_multiseq(labels: MultiSeqLabels) -> SymbolicScore:
    if len(labels.pitch) != STREAM_COUNT or len(labels.rhythm) != STREAM_COUNT:
        raise CodecError(f"expected {STREAM_COUNT} streams on both axes")
    lengths = {len(s) for s in labels.pitch} | {len(s) for s in labels.rhythm}
    if len(lengths) != 1:
        raise CodecError(f"stream lengths disagree: {sorted(lengths)}")
    (n_events,) = lengths
    events: list[ScoreEvent] = []
    current_clef: StaffSymbol | None = None
    for e in range(n_events):
        members = [
            (labels.pitch[k][e], labels.rhythm[k][e])
            for k in range(STREAM_COUNT)
            if not (labels.pitch[k][e] == nt.NO_NOTE and labels.rhythm[k][e] == nt.NO_NOTE)
        ]
        if not members:
            raise CodecError(f"event {e}: all streams are noNote")
        if any(_is_staff(p) for p, _ in members):
            if len(members) != 1 or members[0][0] != members[0][1]:
                raise CodecError(f"event {e}: staff symbol mixed with other tokens")
            sym = nt.parse_staff_symbol(members[0][0])
            if sym.kind == "clef":
                current_clef = sym
            events.append(ScoreEvent(symbol=sym))
            continue
        entries = []
        for k, (pt, rt) in enumerate(members):
            try:
                pitch = nt.parse_pitch(pt)
                rhy, is_rest = nt.parse_rhythm(rt)
            except ValueError as err:
                raise CodecError(f"event {e} stream {k}: {err}") from None
            if pitch.is_rest != is_rest:
                raise CodecError(f"event {e} stream {k}: rest mismatch {pt!r}/{rt!r}")
            if pitch.is_rest:
                entries.append((pitch, rhy, None))
            else:
                if current_clef is None:
                    raise CodecError(f"event {e}: note before any clef")
                entries.append((pitch, rhy, nt.pitch_to_position(current_clef, pitch)))
        events.append(nt.note_group(entries))
    return SymbolicScore(tuple(events))


# ---------------------------------------------------------------------------
# textual spellings for flag configurations and whole scores

_ACC_NAMES = ["none", "sharp", "flat", "natural", "dsharp", "dflat"]
_ACC_NAME_INDEX = {n: i for i, n in enumerate(_ACC_NAMES)}


def spell_flag(cfg: FlagConfiguration) -> str:
    parts: list[str] = []
    for b in sorted(cfg.bits):
        if b < _REST_BIT_BASE:
            parts.append(nt.STAFF_SYMBOLS[b].spell())
        else:
            parts.append(f"rest:{nt.BASE_DURATIONS[b - _REST_BIT_BASE]}")
    for row, rhy, acc in cfg.rows:
        parts.append(f"n{row}={nt.ALL_RHYTHMS[rhy - 1].spell()}:{_ACC_NAMES[acc]}")
    return "{" + ";".join(parts) + "}"


def parse_flag(token: str) -> FlagConfiguration:
    if not (token.startswith("{") and token.endswith("}")):
        raise CodecError(f"bad flag token {token!r}")
    body = token[1:-1]
    bits: set[int] = set()
    rows: list[tuple[int, int, int]] = []
    for part in filter(None, body.split(";")):
        if part.startswith("rest:"):
            base = part[5:]
            if base not in nt.BASE_DURATIONS:
                raise CodecError(f"bad rest duration in flag token: {part!r}")
            bits.add(_REST_BIT_BASE + nt.BASE_DURATIONS.index(base))
        elif part.startswith("n") and "=" in part:
            head, _, tail = part.partition("=")
            rhy_s, _, acc_s = tail.partition(":")
            try:
                row = int(head[1:])
                rhy, is_rest = nt.parse_rhythm(rhy_s)
            except ValueError:
                raise CodecError(f"bad grid row in flag token: {part!r}") from None
            if is_rest or acc_s not in _ACC_NAME_INDEX:
                raise CodecError(f"bad grid row in flag token: {part!r}")
            rows.append((row, _RHYTHM_CLASS[rhy], _ACC_NAME_INDEX[acc_s]))
        else:
            try:
                sym = nt.parse_staff_symbol(part)
            except ValueError:
                raise CodecError(f"bad flag component {part!r}") from None
            bits.add(nt.STAFF_SYMBOL_INDEX[sym])
    cfg = FlagConfiguration(frozenset(bits), tuple(sorted(rows)))
    cfg.validate(DEFAULT_FLAG_SPACE)
    return cfg


def score_to_text(score: SymbolicScore) -> str:
    parts = []
    for event in score.events:
        if event.is_symbol:
            parts.append(event.symbol.spell())
        else:
            parts.append(" ".join(n.spell() for n in event.notes))
    return " ; ".join(parts)


def score_from_text(text: str) -> SymbolicScore:
    events: list[ScoreEvent] = []
    if not text.strip():
        return SymbolicScore(())
    for chunk in text.split(";"):
        toks = chunk.split()
        if not toks:
            raise CodecError("empty event in score text")
        if _is_staff(toks[0]):
            if len(toks) != 1:
                raise CodecError(f"staff symbol mixed with notes: {chunk!r}")
            events.append(ScoreEvent(symbol=nt.parse_staff_symbol(toks[0])))
            continue
        notes = []
        for tok in toks:
            notes.append(_parse_note_spelling(tok))
        events.append(ScoreEvent(notes=tuple(notes)))
    return SymbolicScore(tuple(events))


def _parse_note_spelling(tok: str) -> Note:
    head, _, voice_s = tok.rpartition("v")
    if not voice_s.isdigit():
        raise CodecError(f"bad note spelling {tok!r}")
    voice = int(voice_s)
    if head.startswith("rest_"):
        body, sep, _ = head.partition("@")
        if not sep:
            raise CodecError(f"bad note spelling {tok!r}")
        rhy, _ = nt.parse_rhythm(body)
        return Note(nt.REST, rhy, None, voice)
    body, sep, pos_s = head.partition("@s")
    if not sep:
        raise CodecError(f"bad note spelling {tok!r}")
    try:
        pitch, rhy = nt.parse_combined(body)
        return Note(pitch, rhy, int(pos_s), voice)
    except ValueError as e:
        raise CodecError(f"bad note spelling {tok!r}: {e}") from None


# ---------------------------------------------------------------------------
# label files: one tab-separated line per (sample, field)

@dataclass(frozen=True)
class LabelRecord:
    sample_id: str
    score: SymbolicScore
    advance: AdvanceLabels
    flag: tuple[FlagConfiguration, ...]
    multiseq: MultiSeqLabels


def make_record(sample_id: str, score: SymbolicScore) -> LabelRecord:
    return LabelRecord(
        sample_id=sample_id,
        score=score,
        advance=encode_advance(score),
        flag=encode_flag(score),
        multiseq=encode_multiseq(score),
    )


def write_label_file(path, records: list[LabelRecord]) -> None:
    lines = []
    for r in records:
        lines.append(f"{r.sample_id}\tscore\t{score_to_text(r.score)}")
        lines.append(f"{r.sample_id}\tadvance.pitch\t{' '.join(r.advance.pitch)}")
        lines.append(f"{r.sample_id}\tadvance.rhythm\t{' '.join(r.advance.rhythm)}")
        lines.append(f"{r.sample_id}\tflag\t{' '.join(spell_flag(c) for c in r.flag)}")
        for k in range(STREAM_COUNT):
            toks = [
                _combined_or_marker(p, q)
                for p, q in zip(r.multiseq.pitch[k], r.multiseq.rhythm[k])
            ]
            lines.append(f"{r.sample_id}\tstream.{k}\t{' '.join(toks)}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))


def _combined_or_marker(pitch_tok: str, rhythm_tok: str) -> str:
    if pitch_tok == nt.NO_NOTE:
        return nt.NO_NOTE
    if _is_staff(pitch_tok):
        return pitch_tok
    if pitch_tok == "rest":
        return rhythm_tok
    return f"{pitch_tok}_{rhythm_tok}"


def _split_combined(tok: str) -> tuple[str, str]:
    if tok == nt.NO_NOTE:
        return nt.NO_NOTE, nt.NO_NOTE
    if _is_staff(tok):
        nt.parse_staff_symbol(tok)
        return tok, tok
    pitch, rhythm = nt.parse_combined(tok)
    return pitch.spell(), rhythm.spell(rest=pitch.is_rest)


def read_label_file(path) -> list[LabelRecord]:
    raw: dict[str, dict[str, str]] = {}
    order: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise CodecError(f"{path}:{ln}: expected 3 tab-separated fields")
            sid, key, payload = fields
            if sid not in raw:
                raw[sid] = {}
                order.append(sid)
            raw[sid][key] = payload
    records = []
    for sid in order:
        fields = raw[sid]
        try:
            score = score_from_text(fields["score"])
            advance = AdvanceLabels(
                tuple(fields["advance.pitch"].split()),
                tuple(fields["advance.rhythm"].split()),
            )
            flag = tuple(parse_flag(t) for t in fields["flag"].split())
            pitch_streams, rhythm_streams = [], []
            for k in range(STREAM_COUNT):
                pairs = [_split_combined(t) for t in fields[f"stream.{k}"].split()]
                pitch_streams.append(tuple(p for p, _ in pairs))
                rhythm_streams.append(tuple(q for _, q in pairs))
        except KeyError as e:
            raise CodecError(f"sample {sid!r}: missing field {e}") from None
        records.append(
            LabelRecord(
                sid, score, advance, flag,
                MultiSeqLabels(tuple(pitch_streams), tuple(rhythm_streams)),
            )
        )
    return records
