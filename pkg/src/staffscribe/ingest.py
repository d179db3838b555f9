"""MusicXML ingestion: parse a restricted subset into symbolic scores,
detect polyphony, compute corpus statistics, build splits.

Supported elements: note (pitch, rest, chord, type, dot, voice, grace),
backup, forward, attributes (divisions, key, time, clef), measures.
Dynamics, ties, articulations, lyrics and other markings are skipped.
Samples using tuplets (time-modification) or anything that cannot be
represented in the symbol set are rejected with a reason code rather
than silently mangled.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import notation as nt
from .notation import (
    Accidental,
    PitchToken,
    RhythmToken,
    ScoreEvent,
    StaffSymbol,
    SymbolicScore,
)

HARD_DENSITY_THRESHOLD = 41
SPLIT_FRACTIONS = (0.70, 0.15, 0.15)


class IngestError(ValueError):
    """Malformed document (XML-level failure)."""


class SampleRejected(Exception):
    """Well-formed document outside the supported subset."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


@dataclass(frozen=True)
class ParsedSample:
    score: SymbolicScore
    per_measure_voices: tuple[frozenset[str], ...]  # raw MusicXML voice tags

    @property
    def voice_count(self) -> int:
        return max((len(v) for v in self.per_measure_voices), default=0)


_ALTER_TO_ACCIDENTAL = {
    0: Accidental.NONE,
    1: Accidental.SHARP,
    -1: Accidental.FLAT,
    2: Accidental.DOUBLE_SHARP,
    -2: Accidental.DOUBLE_FLAT,
}


def parse_musicxml(text: str) -> ParsedSample:
    """Parse an uncompressed score-partwise document."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as e:
        raise IngestError(f"malformed MusicXML: {e}") from None
    if root.tag != "score-partwise":
        raise IngestError(f"unsupported root element <{root.tag}>")
    parts = root.findall("part")
    if not parts:
        raise IngestError("document contains no <part>")
    if len(parts) > 1:
        raise SampleRejected("multi-part", f"{len(parts)} parts")
    measures = parts[0].findall("measure")
    if not measures:
        raise IngestError("part contains no <measure>")

    events: list[ScoreEvent] = []
    measure_voices: list[frozenset[str]] = []
    divisions = 1
    current_clef: StaffSymbol | None = None
    for mi, measure in enumerate(measures):
        items: list[tuple[int, int, object]] = []  # (onset, seq, payload)
        seq = 0
        cursor = 0
        prev_onset = 0
        prev_duration = 0
        voices: set[str] = set()
        for el in measure:
            if el.tag == "attributes":
                div = el.find("divisions")
                if div is not None:
                    divisions = int(div.text)
                for sym in _attribute_symbols(el, mi):
                    if sym.kind == "clef":
                        current_clef = sym
                    items.append((cursor, seq, sym))
                    seq += 1
            elif el.tag == "backup":
                cursor -= _duration_of(el, mi)
            elif el.tag == "forward":
                cursor += _duration_of(el, mi)
            elif el.tag == "note":
                if el.find("grace") is not None:
                    continue  # no duration; outside the symbol set
                if el.find("time-modification") is not None:
                    raise SampleRejected("tuplet", f"measure {mi + 1}")
                duration = _duration_of(el, mi)
                is_chord = el.find("chord") is not None
                onset = prev_onset if is_chord else cursor
                if not is_chord:
                    prev_onset = cursor
                    prev_duration = duration
                    cursor += duration
                voice = el.findtext("voice", default="1").strip()
                if el.find("rest") is not None:
                    rhythm = _rhythm_of(el, mi, default_whole=True)
                    voices.add(voice)
                    items.append((onset, seq, (nt.REST, rhythm, None, voice)))
                    seq += 1
                    continue
                pitch_el = el.find("pitch")
                if pitch_el is None:
                    continue  # unpitched/percussion: skip, cursor already moved
                rhythm = _rhythm_of(el, mi, default_whole=False)
                pitch = _pitch_of(pitch_el, mi)
                if current_clef is None:
                    raise SampleRejected("no-clef", f"note before clef in measure {mi + 1}")
                try:
                    position = nt.pitch_to_position(current_clef, pitch)
                except ValueError as e:
                    raise SampleRejected("out-of-range-pitch", str(e)) from None
                voices.add(voice)
                items.append((onset, seq, (pitch, rhythm, position, voice)))
                seq += 1
            # anything else (direction, harmony, barline styles, print): skipped
        events.extend(_assemble_measure(items, mi))
        events.append(ScoreEvent(symbol=nt.BARLINE))
        measure_voices.append(frozenset(voices))
    try:
        score = SymbolicScore(tuple(events))
    except ValueError as e:
        raise SampleRejected("invalid-score", str(e)) from None
    return ParsedSample(score, tuple(measure_voices))


def _assemble_measure(items, mi) -> list[ScoreEvent]:
    out: list[ScoreEvent] = []
    pending: dict[int, list] = {}
    for onset, _seq, payload in sorted(items, key=lambda t: (t[0], t[1])):
        if isinstance(payload, StaffSymbol):
            # flush is unnecessary: attribute changes precede notes at an onset
            out.append(ScoreEvent(symbol=payload))
        else:
            pending.setdefault(onset, []).append(payload)
    for onset in sorted(pending):
        entries = [(p, r, s) for (p, r, s, _v) in pending[onset]]
        try:
            out.append(nt.note_group(entries))
        except ValueError as e:
            raise SampleRejected("position-overflow", f"measure {mi + 1}: {e}") from None
    return out


def _attribute_symbols(el, mi) -> list[StaffSymbol]:
    # normalized emission order: clef, key, time
    symbols: list[StaffSymbol] = []
    clef_el = el.find("clef")
    if clef_el is not None:
        sign = clef_el.findtext("sign", default="").strip()
        line = clef_el.findtext("line", default="").strip()
        kind = f"{sign}{line}"
        if kind not in nt.CLEF_KINDS:
            raise SampleRejected("unsupported-clef", f"{sign}/{line} in measure {mi + 1}")
        symbols.append(nt.clef(kind))
    key_el = el.find("key")
    if key_el is not None:
        fifths = int(key_el.findtext("fifths", default="0"))
        if fifths != 0:  # zero fifths means no key-signature symbol at all
            if fifths not in nt.KEYSIG_VALUES:
                raise SampleRejected("unsupported-key", f"fifths={fifths}")
            symbols.append(nt.keysig(fifths))
    time_el = el.find("time")
    if time_el is not None:
        beats = int(time_el.findtext("beats", default="0"))
        beat_type = int(time_el.findtext("beat-type", default="0"))
        if beats not in nt.TIMESIG_NUMERATORS or beat_type not in nt.TIMESIG_DENOMINATORS:
            raise SampleRejected("unsupported-timesig", f"{beats}/{beat_type}")
        symbols.append(nt.timesig(beats, beat_type))
    return symbols


def _duration_of(el, mi) -> int:
    text = el.findtext("duration")
    if text is None:
        raise IngestError(f"measure {mi + 1}: element <{el.tag}> lacks <duration>")
    return int(text)


def _rhythm_of(el, mi, default_whole: bool) -> RhythmToken:
    type_text = el.findtext("type")
    if type_text is None:
        if default_whole:
            return RhythmToken("whole")
        raise SampleRejected("missing-type", f"pitched note in measure {mi + 1}")
    base = type_text.strip()
    dots = len(el.findall("dot"))
    if base not in nt.BASE_DURATIONS:
        raise SampleRejected("unsupported-duration", f"{base!r} in measure {mi + 1}")
    if dots > nt.MAX_DOTS:
        raise SampleRejected("unsupported-duration", f"{dots} dots in measure {mi + 1}")
    return RhythmToken(base, dots)


def _pitch_of(el, mi) -> PitchToken:
    step = el.findtext("step", default="").strip()
    octave_text = el.findtext("octave", default="").strip()
    alter_text = el.findtext("alter", default="0").strip()
    try:
        alter = int(Fraction(alter_text))
        if Fraction(alter_text) != alter:
            raise ValueError
    except ValueError:
        raise SampleRejected("unsupported-alter", f"alter={alter_text}") from None
    if alter not in _ALTER_TO_ACCIDENTAL:
        raise SampleRejected("unsupported-alter", f"alter={alter_text}")
    try:
        return PitchToken(step, int(octave_text), _ALTER_TO_ACCIDENTAL[alter])
    except ValueError as e:
        raise SampleRejected("bad-pitch", f"measure {mi + 1}: {e}") from None


# ---------------------------------------------------------------------------
# corpus predicates and statistics

def is_polyphonic(per_measure_voices) -> bool:
    """True iff some measure defines at least two voices."""
    return any(len(v) >= 2 for v in per_measure_voices)


def is_sparse(score: SymbolicScore) -> bool:
    """True iff the sample contains no pitched notes (rests only)."""
    for e in score.events:
        if not e.is_symbol and any(not n.pitch.is_rest for n in e.notes):
            return False
    return True


@dataclass(frozen=True)
class SampleStats:
    sample_id: str
    length: int  # labelled symbols
    measures: int
    density: Fraction  # symbols per measure
    voices: int


@dataclass(frozen=True)
class CorpusStats:
    samples: tuple[SampleStats, ...]
    excluded: tuple[tuple[str, str], ...] = ()  # (sample_id, reason)

    def _agg(self, attr):
        values = [float(getattr(s, attr)) for s in self.samples]
        return min(values), sum(values) / len(values), max(values)

    def table(self) -> str:
        rows = [
            ("length_symbols", "length"),
            ("length_measures", "measures"),
            ("density_symbols_per_measure", "density"),
            ("polyphony_voices", "voices"),
        ]
        lines = [f"samples\t{len(self.samples)}"]
        for label, attr in rows:
            lo, mean, hi = self._agg(attr)
            lines.append(f"{label}\tmin {lo:g}\tmean {mean:.2f}\tmax {hi:g}")
        for sid, reason in self.excluded:
            lines.append(f"excluded\t{sid}\t{reason}")
        return "\n".join(lines) + "\n"


def sample_stats(sample_id: str, score: SymbolicScore, voices: int) -> SampleStats | None:
    """Stats for one sample; None when it has no measures."""
    measures = score.measure_count()
    if measures == 0:
        return None
    length = score.symbol_count()
    return SampleStats(sample_id, length, measures, Fraction(length, measures), voices)


def compute_stats(samples: list[tuple[str, SymbolicScore, int]]) -> CorpusStats:
    """Aggregate per-sample statistics; zero-measure samples are excluded."""
    if not samples:
        raise IngestError("empty corpus")
    kept: list[SampleStats] = []
    excluded: list[tuple[str, str]] = []
    for sid, score, voices in samples:
        st = sample_stats(sid, score, voices)
        if st is None:
            excluded.append((sid, "zero-measures"))
        else:
            kept.append(st)
    if not kept:
        raise IngestError("no sample has a complete measure")
    return CorpusStats(tuple(kept), tuple(excluded))


def hard_filter(stats: CorpusStats, threshold: int = HARD_DENSITY_THRESHOLD) -> list[str]:
    """Sample ids whose density is at least the threshold (inclusive).

    Densities are exact rationals, so 41 stays in and anything below —
    however close — drops out.
    """
    return [s.sample_id for s in stats.samples if s.density >= threshold]


def split(
    sample_ids: list[str],
    seed: int,
    fractions: tuple[float, float, float] = SPLIT_FRACTIONS,
) -> dict[str, list[str]]:
    """Deterministic disjoint train/val/test partition.

    Sizes are round(f * n) for train and val with the remainder as test,
    so each deviates from the exact fraction by at most one sample.
    """
    n = len(sample_ids)
    if n < 10:
        raise IngestError(f"corpus of {n} samples is too small to split (need >= 10)")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise IngestError(f"split fractions {fractions} do not sum to 1")
    order = list(sample_ids)
    rng = np.random.default_rng(np.random.PCG64(seed))
    rng.shuffle(order)
    n_train = round(fractions[0] * n)
    n_val = round(fractions[1] * n)
    return {
        "train": order[:n_train],
        "val": order[n_train : n_train + n_val],
        "test": order[n_train + n_val :],
    }
