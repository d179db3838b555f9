"""Domain model for the restricted notation symbol set.

Covers pitches, rhythms, accidentals, staff symbols (clefs, key
signatures, time signatures, barlines), discrete staff positions, and
the clef/key-aware mapping between positions and pitches.  All types
are immutable and hashable.

Canonical token grammar (used in label files and CLI output):

    clef-G2  clef-F4  clef-C3  clef-C4
    keysig-K            K in -7..7 without 0, e.g. keysig-3, keysig--2
    timesig-N/D         N in {2,3,4,5,6,7,9,12}, D in {2,4,8}
    barline
    note-C4             pitch-axis note token: step, octave, accidental
    note-C4#  note-E5b  note-G4## note-A3bb note-F4n
    rest                pitch-axis rest token
    quarter  eighth.    rhythm-axis note token: base duration + dots
    rest_quarter        rhythm-axis rest token
    note-C4#_quarter.   combined note token (score files, stream labels)
    +                   event separator in the advance-position encoding
    noNote              unoccupied slot in a parallel-stream encoding

Parsers reject any spelling not produced by this grammar.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator

# ---------------------------------------------------------------------------
# accidentals

class Accidental(Enum):
    NONE = ""
    SHARP = "#"
    FLAT = "b"
    NATURAL = "n"
    DOUBLE_SHARP = "##"
    DOUBLE_FLAT = "bb"

    @property
    def alteration(self) -> int:
        """Chromatic alteration in semitones; natural sounds like none."""
        return _ALTERATION[self]


_ALTERATION = {
    Accidental.NONE: 0,
    Accidental.NATURAL: 0,
    Accidental.SHARP: 1,
    Accidental.FLAT: -1,
    Accidental.DOUBLE_SHARP: 2,
    Accidental.DOUBLE_FLAT: -2,
}

_ACCIDENTAL_BY_SUFFIX = {a.value: a for a in Accidental}

# order fixed: this is the class index layout of the note-grid decoder
ACCIDENTAL_ORDER = [
    Accidental.NONE,
    Accidental.SHARP,
    Accidental.FLAT,
    Accidental.NATURAL,
    Accidental.DOUBLE_SHARP,
    Accidental.DOUBLE_FLAT,
]
ACCIDENTAL_CLASSES = len(ACCIDENTAL_ORDER)  # 6

STEPS = "CDEFGAB"
_STEP_INDEX = {s: i for i, s in enumerate(STEPS)}

# sharps enter F C G D A E B; flats enter B E A D G C F
SHARP_ORDER = "FCGDAEB"
FLAT_ORDER = "BEADGCF"


def key_alteration(step: str, keysig: int) -> Accidental:
    """Accidental a key signature applies to a step (all octaves)."""
    if keysig > 0 and step in SHARP_ORDER[:keysig]:
        return Accidental.SHARP
    if keysig < 0 and step in FLAT_ORDER[:-keysig]:
        return Accidental.FLAT
    return Accidental.NONE


# ---------------------------------------------------------------------------
# pitch

@dataclass(frozen=True, order=True)
class PitchToken:
    """A sounded pitch (step, octave, accidental) or the rest marker.

    The accidental records what sounds, not what is drawn; NATURAL is
    accepted for completeness but canonical producers emit NONE for
    unaltered pitches.
    """

    step: str = ""
    octave: int = -1
    accidental: Accidental = Accidental.NONE
    is_rest: bool = False

    def __post_init__(self):
        if self.is_rest:
            if self.step or self.octave != -1:
                raise ValueError("rest carries no step/octave")
        else:
            if self.step not in _STEP_INDEX:
                raise ValueError(f"bad step {self.step!r}")
            if not 0 <= self.octave <= 8:
                raise ValueError(f"octave {self.octave} outside [0, 8]")

    @property
    def diatonic(self) -> int:
        """Diatonic index: C0 = 0, one per staff step."""
        if self.is_rest:
            raise ValueError("rest has no diatonic index")
        return self.octave * 7 + _STEP_INDEX[self.step]

    def spell(self) -> str:
        if self.is_rest:
            return "rest"
        return f"note-{self.step}{self.octave}{self.accidental.value}"


REST = PitchToken(is_rest=True)


def parse_pitch(token: str) -> PitchToken:
    if token == "rest":
        return REST
    if not token.startswith("note-") or len(token) < 7:
        raise ValueError(f"bad pitch token {token!r}")
    body = token[5:]
    step, octave_ch, suffix = body[0], body[1], body[2:]
    if step not in _STEP_INDEX or not octave_ch.isdigit():
        raise ValueError(f"bad pitch token {token!r}")
    if suffix not in _ACCIDENTAL_BY_SUFFIX:
        raise ValueError(f"bad accidental in pitch token {token!r}")
    return PitchToken(step, int(octave_ch), _ACCIDENTAL_BY_SUFFIX[suffix])


# ---------------------------------------------------------------------------
# rhythm

BASE_DURATIONS = ["whole", "half", "quarter", "eighth", "16th", "32nd", "64th"]
_BASE_INDEX = {d: i for i, d in enumerate(BASE_DURATIONS)}
MAX_DOTS = 2


@dataclass(frozen=True, order=True)
class RhythmToken:
    base: str
    dots: int = 0

    def __post_init__(self):
        if self.base not in _BASE_INDEX:
            raise ValueError(f"bad base duration {self.base!r}")
        if not 0 <= self.dots <= MAX_DOTS:
            raise ValueError(f"dot count {self.dots} outside [0, {MAX_DOTS}]")

    def spell(self, rest: bool = False) -> str:
        body = self.base + "." * self.dots
        return f"rest_{body}" if rest else body


def parse_rhythm(token: str) -> tuple[RhythmToken, bool]:
    """Parse a rhythm-axis token; returns (rhythm, is_rest)."""
    rest = token.startswith("rest_")
    body = token[5:] if rest else token
    base = body.rstrip(".")
    dots = len(body) - len(base)
    if base not in _BASE_INDEX or dots > MAX_DOTS:
        raise ValueError(f"bad rhythm token {token!r}")
    return RhythmToken(base, dots), rest


ALL_RHYTHMS = [RhythmToken(b, d) for b in BASE_DURATIONS for d in range(MAX_DOTS + 1)]


# ---------------------------------------------------------------------------
# staff symbols

CLEF_KINDS = ["G2", "F4", "C3", "C4"]
KEYSIG_VALUES = [k for k in range(-7, 8) if k != 0]
TIMESIG_NUMERATORS = [2, 3, 4, 5, 6, 7, 9, 12]
TIMESIG_DENOMINATORS = [2, 4, 8]


@dataclass(frozen=True, order=True)
class StaffSymbol:
    """One of: clef-xx, keysig-k, timesig-n/d, barline."""

    kind: str  # "clef" | "keysig" | "timesig" | "barline"
    clef: str = ""
    keysig: int = 0
    num: int = 0
    den: int = 0

    def __post_init__(self):
        if self.kind == "clef":
            if self.clef not in CLEF_KINDS:
                raise ValueError(f"bad clef {self.clef!r}")
        elif self.kind == "keysig":
            if self.keysig not in KEYSIG_VALUES:
                raise ValueError(f"bad key signature {self.keysig}")
        elif self.kind == "timesig":
            if self.num not in TIMESIG_NUMERATORS or self.den not in TIMESIG_DENOMINATORS:
                raise ValueError(f"bad time signature {self.num}/{self.den}")
        elif self.kind != "barline":
            raise ValueError(f"bad staff-symbol kind {self.kind!r}")

    def spell(self) -> str:
        if self.kind == "clef":
            return f"clef-{self.clef}"
        if self.kind == "keysig":
            return f"keysig-{self.keysig}"
        if self.kind == "timesig":
            return f"timesig-{self.num}/{self.den}"
        return "barline"


BARLINE = StaffSymbol("barline")


def clef(kind: str) -> StaffSymbol:
    return StaffSymbol("clef", clef=kind)


def keysig(k: int) -> StaffSymbol:
    return StaffSymbol("keysig", keysig=k)


def timesig(num: int, den: int) -> StaffSymbol:
    return StaffSymbol("timesig", num=num, den=den)


def parse_staff_symbol(token: str) -> StaffSymbol:
    if token == "barline":
        return BARLINE
    if token.startswith("clef-"):
        return clef(token[5:])
    if token.startswith("keysig-"):
        try:
            return keysig(int(token[7:]))
        except ValueError:
            raise ValueError(f"bad staff symbol {token!r}") from None
    if token.startswith("timesig-"):
        num, sep, den = token[8:].partition("/")
        if sep and num.isdigit() and den.isdigit():
            return timesig(int(num), int(den))
    raise ValueError(f"bad staff symbol {token!r}")


# the staff-symbol vocabulary in its fixed index order: 4 + 14 + 24 + 1 = 43
STAFF_SYMBOLS: list[StaffSymbol] = (
    [clef(c) for c in CLEF_KINDS]
    + [keysig(k) for k in KEYSIG_VALUES]
    + [timesig(n, d) for n in TIMESIG_NUMERATORS for d in TIMESIG_DENOMINATORS]
    + [BARLINE]
)
STAFF_SYMBOL_COUNT = len(STAFF_SYMBOLS)
STAFF_SYMBOL_INDEX = {s: i for i, s in enumerate(STAFF_SYMBOLS)}


# ---------------------------------------------------------------------------
# staff positions

POSITION_MIN = -6
POSITION_MAX = 16
POSITION_COUNT = POSITION_MAX - POSITION_MIN + 1  # P = 23

# diatonic index of position 0 per clef, from the anchor notes:
# G2: s=2 is G4; F4: s=6 is F3; C3: s=4 is C4; C4: s=6 is C4
_CLEF_DIATONIC_AT_ZERO = {
    "G2": PitchToken("G", 4).diatonic - 2,
    "F4": PitchToken("F", 3).diatonic - 6,
    "C3": PitchToken("C", 4).diatonic - 4,
    "C4": PitchToken("C", 4).diatonic - 6,
}


def position_index(s: int) -> int:
    """Dense index i = s - POSITION_MIN in [0, POSITION_COUNT)."""
    if not POSITION_MIN <= s <= POSITION_MAX:
        raise ValueError(f"staff position {s} outside [{POSITION_MIN}, {POSITION_MAX}]")
    return s - POSITION_MIN


def position_from_index(i: int) -> int:
    if not 0 <= i < POSITION_COUNT:
        raise ValueError(f"position index {i} outside [0, {POSITION_COUNT})")
    return i + POSITION_MIN


def position_to_pitch(
    clef_symbol: StaffSymbol,
    key: int,
    explicit: Accidental | None,
    s: int,
) -> PitchToken:
    """Pitch sounding at staff position `s` under a clef and key signature.

    The sounded accidental is the explicit one when given, otherwise the
    key signature's alteration for that step, otherwise none.
    """
    if clef_symbol.kind != "clef":
        raise ValueError(f"expected a clef, got {clef_symbol.spell()}")
    if not POSITION_MIN <= s <= POSITION_MAX:
        raise ValueError(f"staff position {s} outside [{POSITION_MIN}, {POSITION_MAX}]")
    d = s + _CLEF_DIATONIC_AT_ZERO[clef_symbol.clef]
    octave, step_idx = divmod(d, 7)
    step = STEPS[step_idx]
    acc = explicit if explicit is not None else key_alteration(step, key)
    return PitchToken(step, octave, acc)


def pitch_to_position(clef_symbol: StaffSymbol, pitch: PitchToken) -> int:
    """Staff position of a pitch under a clef; inverse of position_to_pitch."""
    if pitch.is_rest:
        raise ValueError("rest has no staff position")
    if clef_symbol.kind != "clef":
        raise ValueError(f"expected a clef, got {clef_symbol.spell()}")
    s = pitch.diatonic - _CLEF_DIATONIC_AT_ZERO[clef_symbol.clef]
    if not POSITION_MIN <= s <= POSITION_MAX:
        raise ValueError(
            f"{pitch.spell()} not representable under clef-{clef_symbol.clef} "
            f"(position {s} outside [{POSITION_MIN}, {POSITION_MAX}])"
        )
    return s


# ---------------------------------------------------------------------------
# score events

@dataclass(frozen=True, order=True)
class Note:
    """One chord member: sounded pitch, rhythm, staff position, voice.

    Rests use position=None.  Within an event, notes are ordered rests
    first (shortest duration class last), then pitched notes bottom to
    top; voices are canonical: 1..k in that order.
    """

    pitch: PitchToken
    rhythm: RhythmToken
    position: int | None
    voice: int

    def __post_init__(self):
        if self.pitch.is_rest:
            if self.position is not None:
                raise ValueError("rest carries no staff position")
        else:
            if self.position is None:
                raise ValueError("pitched note needs a staff position")
            position_index(self.position)
        if self.voice < 1:
            raise ValueError(f"voice index {self.voice} must be >= 1")

    def sort_key(self):
        if self.pitch.is_rest:
            return (0, _BASE_INDEX[self.rhythm.base], self.rhythm.dots)
        return (1, self.position, self.voice)

    def spell(self) -> str:
        if self.pitch.is_rest:
            return f"{self.rhythm.spell(rest=True)}@v{self.voice}"
        return f"{self.pitch.spell()}_{self.rhythm.spell()}@s{self.position}v{self.voice}"


@dataclass(frozen=True)
class ScoreEvent:
    """Either one staff symbol or a non-empty vertical group of notes/rests."""

    symbol: StaffSymbol | None = None
    notes: tuple[Note, ...] = ()

    def __post_init__(self):
        if (self.symbol is None) == (not self.notes):
            raise ValueError("event must be exactly one of staff-symbol or note-group")
        if self.notes:
            keys = [n.sort_key() for n in self.notes]
            if keys != sorted(keys):
                raise ValueError("notes must be ordered rests-first then bottom-to-top")
            positions = [n.position for n in self.notes if n.position is not None]
            for p in set(positions):
                if positions.count(p) > 2:
                    raise ValueError(f"more than two notes on staff position {p}")
            if [n.voice for n in self.notes] != list(range(1, len(self.notes) + 1)):
                raise ValueError("event voices must be canonical 1..k")

    @property
    def is_symbol(self) -> bool:
        return self.symbol is not None


def note_group(entries: Iterable[tuple[PitchToken, RhythmToken, int | None]]) -> ScoreEvent:
    """Build a note-group event, sorting members and assigning canonical voices."""
    raw = sorted(
        entries,
        key=lambda e: (0, _BASE_INDEX[e[1].base], e[1].dots) if e[0].is_rest else (1, e[2]),
    )
    notes = tuple(
        Note(p, r, s, voice=i + 1) for i, (p, r, s) in enumerate(raw)
    )
    return ScoreEvent(notes=notes)


@dataclass(frozen=True)
class SymbolicScore:
    """Ordered event sequence; measures are delimited by barline events."""

    events: tuple[ScoreEvent, ...]

    def __post_init__(self):
        seen_clef = False
        for e in self.events:
            if e.is_symbol and e.symbol.kind == "clef":
                seen_clef = True
            elif not e.is_symbol and not seen_clef:
                raise ValueError("note-group before any clef")
        if self.events and not (
            self.events[-1].is_symbol and self.events[-1].symbol.kind == "barline"
        ):
            raise ValueError("score must end with a barline")

    def __len__(self) -> int:
        return len(self.events)

    def measures(self) -> list[list[ScoreEvent]]:
        """Events grouped per measure; the closing barline is included."""
        out: list[list[ScoreEvent]] = []
        current: list[ScoreEvent] = []
        for e in self.events:
            current.append(e)
            if e.is_symbol and e.symbol.kind == "barline":
                out.append(current)
                current = []
        if current:
            out.append(current)
        return out

    def symbol_count(self) -> int:
        """Labelled symbols: staff symbols count 1, note-groups count their members."""
        return sum(1 if e.is_symbol else len(e.notes) for e in self.events)

    def measure_count(self) -> int:
        return sum(
            1 for e in self.events if e.is_symbol and e.symbol.kind == "barline"
        )

    def per_measure_voices(self) -> list[frozenset[int]]:
        out = []
        for measure in self.measures():
            voices: set[int] = set()
            for e in measure:
                if not e.is_symbol:
                    voices.update(n.voice for n in e.notes)
            out.append(frozenset(voices))
        return out


# ---------------------------------------------------------------------------
# notated accidentals (what an engraver draws)

class AccidentalTracker:
    """Key-signature plus within-measure accidental state.

    Notated accidentals persist for the rest of the measure on the same
    step/octave; a barline resets to the key signature.
    """

    def __init__(self, key: int = 0):
        self.key = key
        self._measure: dict[tuple[str, int], int] = {}

    def set_key(self, key: int) -> None:
        self.key = key
        self._measure.clear()

    def barline(self) -> None:
        self._measure.clear()

    def implied(self, step: str, octave: int) -> int:
        loc = (step, octave)
        if loc in self._measure:
            return self._measure[loc]
        return key_alteration(step, self.key).alteration

    def notate(self, pitch: PitchToken) -> Accidental:
        """Accidental an engraver would draw for this sounded pitch."""
        sounded = pitch.accidental.alteration
        if sounded == self.implied(pitch.step, pitch.octave):
            return Accidental.NONE
        self._measure[(pitch.step, pitch.octave)] = sounded
        return Accidental.NATURAL if sounded == 0 else _ACC_BY_ALTERATION[sounded]

    def sound(self, step: str, octave: int, notated: Accidental) -> Accidental:
        """Inverse of notate: sounded accidental given the drawn one."""
        if notated == Accidental.NONE:
            alt = self.implied(step, octave)
        else:
            alt = notated.alteration
            self._measure[(step, octave)] = alt
        return _ACC_BY_ALTERATION[alt]


_ACC_BY_ALTERATION = {
    0: Accidental.NONE,
    1: Accidental.SHARP,
    -1: Accidental.FLAT,
    2: Accidental.DOUBLE_SHARP,
    -2: Accidental.DOUBLE_FLAT,
}


def notated_accidentals(score: SymbolicScore) -> Iterator[list[Accidental]]:
    """Per note-group event, the accidental glyphs an engraver draws.

    Staff-symbol events yield nothing; rests yield NONE placeholders.
    """
    tracker = AccidentalTracker()
    for event in score.events:
        if event.is_symbol:
            if event.symbol.kind == "keysig":
                tracker.set_key(event.symbol.keysig)
            elif event.symbol.kind == "barline":
                tracker.barline()
            continue
        yield [
            Accidental.NONE if n.pitch.is_rest else tracker.notate(n.pitch)
            for n in event.notes
        ]


# ---------------------------------------------------------------------------
# combined tokens: one spelling carrying both pitch and rhythm

def spell_combined(pitch: PitchToken, rhythm: RhythmToken) -> str:
    if pitch.is_rest:
        return rhythm.spell(rest=True)
    return f"{pitch.spell()}_{rhythm.spell()}"


def parse_combined(token: str) -> tuple[PitchToken, RhythmToken]:
    if token.startswith("rest_"):
        rhythm, _ = parse_rhythm(token)
        return REST, rhythm
    if token.startswith("note-"):
        head, sep, tail = token.partition("_")
        if sep:
            rhythm, rest = parse_rhythm(tail)
            if not rest:
                return parse_pitch(head), rhythm
    raise ValueError(f"bad combined token {token!r}")


# ---------------------------------------------------------------------------
# model-facing vocabularies

PLUS = "+"
NO_NOTE = "noNote"

_STAFF_SPELLINGS = [s.spell() for s in STAFF_SYMBOLS]

# canonical pitch tokens exclude the redundant NATURAL spelling
_CANONICAL_ACCS = [a for a in ACCIDENTAL_ORDER if a != Accidental.NATURAL]

PITCH_AXIS_VOCAB: list[str] = (
    [
        PitchToken(step, octave, acc).spell()
        for octave in range(0, 9)
        for step in STEPS
        for acc in _CANONICAL_ACCS
    ]
    + ["rest"]
    + _STAFF_SPELLINGS
    + [PLUS, NO_NOTE]
)

RHYTHM_AXIS_VOCAB: list[str] = (
    [r.spell() for r in ALL_RHYTHMS]
    + [r.spell(rest=True) for r in ALL_RHYTHMS]
    + _STAFF_SPELLINGS
    + [PLUS, NO_NOTE]
)

PITCH_AXIS_INDEX = {t: i for i, t in enumerate(PITCH_AXIS_VOCAB)}
RHYTHM_AXIS_INDEX = {t: i for i, t in enumerate(RHYTHM_AXIS_VOCAB)}

REST_FLAG_DURATIONS = list(BASE_DURATIONS)  # undotted rest classes in the mask decoder
