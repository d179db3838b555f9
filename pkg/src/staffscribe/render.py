"""Deterministic synthetic engraver for single-staff grayscale images.

Glyphs are procedural primitives, not font rasterizations: the goal is
discriminable shapes at a fixed per-event pitch, not typography.  Pixel
convention: background (paper) = 1.0, ink = 0.0; inversion happens in
model preprocessing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import notation as nt
from .notation import (
    Accidental,
    PitchToken,
    RhythmToken,
    ScoreEvent,
    SymbolicScore,
)

HEIGHT = 160
MARGIN = 32
EVENT_WIDTH = 48
STAFF_BOTTOM_Y = 104  # y of staff position 0 (bottom line)
POSITION_STEP = 6  # px per staff position (half line gap)
LINE_GAP = 2 * POSITION_STEP


def event_center_x(index: int) -> int:
    """Layout formula: x-center of the event at the given index."""
    return MARGIN + EVENT_WIDTH * index + EVENT_WIDTH // 2


def position_y(s: int) -> int:
    return STAFF_BOTTOM_Y - POSITION_STEP * s


@dataclass
class NoiseOptions:
    crop_jitter: int = 8  # max |vertical shift| in px
    edge_clutter_prob: float = 0.5  # chance of partial symbols at each side


@dataclass
class StaffImage:
    height: int
    width: int
    pixels: np.ndarray  # (height, width) float in [0, 1]
    seed: int


class RenderError(ValueError):
    pass


# ---------------------------------------------------------------------------
# drawing primitives (all clip to the canvas)

def _ink(c: np.ndarray, y0: int, y1: int, x0: int, x1: int) -> None:
    y0, y1 = max(0, y0), min(c.shape[0], y1)
    x0, x1 = max(0, x0), min(c.shape[1], x1)
    if y0 < y1 and x0 < x1:
        c[y0:y1, x0:x1] = 0.0


def _hline(c, y, x0, x1, thickness=1):
    _ink(c, y, y + thickness, x0, x1)


def _vline(c, x, y0, y1, thickness=2):
    _ink(c, y0, y1, x, x + thickness)


def _ellipse(c, cy, cx, ry, rx, filled=True):
    yy, xx = np.ogrid[: c.shape[0], : c.shape[1]]
    d = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
    mask = d <= 1.0 if filled else (d <= 1.0) & (d >= 0.45)
    c[mask] = 0.0


def _diagonal(c, y0, x0, y1, x1, thickness=2):
    steps = max(abs(y1 - y0), abs(x1 - x0), 1)
    for t in range(steps + 1):
        y = y0 + (y1 - y0) * t // steps
        x = x0 + (x1 - x0) * t // steps
        _ink(c, y, y + thickness, x, x + thickness)


_DIGIT_FONT = {
    "0": ["111", "101", "101", "101", "111"],
    "1": ["010", "110", "010", "010", "111"],
    "2": ["111", "001", "111", "100", "111"],
    "3": ["111", "001", "111", "001", "111"],
    "4": ["101", "101", "111", "001", "001"],
    "5": ["111", "100", "111", "001", "111"],
    "6": ["111", "100", "111", "101", "111"],
    "7": ["111", "001", "010", "010", "010"],
    "8": ["111", "101", "111", "101", "111"],
    "9": ["111", "101", "111", "001", "111"],
}


def _digit(c, y, x, ch, scale=2):
    for r, row in enumerate(_DIGIT_FONT[ch]):
        for k, bit in enumerate(row):
            if bit == "1":
                _ink(c, y + r * scale, y + (r + 1) * scale, x + k * scale, x + (k + 1) * scale)


def _number(c, y, x, value, scale=2):
    for i, ch in enumerate(str(value)):
        _digit(c, y, x + i * 4 * scale, ch, scale)


# ---------------------------------------------------------------------------
# glyphs

def _draw_accidental(c, kind: Accidental, cy: int, cx: int) -> None:
    if kind == Accidental.SHARP:
        _vline(c, cx - 2, cy - 5, cy + 5, 1)
        _vline(c, cx + 1, cy - 5, cy + 5, 1)
        _hline(c, cy - 2, cx - 4, cx + 4, 2)
        _hline(c, cy + 2, cx - 4, cx + 4, 2)
    elif kind == Accidental.FLAT:
        _vline(c, cx - 2, cy - 7, cy + 3, 1)
        _ellipse(c, cy + 1, cx, 2.5, 2.5, filled=False)
    elif kind == Accidental.NATURAL:
        _vline(c, cx - 2, cy - 6, cy + 2, 1)
        _vline(c, cx + 2, cy - 2, cy + 6, 1)
        _hline(c, cy - 2, cx - 2, cx + 3, 2)
        _hline(c, cy + 1, cx - 2, cx + 3, 2)
    elif kind == Accidental.DOUBLE_SHARP:
        _diagonal(c, cy - 4, cx - 4, cy + 4, cx + 4)
        _diagonal(c, cy + 4, cx - 4, cy - 4, cx + 4)
    elif kind == Accidental.DOUBLE_FLAT:
        for off in (-3, 2):
            _vline(c, cx + off - 1, cy - 6, cy + 2, 1)
            _ellipse(c, cy + 1, cx + off + 1, 2, 2, filled=False)


def _draw_clef(c, kind: str, cx: int) -> None:
    if kind == "G2":
        _vline(c, cx, 48, 116, 2)
        _ellipse(c, 92, cx + 1, 7, 6, filled=False)
        _ellipse(c, 64, cx + 1, 5, 4, filled=False)
    elif kind == "F4":
        _ellipse(c, 76, cx - 4, 5, 5, filled=True)
        _diagonal(c, 66, cx - 2, 96, cx + 8)
        _ink(c, 70, 74, cx + 12, cx + 16)
        _ink(c, 82, 86, cx + 12, cx + 16)
    else:
        anchor = 80 if kind == "C3" else 68  # middle line vs 4th line
        _vline(c, cx - 6, 56, 105, 2)
        _vline(c, cx - 2, 56, 105, 2)
        _ellipse(c, anchor - 5, cx + 4, 4, 4, filled=False)
        _ellipse(c, anchor + 5, cx + 4, 4, 4, filled=False)


def _draw_keysig(c, k: int, cx: int) -> None:
    kind = Accidental.SHARP if k > 0 else Accidental.FLAT
    ys = [62, 74, 58, 70, 82, 66, 78]  # fixed ladder, one slot per accidental
    x0 = cx - 3 * (abs(k) - 1)
    for i in range(abs(k)):
        _draw_accidental(c, kind, ys[i], x0 + 6 * i)


def _draw_timesig(c, num: int, den: int, cx: int) -> None:
    x = cx - (len(str(num)) * 8) // 2
    _number(c, 60, x, num)
    x = cx - (len(str(den)) * 8) // 2
    _number(c, 82, x, den)


def _draw_rest(c, rhythm: RhythmToken, cx: int) -> None:
    kind = nt.BASE_DURATIONS.index(rhythm.base)
    if kind == 0:  # whole: block hanging below the 4th line
        _ink(c, 80, 85, cx - 5, cx + 5)
    elif kind == 1:  # half: block sitting on the middle line
        _ink(c, 75, 80, cx - 5, cx + 5)
    elif kind == 2:  # quarter: zigzag
        _diagonal(c, 66, cx - 3, 74, cx + 3)
        _diagonal(c, 74, cx + 3, 82, cx - 3)
        _diagonal(c, 82, cx - 3, 90, cx + 3)
    else:  # eighth..64th: slash with one blob per tail
        _diagonal(c, 66, cx + 4, 92, cx - 4)
        for i in range(kind - 2):
            _ellipse(c, 69 + 7 * i, cx - 1 - 2 * i, 1.8, 1.8, filled=True)
    for d in range(rhythm.dots):
        _ink(c, 70, 73, cx + 8 + 5 * d, cx + 11 + 5 * d)


def _draw_note(
    c,
    pitch_position: int,
    rhythm: RhythmToken,
    accidental: Accidental,
    cx: int,
    unison_shift: bool,
) -> None:
    s = pitch_position
    y = position_y(s)
    nx = cx + 9 if unison_shift else cx
    hollow = rhythm.base in ("whole", "half")
    _ellipse(c, y, nx, 3.4, 5.0, filled=not hollow)
    # ledger lines
    if s <= -2:
        for t in range(-2, s - 1, -2):
            _hline(c, position_y(t), nx - 8, nx + 9)
    if s >= 10:
        for t in range(10, s + 1, 2):
            _hline(c, position_y(t), nx - 8, nx + 9)
    if rhythm.base != "whole":
        stem_up = s < 4
        tails = max(0, nt.BASE_DURATIONS.index(rhythm.base) - 2)
        if stem_up:
            _vline(c, nx + 4, y - 28, y, 2)
            for i in range(tails):
                _diagonal(c, y - 28 + 5 * i, nx + 5, y - 22 + 5 * i, nx + 12, 2)
        else:
            _vline(c, nx - 5, y, y + 28, 2)
            for i in range(tails):
                _diagonal(c, y + 28 - 5 * i, nx - 5, y + 22 - 5 * i, nx - 12, 2)
    if accidental != Accidental.NONE:
        _draw_accidental(c, accidental, y, nx - 13)
    for d in range(rhythm.dots):
        _ink(c, y - 4, y - 1, nx + 8 + 5 * d, nx + 11 + 5 * d)


# ---------------------------------------------------------------------------
# renderer

def render(
    score: SymbolicScore,
    seed: int = 0,
    noise: NoiseOptions | None = None,
) -> StaffImage:
    """Render a score to a HEIGHT-tall grayscale image, one slot per event."""
    n_events = len(score.events)
    width = MARGIN + EVENT_WIDTH * n_events + MARGIN
    canvas = np.ones((HEIGHT, width))
    for line in range(5):
        _hline(canvas, STAFF_BOTTOM_Y - LINE_GAP * line, 0, width)

    notated = nt.notated_accidentals(score)
    for idx, event in enumerate(score.events):
        cx = event_center_x(idx)
        if event.is_symbol:
            sym = event.symbol
            if sym.kind == "barline":
                _vline(canvas, cx - 1, STAFF_BOTTOM_Y - 4 * LINE_GAP, STAFF_BOTTOM_Y + 1, 2)
            elif sym.kind == "clef":
                _draw_clef(canvas, sym.clef, cx)
            elif sym.kind == "keysig":
                _draw_keysig(canvas, sym.keysig, cx)
            else:
                _draw_timesig(canvas, sym.num, sym.den, cx)
            continue
        accs = next(notated)
        seen_positions: set[int] = set()
        for n, acc in zip(event.notes, accs):
            if n.pitch.is_rest:
                _draw_rest(canvas, n.rhythm, cx)
            else:
                _draw_note(
                    canvas, n.position, n.rhythm, acc, cx,
                    unison_shift=n.position in seen_positions,
                )
                seen_positions.add(n.position)

    rng = np.random.default_rng(np.random.PCG64(seed))
    if noise is not None:
        dy = int(rng.integers(-noise.crop_jitter, noise.crop_jitter + 1))
        canvas = _shift_vertical(canvas, dy)
        for side_x in (4, width - 12):
            if rng.random() < noise.edge_clutter_prob:
                cy = int(rng.integers(40, HEIGHT - 40))
                _ellipse(canvas, cy, side_x, 3.4, 5.0, filled=True)
    return StaffImage(HEIGHT, width, canvas, seed)


def _shift_vertical(canvas: np.ndarray, dy: int) -> np.ndarray:
    out = np.ones_like(canvas)
    h = canvas.shape[0]
    if dy >= 0:
        out[dy:h] = canvas[: h - dy]
    else:
        out[: h + dy] = canvas[-dy:]
    return out


# ---------------------------------------------------------------------------
# random score generation

@dataclass
class GeneratorKnobs:
    """Difficulty controls for synthetic scores.

    voices: (min, max) concurrent voices when an event is polyphonic.
    events_per_measure / measures: inclusive ranges.
    """

    voices: tuple[int, int] = (2, 3)
    events_per_measure: tuple[int, int] = (2, 4)
    measures: tuple[int, int] = (1, 2)
    rest_prob: float = 0.1
    accidental_prob: float = 0.1
    dot_prob: float = 0.1
    poly_event_prob: float = 0.7  # chance an event carries more than one voice
    position_range: tuple[int, int] = (-4, 12)
    rhythms: tuple[str, ...] = ("half", "quarter", "eighth", "16th")
    clefs: tuple[str, ...] = ("G2", "F4", "C3", "C4")
    keysig_prob: float = 0.5
    timesig_prob: float = 0.9

    def validate(self) -> None:
        if not 1 <= self.voices[0] <= self.voices[1] <= 4:
            raise ValueError(f"voices range {self.voices} outside [1, 4]")
        if self.events_per_measure[0] < 1 or self.measures[0] < 1:
            raise ValueError("need at least one event per measure and one measure")
        lo, hi = self.position_range
        if lo < nt.POSITION_MIN or hi > nt.POSITION_MAX or lo > hi:
            raise ValueError(f"position range {self.position_range} invalid")


def generate_random_score(
    rng: np.random.Generator, knobs: GeneratorKnobs | None = None
) -> SymbolicScore:
    """A valid polyphonic score: clef first, barline-terminated measures."""
    knobs = knobs or GeneratorKnobs()
    knobs.validate()
    events: list[ScoreEvent] = []
    events.append(ScoreEvent(symbol=nt.clef(str(rng.choice(knobs.clefs)))))
    if rng.random() < knobs.keysig_prob:
        events.append(ScoreEvent(symbol=nt.keysig(int(rng.choice(nt.KEYSIG_VALUES)))))
    if rng.random() < knobs.timesig_prob:
        events.append(
            ScoreEvent(
                symbol=nt.timesig(
                    int(rng.choice(nt.TIMESIG_NUMERATORS)),
                    int(rng.choice(nt.TIMESIG_DENOMINATORS)),
                )
            )
        )
    n_measures = int(rng.integers(knobs.measures[0], knobs.measures[1] + 1))
    made_polyphonic = False
    score_clef = events[0].symbol
    for m in range(n_measures):
        n_events = int(rng.integers(knobs.events_per_measure[0], knobs.events_per_measure[1] + 1))
        for e in range(n_events):
            force_poly = m == n_measures - 1 and e == n_events - 1 and not made_polyphonic
            event = _random_event(rng, knobs, force_poly, score_clef)
            if len(event.notes) >= 2:
                made_polyphonic = True
            events.append(event)
        events.append(ScoreEvent(symbol=nt.BARLINE))
    return SymbolicScore(tuple(events))


def _random_event(rng, knobs: GeneratorKnobs, force_poly: bool, score_clef) -> ScoreEvent:
    if force_poly or rng.random() < knobs.poly_event_prob:
        k = int(rng.integers(max(2, knobs.voices[0]), knobs.voices[1] + 1))
    else:
        k = 1
    lo, hi = knobs.position_range
    entries = []
    used_positions: dict[int, int] = {}
    used_rest_bases: set[str] = set()
    for _ in range(k):
        is_rest = rng.random() < knobs.rest_prob
        base = str(rng.choice(knobs.rhythms))
        if is_rest:
            if base in used_rest_bases:
                is_rest = False  # one rest per duration class per event
            else:
                used_rest_bases.add(base)
                entries.append((nt.REST, RhythmToken(base), None))
                continue
        dots = 1 if rng.random() < knobs.dot_prob else 0
        for _attempt in range(8):
            s = int(rng.integers(lo, hi + 1))
            if used_positions.get(s, 0) < 2:
                break
        else:
            continue
        used_positions[s] = used_positions.get(s, 0) + 1
        acc = Accidental.NONE
        r = rng.random()
        if r < knobs.accidental_prob / 2:
            acc = Accidental.SHARP
        elif r < knobs.accidental_prob:
            acc = Accidental.FLAT
        # stored pitches are sounded values spelled under the score's clef;
        # key signatures only change which accidentals get drawn
        pitch = nt.position_to_pitch(score_clef, 0, acc, s)
        entries.append((pitch, RhythmToken(base, dots), s))
    if not entries:
        entries.append((nt.REST, RhythmToken("quarter"), None))
    return nt.note_group(entries)


# ---------------------------------------------------------------------------
# portable graymap IO (binary P5, maxval 255)

def write_pgm(path, image: StaffImage) -> None:
    data = np.clip(np.rint(image.pixels * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.width} {image.height}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a P5 or P2 graymap into a float array in [0, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    fields: list[bytes] = []
    i = 0
    while len(fields) < 4:
        while i < len(raw) and raw[i : i + 1].isspace():
            i += 1
        if raw[i : i + 1] == b"#":
            while i < len(raw) and raw[i] != 0x0A:
                i += 1
            continue
        j = i
        while j < len(raw) and not raw[j : j + 1].isspace():
            j += 1
        fields.append(raw[i:j])
        i = j
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic == b"P5":
        data = np.frombuffer(raw[i + 1 : i + 1 + w * h], dtype=np.uint8)
    elif magic == b"P2":
        data = np.array(raw[i:].split()[: w * h], dtype=np.uint8)
    else:
        raise ValueError(f"{path}: not a PGM file")
    if data.size != w * h:
        raise ValueError(f"{path}: truncated pixel data")
    return data.reshape(h, w).astype(np.float64) / float(maxval)
