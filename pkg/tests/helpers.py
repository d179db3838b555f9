"""Test-only utilities: emit MusicXML for synthetic scores.

Every event is written at a fixed onset slot (constant sounding
duration, independent of the displayed type) so that onset-based
merging in the parser reconstructs the event structure exactly.
"""

from staffscribe import notation as nt

DIV = 4  # divisions per slot


def score_to_musicxml(score: nt.SymbolicScore) -> str:
    measures = score.measures()
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        "<score-partwise>",
        '<part-list><score-part id="P1"><part-name>x</part-name></score-part></part-list>',
        '<part id="P1">',
    ]
    for mi, events in enumerate(measures):
        out.append(f'<measure number="{mi + 1}">')
        symbols = []
        note_events = []
        for e in events:
            if e.is_symbol:
                if e.symbol.kind == "barline":
                    continue
                assert not note_events, "staff symbol mid-measure not supported by writer"
                symbols.append(e.symbol)
            else:
                note_events.append(e)
        if symbols or mi == 0:
            out.append(_attributes(symbols, include_divisions=mi == 0))
        n_slots = len(note_events)
        max_voices = max((len(e.notes) for e in note_events), default=0)
        for v in range(1, max_voices + 1):
            if v > 1:
                out.append(f"<backup><duration>{DIV * n_slots}</duration></backup>")
            for event in note_events:
                if len(event.notes) >= v:
                    out.append(_note(event.notes[v - 1], v))
                else:
                    out.append(f"<forward><duration>{DIV}</duration></forward>")
        out.append("</measure>")
    out.append("</part></score-partwise>")
    return "\n".join(out)


def _attributes(symbols, include_divisions: bool) -> str:
    # schema order: divisions, key, time, clef
    parts = ["<attributes>"]
    if include_divisions:
        parts.append(f"<divisions>{DIV}</divisions>")
    for s in symbols:
        if s.kind == "keysig":
            parts.append(f"<key><fifths>{s.keysig}</fifths></key>")
    for s in symbols:
        if s.kind == "timesig":
            parts.append(f"<time><beats>{s.num}</beats><beat-type>{s.den}</beat-type></time>")
    for s in symbols:
        if s.kind == "clef":
            parts.append(f"<clef><sign>{s.clef[0]}</sign><line>{s.clef[1]}</line></clef>")
    parts.append("</attributes>")
    return "".join(parts)


def _note(n: nt.Note, voice: int) -> str:
    parts = ["<note>"]
    if n.pitch.is_rest:
        parts.append("<rest/>")
    else:
        alter = n.pitch.accidental.alteration
        alter_el = f"<alter>{alter}</alter>" if alter else ""
        parts.append(
            f"<pitch><step>{n.pitch.step}</step>{alter_el}"
            f"<octave>{n.pitch.octave}</octave></pitch>"
        )
    parts.append(f"<duration>{DIV}</duration>")
    parts.append(f"<voice>{voice}</voice>")
    parts.append(f"<type>{n.rhythm.base}</type>")
    parts.append("<dot/>" * n.rhythm.dots)
    parts.append("</note>")
    return "".join(parts)
