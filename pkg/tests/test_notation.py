import pytest

from staffscribe import notation as nt
from staffscribe.notation import Accidental, PitchToken, RhythmToken


def test_g_clef_bottom_line_is_e4():
    p = nt.position_to_pitch(nt.clef("G2"), 0, None, 0)
    assert (p.step, p.octave, p.accidental) == ("E", 4, Accidental.NONE)


def test_f_clef_top_line_is_a3():
    p = nt.position_to_pitch(nt.clef("F4"), 0, None, 8)
    assert (p.step, p.octave) == ("A", 3)


def test_c_clef_anchors():
    assert nt.position_to_pitch(nt.clef("C3"), 0, None, 4).spell() == "note-C4"
    assert nt.position_to_pitch(nt.clef("C4"), 0, None, 6).spell() == "note-C4"


def test_key_signature_alteration_applies():
    # one sharp: F is raised; oracle is the independent step table
    p = nt.position_to_pitch(nt.clef("G2"), 1, None, 1)
    assert p.spell() == "note-F4#"


def key_table_oracle(step, keysig):
    # literal circle-of-fifths table, independent of key_alteration()
    sharps = {k: set("FCGDAEB"[:k]) for k in range(8)}
    flats = {k: set("BEADGCF"[:k]) for k in range(8)}
    if keysig > 0 and step in sharps[keysig]:
        return Accidental.SHARP
    if keysig < 0 and step in flats[-keysig]:
        return Accidental.FLAT
    return Accidental.NONE


def test_key_alteration_matches_lookup_oracle():
    for k in range(-7, 8):
        for step in "CDEFGAB":
            assert nt.key_alteration(step, k) == key_table_oracle(step, k)


def test_explicit_accidental_overrides_key():
    p = nt.position_to_pitch(nt.clef("G2"), 1, Accidental.NONE, 1)
    assert p.accidental == Accidental.NONE
    p = nt.position_to_pitch(nt.clef("G2"), 0, Accidental.FLAT, 1)
    assert p.spell() == "note-F4b"


def test_position_out_of_range_errors():
    with pytest.raises(ValueError):
        nt.position_to_pitch(nt.clef("G2"), 0, None, 17)
    with pytest.raises(ValueError):
        nt.position_to_pitch(nt.clef("G2"), 0, None, -7)


def test_pitch_to_position_hand_cases():
    assert nt.pitch_to_position(nt.clef("G2"), PitchToken("E", 4)) == 0
    assert nt.pitch_to_position(nt.clef("G2"), PitchToken("C", 4)) == -2


def test_position_pitch_round_trip_exhaustive():
    # all four clefs x all 23 positions
    for kind in nt.CLEF_KINDS:
        c = nt.clef(kind)
        for s in range(nt.POSITION_MIN, nt.POSITION_MAX + 1):
            p = nt.position_to_pitch(c, 0, None, s)
            assert nt.pitch_to_position(c, p) == s


def test_pitch_out_of_clef_range_errors():
    with pytest.raises(ValueError, match="not representable"):
        nt.pitch_to_position(nt.clef("G2"), PitchToken("C", 0))


def test_vocabulary_sizes_are_fixed_constants():
    assert nt.STAFF_SYMBOL_COUNT == 43
    assert nt.ACCIDENTAL_CLASSES == 6
    assert nt.POSITION_COUNT == 23
    # 7 steps x 9 octaves x 5 canonical accidentals + rest + 43 + '+' + noNote
    assert len(nt.PITCH_AXIS_VOCAB) == 7 * 9 * 5 + 1 + 43 + 2
    # 21 note rhythms + 21 rest rhythms + 43 + '+' + noNote
    assert len(nt.RHYTHM_AXIS_VOCAB) == 21 + 21 + 43 + 2
    assert len(set(nt.PITCH_AXIS_VOCAB)) == len(nt.PITCH_AXIS_VOCAB)
    assert len(set(nt.RHYTHM_AXIS_VOCAB)) == len(nt.RHYTHM_AXIS_VOCAB)


def test_staff_symbol_spellings_round_trip():
    for sym in nt.STAFF_SYMBOLS:
        assert nt.parse_staff_symbol(sym.spell()) == sym


@pytest.mark.parametrize(
    "bad",
    ["clef-G3", "keysig-0", "keysig-8", "timesig-1/4", "timesig-4/16", "barlin",
     "note-H4", "note-C9#", "note-C4x", "quaver", "rest_128th", "quarter..."],
)
def test_unknown_spellings_rejected(bad):
    with pytest.raises(ValueError):
        if bad.startswith(("clef", "keysig", "timesig", "barlin")):
            nt.parse_staff_symbol(bad)
        elif bad.startswith("note") :
            nt.parse_pitch(bad)
        else:
            nt.parse_rhythm(bad)


def test_pitch_token_spellings_round_trip():
    for tok in ["note-C4", "note-F4#", "note-B3b", "note-G5##", "note-A2bb",
                "note-D4n", "rest"]:
        assert nt.parse_pitch(tok).spell() == tok or tok.endswith("n")
    assert nt.parse_pitch("note-D4n").accidental == Accidental.NATURAL


def test_rhythm_spellings_round_trip():
    for r in nt.ALL_RHYTHMS:
        tok = r.spell()
        parsed, rest = nt.parse_rhythm(tok)
        assert parsed == r and not rest
        parsed, rest = nt.parse_rhythm(r.spell(rest=True))
        assert parsed == r and rest


def test_combined_token_round_trip():
    cases = [
        (PitchToken("C", 4, Accidental.SHARP), RhythmToken("quarter", 1)),
        (nt.REST, RhythmToken("eighth")),
        (PitchToken("A", 3), RhythmToken("64th", 2)),
    ]
    for p, r in cases:
        tok = nt.spell_combined(p, r)
        assert nt.parse_combined(tok) == (p, r)
    assert nt.spell_combined(*cases[0]) == "note-C4#_quarter."
    assert nt.spell_combined(*cases[1]) == "rest_eighth"
    with pytest.raises(ValueError):
        nt.parse_combined("note-C4")
    with pytest.raises(ValueError):
        nt.parse_combined("noNote")


def test_rest_invariants():
    with pytest.raises(ValueError):
        PitchToken("C", 4, is_rest=True)
    with pytest.raises(ValueError):
        PitchToken("C", 9)
    with pytest.raises(ValueError):
        RhythmToken("quarter", 3)


def test_event_ordering_and_position_cap():
    q = RhythmToken("quarter")
    ev = nt.note_group(
        [
            (PitchToken("G", 4), q, 2),
            (PitchToken("E", 4), q, 0),
            (nt.REST, RhythmToken("half"), None),
        ]
    )
    spells = [n.pitch.spell() for n in ev.notes]
    assert spells == ["rest", "note-E4", "note-G4"]
    assert [n.voice for n in ev.notes] == [1, 2, 3]

    with pytest.raises(ValueError, match="more than two"):
        nt.note_group([(PitchToken("E", 4), q, 0)] * 3)


def test_score_invariants():
    q = RhythmToken("quarter")
    ev = nt.note_group([(PitchToken("E", 4), q, 0)])
    with pytest.raises(ValueError, match="before any clef"):
        nt.SymbolicScore((ev, nt.ScoreEvent(symbol=nt.BARLINE)))
    with pytest.raises(ValueError, match="end with a barline"):
        nt.SymbolicScore((nt.ScoreEvent(symbol=nt.clef("G2")), ev))
    ok = nt.SymbolicScore(
        (nt.ScoreEvent(symbol=nt.clef("G2")), ev, nt.ScoreEvent(symbol=nt.BARLINE))
    )
    assert ok.measure_count() == 1
    assert ok.symbol_count() == 3
    assert ok.per_measure_voices() == [frozenset({1})]


def test_accidental_tracker_measure_persistence():
    t = nt.AccidentalTracker(key=1)  # F sharp in key
    f_sharp = PitchToken("F", 4, Accidental.SHARP)
    f_nat = PitchToken("F", 4)
    assert t.notate(f_sharp) == Accidental.NONE  # key already supplies it
    assert t.notate(f_nat) == Accidental.NATURAL  # cancel the key
    assert t.notate(f_nat) == Accidental.NONE  # persists within measure
    t.barline()
    assert t.notate(f_nat) == Accidental.NATURAL
    # inverse direction
    t2 = nt.AccidentalTracker(key=1)
    assert t2.sound("F", 4, Accidental.NONE) == Accidental.SHARP
    assert t2.sound("F", 4, Accidental.NATURAL) == Accidental.NONE
    assert t2.sound("F", 4, Accidental.NONE) == Accidental.NONE
