from fractions import Fraction

import numpy as np
import pytest

from helpers import score_to_musicxml
from staffscribe import ingest as ig
from staffscribe import labels as lb
from staffscribe import notation as nt
from staffscribe.ingest import IngestError, SampleRejected
from staffscribe.notation import PitchToken, RhythmToken
from staffscribe.render import GeneratorKnobs, generate_random_score

MINIMAL = """<?xml version="1.0"?>
<score-partwise>
 <part-list><score-part id="P1"/></part-list>
 <part id="P1">
  <measure number="1">
   <attributes>
    <divisions>4</divisions>
    <time><beats>4</beats><beat-type>4</beat-type></time>
    <clef><sign>G</sign><line>2</line></clef>
   </attributes>
   <note>
    <pitch><step>C</step><octave>4</octave></pitch>
    <duration>16</duration><voice>1</voice><type>quarter</type>
   </note>
  </measure>
 </part>
</score-partwise>
"""

TWO_VOICES = """<?xml version="1.0"?>
<score-partwise>
 <part-list><score-part id="P1"/></part-list>
 <part id="P1">
  <measure number="1">
   <attributes><divisions>2</divisions>
    <clef><sign>G</sign><line>2</line></clef></attributes>
   <note><pitch><step>C</step><octave>5</octave></pitch>
    <duration>2</duration><voice>1</voice><type>quarter</type></note>
   <note><pitch><step>D</step><octave>5</octave></pitch>
    <duration>2</duration><voice>1</voice><type>quarter</type></note>
   <backup><duration>4</duration></backup>
   <note><pitch><step>E</step><octave>4</octave></pitch>
    <duration>2</duration><voice>2</voice><type>quarter</type></note>
   <note><pitch><step>F</step><octave>4</octave></pitch>
    <duration>2</duration><voice>2</voice><type>quarter</type></note>
  </measure>
 </part>
</score-partwise>
"""

RESTS_ONLY = """<?xml version="1.0"?>
<score-partwise>
 <part-list><score-part id="P1"/></part-list>
 <part id="P1">
  <measure number="1">
   <attributes><divisions>1</divisions>
    <clef><sign>F</sign><line>4</line></clef></attributes>
   <note><rest/><duration>4</duration><voice>1</voice></note>
  </measure>
 </part>
</score-partwise>
"""


def test_parse_minimal_document():
    parsed = ig.parse_musicxml(MINIMAL)
    want = nt.SymbolicScore(
        (
            nt.ScoreEvent(symbol=nt.clef("G2")),
            nt.ScoreEvent(symbol=nt.timesig(4, 4)),
            nt.note_group([(PitchToken("C", 4), RhythmToken("quarter"), -2)]),
            nt.ScoreEvent(symbol=nt.BARLINE),
        )
    )
    assert parsed.score == want
    assert parsed.voice_count == 1
    assert not ig.is_polyphonic(parsed.per_measure_voices)


def test_parse_two_voices_merges_coinciding_onsets():
    parsed = ig.parse_musicxml(TWO_VOICES)
    groups = [e for e in parsed.score.events if not e.is_symbol]
    assert len(groups) == 2
    assert [n.pitch.spell() for n in groups[0].notes] == ["note-E4", "note-C5"]
    assert [n.pitch.spell() for n in groups[1].notes] == ["note-F4", "note-D5"]
    assert parsed.voice_count == 2
    assert ig.is_polyphonic(parsed.per_measure_voices)


def test_parse_rests_only_sample_is_sparse():
    parsed = ig.parse_musicxml(RESTS_ONLY)
    assert ig.is_sparse(parsed.score)
    # whole rest inferred when <type> is absent
    groups = [e for e in parsed.score.events if not e.is_symbol]
    assert groups[0].notes[0].rhythm == RhythmToken("whole")


def test_tuplet_rejected_with_reason():
    doc = MINIMAL.replace(
        "<type>quarter</type>",
        "<type>quarter</type><time-modification>"
        "<actual-notes>3</actual-notes><normal-notes>2</normal-notes>"
        "</time-modification>",
    )
    with pytest.raises(SampleRejected) as exc:
        ig.parse_musicxml(doc)
    assert exc.value.reason == "tuplet"


def test_malformed_markup_is_parse_error():
    with pytest.raises(IngestError, match="malformed"):
        ig.parse_musicxml("<score-partwise><part>")
    with pytest.raises(IngestError, match="no <part>"):
        ig.parse_musicxml("<score-partwise/>")


def test_unsupported_elements_rejected():
    with pytest.raises(SampleRejected) as exc:
        ig.parse_musicxml(MINIMAL.replace("<line>2</line>", "<line>1</line>"))
    assert exc.value.reason == "unsupported-clef"
    two_parts = MINIMAL.replace(
        "</part>", "</part><part id='P2'><measure number='1'/></part>"
    )
    with pytest.raises(SampleRejected) as exc:
        ig.parse_musicxml(two_parts)
    assert exc.value.reason == "multi-part"


def test_ties_and_dynamics_skipped():
    doc = MINIMAL.replace(
        "<type>quarter</type>",
        "<type>quarter</type><tie type='start'/>"
        "<notations><tied type='start'/><staccato/></notations>",
    ).replace(
        "<note>",
        "<direction><direction-type><dynamics><f/></dynamics></direction-type>"
        "</direction><note>",
        1,
    )
    parsed = ig.parse_musicxml(doc)
    assert parsed.score.symbol_count() == 4  # clef, timesig, note, barline


def test_generated_scores_round_trip_through_musicxml():
    rng = np.random.default_rng(0)
    for _ in range(200):
        score = generate_random_score(rng)
        parsed = ig.parse_musicxml(score_to_musicxml(score))
        assert parsed.score == score
        assert ig.is_polyphonic(parsed.per_measure_voices)
        # raw voice sets agree with canonical per-event voices
        assert parsed.per_measure_voices == tuple(
            frozenset(str(v) for v in vs) for vs in score.per_measure_voices()
        )


def test_parse_encode_decode_identity_on_fixtures():
    for doc in (MINIMAL, TWO_VOICES, RESTS_ONLY):
        score = ig.parse_musicxml(doc).score
        assert lb.decode_advance(lb.encode_advance(score)) == score


def test_stats_hand_cases():
    rng = np.random.default_rng(1)
    score = generate_random_score(rng)
    st = ig.sample_stats("a", score, 2)
    assert st.density == Fraction(score.symbol_count(), score.measure_count())

    ten_symbols = nt.SymbolicScore(
        (nt.ScoreEvent(symbol=nt.clef("G2")),)
        + tuple(
            nt.note_group([(PitchToken("E", 4), RhythmToken("quarter"), 0)])
            for _ in range(7)
        )
        + (nt.ScoreEvent(symbol=nt.BARLINE),) * 2
    )
    st = ig.sample_stats("b", ten_symbols, 1)
    assert st.length == 10 and st.measures == 2 and st.density == 5

    corpus = ig.compute_stats([("x", ten_symbols, 1), ("y", ten_symbols, 1)])
    lo, mean, hi = corpus._agg("density")
    assert lo == mean == hi == 5.0


def test_stats_match_independent_recount():
    rng = np.random.default_rng(2)
    samples = []
    for i in range(50):
        score = generate_random_score(rng)
        voices = max(len(v) for v in score.per_measure_voices())
        samples.append((f"s{i}", score, voices))
    stats = ig.compute_stats(samples)
    for (sid, score, voices), st in zip(samples, stats.samples):
        # independent recount: walk events directly
        length = 0
        measures = 0
        for e in score.events:
            if e.is_symbol:
                length += 1
                if e.symbol.kind == "barline":
                    measures += 1
            else:
                length += len(e.notes)
        assert st.length == length
        assert st.measures == measures
        assert st.density == Fraction(length, measures)
        assert st.voices == voices


def test_stats_excludes_zero_measure_samples():
    # a score with events but no barline cannot exist; use the empty score
    score = nt.SymbolicScore(())
    stats = ig.compute_stats(
        [("good", _one_bar(), 1), ("bad", score, 1)]
    )
    assert [s.sample_id for s in stats.samples] == ["good"]
    assert stats.excluded == (("bad", "zero-measures"),)


def _one_bar():
    return nt.SymbolicScore(
        (
            nt.ScoreEvent(symbol=nt.clef("G2")),
            nt.note_group([(PitchToken("E", 4), RhythmToken("quarter"), 0)]),
            nt.ScoreEvent(symbol=nt.BARLINE),
        )
    )


def test_hard_filter_threshold_is_inclusive():
    mk = lambda sid, num, den: ig.SampleStats(sid, num, den, Fraction(num, den), 2)
    stats = ig.CorpusStats(
        (
            mk("at", 41, 1),
            mk("below", 4099, 100),  # 40.99
            mk("above", 43, 1),
            mk("exact_fraction", 82, 2),  # exactly 41
        )
    )
    assert ig.hard_filter(stats) == ["at", "above", "exact_fraction"]


def test_split_sizes_and_determinism():
    ids = [f"s{i}" for i in range(100)]
    parts = ig.split(ids, seed=9)
    assert len(parts["train"]) == 70
    assert len(parts["val"]) == 15
    assert len(parts["test"]) == 15
    assert parts == ig.split(ids, seed=9)
    assert parts != ig.split(ids, seed=10)
    union = parts["train"] + parts["val"] + parts["test"]
    assert sorted(union) == sorted(ids)
    assert len(set(union)) == len(ids)

    small = ig.split([f"t{i}" for i in range(10)], seed=0)
    assert len(small["train"]) == 7
    assert len(small["val"]) in (1, 2)
    assert len(small["test"]) in (1, 2)
    assert len(small["val"]) + len(small["test"]) == 3

    with pytest.raises(IngestError, match="too small"):
        ig.split(["a"] * 9, seed=0)


def test_stats_table_has_all_rows():
    stats = ig.compute_stats([("x", _one_bar(), 1)])
    table = stats.table()
    for row in ("length_symbols", "length_measures", "density_symbols_per_measure",
                "polyphony_voices"):
        assert row in table
