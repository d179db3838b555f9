import numpy as np
import pytest

from staffscribe import evaluation as ev
from staffscribe import notation as nt
from staffscribe.evaluation import EvalError
from staffscribe.labels import FlagConfiguration


def levenshtein_oracle(a, b):
    # independent quadratic implementation (distance only)
    n, m = len(a), len(b)
    d = np.zeros((n + 1, m + 1), dtype=int)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i, j] = min(
                d[i - 1, j] + 1,
                d[i, j - 1] + 1,
                d[i - 1, j - 1] + (a[i - 1] != b[j - 1]),
            )
    return int(d[n, m])


def test_identical_sequences_rate_zero():
    c = ev.ser(["a", "b", "c"], ["a", "b", "c"])
    assert c.errors == 0 and c.rate == 0.0


def test_single_deletion_hand_case():
    # gt length 4, prediction missing one symbol -> (0,1,0,4) -> 0.25
    c = ev.ser(["a", "b", "d"], ["a", "b", "c", "d"])
    assert (c.insertions, c.deletions, c.substitutions, c.truth_len) == (0, 1, 0, 4)
    assert c.rate == 0.25


def test_empty_truth_errors():
    with pytest.raises(EvalError):
        ev.ser(["a"], [])


def test_matches_independent_oracle_on_500_random_pairs():
    rng = np.random.default_rng(0)
    for _ in range(500):
        n = int(rng.integers(1, 12))
        m = int(rng.integers(0, 12))
        truth = rng.integers(0, 4, size=n).tolist()
        pred = rng.integers(0, 4, size=m).tolist()
        counts = ev.ser(pred, truth)
        assert counts.errors == levenshtein_oracle(truth, pred)
        assert counts.truth_len == n


def test_ser_invariant_under_relabeling():
    rng = np.random.default_rng(1)
    for _ in range(50):
        truth = rng.integers(0, 5, size=8).tolist()
        pred = rng.integers(0, 5, size=7).tolist()
        base = ev.ser(pred, truth)
        relabel = {k: f"tok{k * 7 + 1}" for k in range(5)}
        mapped = ev.ser([relabel[x] for x in pred], [relabel[x] for x in truth])
        assert (base.insertions, base.deletions, base.substitutions) == (
            mapped.insertions,
            mapped.deletions,
            mapped.substitutions,
        )


def test_ser_bounds():
    rng = np.random.default_rng(2)
    for _ in range(100):
        n = int(rng.integers(1, 10))
        m = int(rng.integers(0, 10))
        truth = rng.integers(0, 3, size=n).tolist()
        pred = rng.integers(0, 3, size=m).tolist()
        c = ev.ser(pred, truth)
        assert 0.0 <= c.rate <= (m + n) / n


def test_corpus_aggregation_is_micro_not_macro():
    report = ev.SERReport("baseline", "full")
    report.add_sample("a", ev.ser("x", "xy"), ev.ser("x", "xy"))  # 1 error / 2
    report.add_sample("b", ev.ser("pqrstuvw", "pqrstuv"), ev.ser("pqrstuvw", "pqrstuv"))
    # micro: (1 + 1) / (2 + 7); macro would be (0.5 + 1/7) / 2
    assert report.rhythm.rate == pytest.approx(2 / 9)
    assert report.rhythm.rate != pytest.approx((0.5 + 1 / 7) / 2)
    line = report.machine_line()
    assert "rhythm_ser=22.2222" in line and "samples=2" in line


def test_report_table_layout():
    r1 = ev.SERReport("baseline", "full")
    r1.add_sample("a", ev.ser("ab", "ab"), ev.ser("ab", "ab"))
    r2 = ev.SERReport("baseline", "hard")
    r2.add_sample("a", ev.ser("b", "ab"), ev.ser("b", "ab"))
    table = ev.format_report_table([r1, r2])
    assert "decoder" in table and "full rhythm SER%" in table and "hard pitch SER%" in table
    assert "baseline" in table


def test_flag_configs_to_advance_round_trip_tokens():
    from staffscribe import labels as lb
    from staffscribe.render import generate_random_score

    rng = np.random.default_rng(3)
    for _ in range(100):
        score = generate_random_score(rng)
        configs = list(lb.encode_flag(score))
        want = lb.encode_advance(score)
        p, r = ev.flag_configs_to_advance(configs)
        assert tuple(p) == want.pitch
        assert tuple(r) == want.rhythm


def test_flag_configs_to_advance_tolerates_garbage():
    # multiple staff bits, note before clef, orphan upper row: no crash
    cfgs = [
        FlagConfiguration(frozenset(), ((13, 1, 0),)),  # note before clef: dropped
        FlagConfiguration(frozenset({0, 43}), ((12, 2, 1),)),  # clef + rest + note
        FlagConfiguration(frozenset({4, 5}), ()),  # two key signatures at once
    ]
    p, r = ev.flag_configs_to_advance(cfgs)
    assert p[0] == "clef-G2"
    assert len(p) == len(r)


def test_merge_streams_by_emission_index():
    streams = [
        ["clef-G2", "note-E4", "barline"],
        [nt.NO_NOTE, "note-G4"],  # ragged tail counts as noNote
        [nt.NO_NOTE, nt.NO_NOTE, nt.NO_NOTE],
    ]
    merged = ev.merge_streams(streams)
    assert merged == ["clef-G2", "+", "note-E4", "note-G4", "+", "barline"]
    assert ev.merge_streams([[]]) == []
