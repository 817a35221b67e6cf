from __future__ import annotations

import pytest

from repograph.metrics import (
    EmptyEval, EvalRecord, MissingVerdicts, Verdict, attach_verdicts, lhr, parse_verdicts, shr,
)


def _records(n: int, violating: int = 0) -> list[EvalRecord]:
    return [EvalRecord(str(i), "x\n", True, int(i < violating)) for i in range(n)]


def test_shr_clean():
    assert shr(_records(5)) == 0.0


def test_shr_three_of_ten():
    assert shr(_records(10, 3)) == 0.3


def test_shr_empty():
    with pytest.raises(EmptyEval):
        shr([])


def test_lhr_counts_only_compiling_failures():
    recs = [EvalRecord(str(i), None, False, 0, Verdict(False, 0, 3)) for i in range(4)]
    assert lhr(recs) == 0.0


def test_lhr_two_of_eight():
    verdicts = [Verdict(True, 1, 2), Verdict(True, 0, 1)] + [Verdict(True, 2, 2)] * 6
    recs = [EvalRecord(str(i), "x\n", True, 0, v) for i, v in enumerate(verdicts)]
    assert lhr(recs) == 0.25


def test_lhr_all_passing():
    recs = [EvalRecord(str(i), "x\n", True, 0, Verdict(True, 3, 3)) for i in range(3)]
    assert lhr(recs) == 0.0


def test_lhr_needs_every_verdict():
    recs = _records(2)
    with pytest.raises(MissingVerdicts):
        lhr(recs)
    with pytest.raises(EmptyEval):
        lhr([])


def test_verdict_file():
    text = "# verdicts\nTASK t1 COMPILE 1 TESTS 2/3\n\nTASK t2 COMPILE 0 TESTS 0/0\n"
    v = parse_verdicts(text)
    assert v == {"t1": Verdict(True, 2, 3), "t2": Verdict(False, 0, 0)}
    recs = attach_verdicts([EvalRecord("t1", "x\n", True, 0), EvalRecord("t2", None, False, 0)], v)
    assert lhr(recs) == 0.5


@pytest.mark.parametrize("line", ["TASK t1 COMPILE 2 TESTS 1/1", "TASK t1 COMPILE 1 TESTS 3/2", "t1 1 1/1"])
def test_bad_verdict_lines(line):
    with pytest.raises(ValueError):
        parse_verdicts(line)
