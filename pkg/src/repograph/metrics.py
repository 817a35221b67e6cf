"""Hallucination metrics over evaluation records and the verdict file format."""

from __future__ import annotations

import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path


class EmptyEval(ValueError):
    pass


class MissingVerdicts(ValueError):
    pass


@dataclass(frozen=True)
class Verdict:
    compile: bool
    passed: int
    total: int

    @property
    def failing(self) -> bool:
        return self.passed < self.total


@dataclass(frozen=True)
class EvalRecord:
    task: str
    # rendered output; None when decoding found no valid sequence
    output: str | None
    compile: bool
    violations: int
    verdict: Verdict | None = None


def shr(records: Sequence[EvalRecord]) -> float:
    """Fraction of records violating at least one schematic constraint."""
    if not records:
        raise EmptyEval("no records")
    return sum(1 for r in records if r.violations > 0) / len(records)


def lhr(records: Sequence[EvalRecord]) -> float:
    """Fraction of records that compile yet fail some external test."""
    if not records:
        raise EmptyEval("no records")
    missing = [r.task for r in records if r.verdict is None]
    if missing:
        raise MissingVerdicts(f"no verdict for {', '.join(missing[:5])}")
    return sum(1 for r in records if r.verdict.compile and r.verdict.failing) / len(records)  # type: ignore[union-attr]


_VERDICT = re.compile(r"TASK\s+(\S+)\s+COMPILE\s+([01])\s+TESTS\s+(\d+)/(\d+)")


def parse_verdicts(text: str) -> dict[str, Verdict]:
    """Lines ``TASK <id> COMPILE <0|1> TESTS <pass-count>/<total>``."""
    out: dict[str, Verdict] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        m = _VERDICT.fullmatch(line)
        if m is None:
            raise ValueError(f"line {lineno}: expected 'TASK <id> COMPILE <0|1> TESTS <p>/<t>'")
        passed, total = int(m.group(3)), int(m.group(4))
        if passed > total:
            raise ValueError(f"line {lineno}: more passing tests than tests")
        out[m.group(1)] = Verdict(m.group(2) == "1", passed, total)
    return out


def load_verdicts(path: str | Path) -> dict[str, Verdict]:
    return parse_verdicts(Path(path).read_text())


def attach_verdicts(records: Iterable[EvalRecord], verdicts: dict[str, Verdict]) -> list[EvalRecord]:
    return [EvalRecord(r.task, r.output, r.compile, r.violations, verdicts.get(r.task, r.verdict))
            for r in records]
