"""Dataset loading, the 10% tolerance metric, and end-to-end evaluation.

Case files are plain text with three sections::

    % Text
    <narrative>

    % Question
    How much tax does Alice have to pay in 2019?

    % Answer
    62000.42

Every file in the dataset directory must parse; malformed files are
reported per file, never skipped silently. Evaluation runs the full
extract -> validate -> infer -> compute pipeline per case, classifies
failures with the judge, and aggregates accuracy. Failing cases are data,
not process errors.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Optional, Sequence

from .errors import SolarError
from .extraction import CaseText, ExtractorBackend, parse_tax_year
from .interpreter import DEFAULT_PRECEDENCE, FilingStatus, TaxScheduleSet
from .ontology import TBox
from .pipeline import CaseFailure, PatchLibrary, apply_knowledge, classify_failure


class MalformedCaseError(SolarError):
    code = "MALFORMED_CASE"

    def __init__(self, failures: list[tuple[str, str]]):
        self.failures = failures
        detail = "; ".join(f"{name}: {reason}" for name, reason in failures)
        super().__init__(f"malformed case files: {detail}")


@dataclass(frozen=True)
class EvalCase:
    id: str
    narrative: str
    question: str
    gold: Decimal
    tax_year: int

    def as_case_text(self) -> CaseText:
        return CaseText(self.id, self.narrative, self.question, self.tax_year)


def parse_case_file(name: str, text: str) -> EvalCase:
    sections: dict[str, list[str]] = {}
    current: Optional[str] = None
    for line in text.splitlines():
        if line.startswith("% "):
            current = line[2:].strip().lower()
            sections[current] = []
        elif current is not None:
            sections[current].append(line)
    narrative = "\n".join(sections.get("text", [])).strip()
    question = "\n".join(sections.get("question", [])).strip()
    answer_text = "\n".join(sections.get("answer", [])).strip()
    if not narrative:
        raise ValueError("missing or empty '% Text' section")
    if not question:
        raise ValueError("missing or empty '% Question' section")
    if not answer_text:
        raise ValueError("missing or empty '% Answer' section")
    try:
        gold = Decimal(answer_text.replace("$", "").replace(",", ""))
    except InvalidOperation:
        raise ValueError(f"answer is not numeric: {answer_text!r}")
    if gold < 0:
        raise ValueError(f"answer must be non-negative: {answer_text!r}")
    year = parse_tax_year(question)
    if year is None:
        raise ValueError("no tax year found in question")
    return EvalCase(name, narrative, question, gold, year)


def load_dataset(path) -> list[EvalCase]:
    """Load every case file under ``path`` (sorted by id).

    Raises MalformedCaseError listing every file that failed to parse.
    """
    directory = Path(path)
    cases: list[EvalCase] = []
    failures: list[tuple[str, str]] = []
    for file in sorted(directory.glob("*.txt")):
        try:
            cases.append(parse_case_file(file.stem, file.read_text(encoding="utf-8")))
        except ValueError as exc:
            failures.append((file.name, str(exc)))
    if failures:
        raise MalformedCaseError(failures)
    return cases


def within_tolerance(predicted: Decimal, gold: Decimal) -> bool:
    """Pass iff the prediction is within 10% of the gold amount (inclusive).

    Relative tolerance is undefined at zero, so a zero gold answer passes
    only when the prediction is within fifty cents of zero.
    """
    if gold == 0:
        return abs(predicted) <= Decimal("0.50")
    return abs(predicted - gold) <= Decimal("0.10") * abs(gold)


@dataclass(frozen=True)
class EvalRow:
    case_id: str
    predicted: Optional[Decimal]
    gold: Decimal
    passed: bool
    classification: Optional[str]
    error: Optional[str]
    wall_seconds: float


@dataclass
class EvalReport:
    rows: list[EvalRow]
    backend: str
    tbox_version: int

    @property
    def accuracy(self) -> float:
        if not self.rows:
            return 0.0
        return sum(1 for r in self.rows if r.passed) / len(self.rows)


def run_eval(
    cases: Sequence[EvalCase],
    tbox: TBox,
    schedules: TaxScheduleSet,
    backend: ExtractorBackend,
    jobs: int = 1,
    precedence: Sequence[FilingStatus] = DEFAULT_PRECEDENCE,
    library: Optional[PatchLibrary] = None,
) -> EvalReport:
    """Evaluate the full pipeline on a dataset.

    Cases run concurrently up to ``jobs`` (they share only immutable
    inputs); rows are assembled in case-id order regardless of completion
    order, so reports are deterministic apart from wall times.
    """
    library = library or PatchLibrary.load_default()

    def evaluate(case: EvalCase) -> EvalRow:
        run = apply_knowledge(case.as_case_text(), tbox, schedules, backend, precedence=precedence)
        passed = run.predicted is not None and within_tolerance(run.predicted, case.gold)
        classification: Optional[str] = None
        if not passed:
            failure: CaseFailure = classify_failure(case.as_case_text(), run, case.gold, library)
            classification = failure.classification.value
        return EvalRow(
            case_id=case.id,
            predicted=run.predicted,
            gold=case.gold,
            passed=passed,
            classification=classification,
            error=run.error,
            wall_seconds=run.wall_seconds,
        )

    ordered = sorted(cases, key=lambda c: c.id)
    if jobs <= 1:
        rows = [evaluate(case) for case in ordered]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(evaluate, ordered))
    return EvalReport(rows=rows, backend=backend.name, tbox_version=tbox.version)
