"""Case-text to ABox extraction: pluggable backends behind one contract.

Two backends ship. The deterministic template extractor recognizes the
benchmark corpus's sentence patterns (payments, marriages and deaths,
dependents, household maintenance, deduction elections) and is pure: the
same input always yields byte-identical output. The HTTP adapter posts
the case plus a vocabulary summary to an external service and treats the
response as untrusted candidates.

Whatever the backend, ``extract`` quarantines ill-typed candidate
assertions into ``unmapped_spans`` instead of dropping them, and the
returned ABox always validates against the TBox. Every dollar amount in
the narrative ends up either in an assertion or in an unmapped span.
"""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Optional, Protocol

import requests

from .errors import SolarError
from .ontology import (
    ABox,
    Assertion,
    Ind,
    Individual,
    Literal,
    Severity,
    Source,
    TBox,
    check_assertion,
    validate_abox,
)
from .serialize import encode_tbox

MISSING_VOCABULARY = "MISSING_VOCABULARY"
SCHEMA_VIOLATION = "SCHEMA_VIOLATION"
UNMATCHED_TEXT = "UNMATCHED_TEXT"

DEPENDENT_CLASS = "Dependent"
TAXPAYER_CLASS = "Taxpayer"


class BackendUnavailableError(SolarError):
    code = "BACKEND_UNAVAILABLE"


class EmptyNarrativeError(SolarError):
    code = "EMPTY_NARRATIVE"


@dataclass(frozen=True)
class CaseText:
    id: str
    narrative: str
    question: str
    tax_year: Optional[int] = None


@dataclass(frozen=True)
class UnmappedSpan:
    text: str
    reason: str


@dataclass
class ExtractionResult:
    abox: ABox
    unmapped_spans: list[UnmappedSpan] = field(default_factory=list)


@dataclass
class Candidates:
    """Raw backend output before schema checking."""

    individuals: list[Individual]
    assertions: list[Assertion]
    spans: list[UnmappedSpan]


class ExtractorBackend(Protocol):
    name: str

    def propose(self, case: CaseText, tbox: TBox) -> Candidates: ...


def parse_tax_year(question: str) -> Optional[int]:
    m = re.search(r"\bin (\d{4})\s*\?", question)
    if m:
        return int(m.group(1))
    m = re.search(r"\b(\d{4})\b", question)
    return int(m.group(1)) if m else None


def parse_subject(question: str) -> Optional[str]:
    m = re.search(r"does ([A-Z][A-Za-z]*) have to pay", question)
    return m.group(1) if m else None


def make_case(case_id: str, narrative: str, question: str) -> CaseText:
    return CaseText(case_id, narrative, question, parse_tax_year(question))


# ---------------------------------------------------------------------------
# deterministic template extractor

_AMOUNT = r"\$(?P<amt>\d+(?:,\d{3})*(?:\.\d{1,2})?)"
AMOUNT_RE = re.compile(r"\$(\d+(?:,\d{3})*(?:\.\d{1,2})?)")
_NAME = r"(?P<{}>[A-Z][a-z][A-Za-z]*)"
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+(?=[A-Z])")


def _to_amount(text: str) -> Decimal:
    return Decimal(text.replace(",", "")).quantize(Decimal("0.01"))


class DeterministicExtractor:
    """Pattern extractor over the corpus's templated sentences.

    Keeps simple cross-sentence state: known marriages (for death and
    joint-return sentences) and the most recently named person (for
    pronouns in payment sentences).
    """

    name = "deterministic"

    def propose(self, case: CaseText, tbox: TBox) -> Candidates:
        return _PatternRun(case, tbox).run()


class _PatternRun:
    def __init__(self, case: CaseText, tbox: TBox):
        self.case = case
        self.tbox = tbox
        self.props = tbox.property_map()
        self.classes = tbox.class_map()
        self.individuals: dict[str, Individual] = {}
        self.assertions: list[Assertion] = []
        self.spans: list[UnmappedSpan] = []
        self.marriages: list[tuple[str, str]] = []
        self.last_person: Optional[str] = None
        # the vocabulary summary handed to backends includes the usage
        # contracts; the extractor emits spouse links only when the schema
        # says downstream reasoning needs them
        self.emit_spouse_links = any(
            "hasSpouse" in contract.requires or contract.trigger == "hasSpouse"
            for contract in tbox.usage_contracts
        )

    # -- emission helpers ---------------------------------------------------

    def register(self, name: str, cls: str, span: str) -> bool:
        if cls not in self.classes:
            self.spans.append(UnmappedSpan(span, MISSING_VOCABULARY))
            return False
        existing = self.individuals.get(name)
        if existing is None:
            self.individuals[name] = Individual(name, cls)
        elif cls == DEPENDENT_CLASS and existing.cls != DEPENDENT_CLASS:
            self.individuals[name] = Individual(name, cls)
        self.last_person = name
        return True

    def emit(self, predicate: str, args: tuple, span: str, explanation: str) -> None:
        if predicate not in self.props:
            self.spans.append(UnmappedSpan(span, MISSING_VOCABULARY))
            return
        for arg in args:
            if isinstance(arg, Ind) and arg.name not in self.individuals:
                self.spans.append(UnmappedSpan(span, MISSING_VOCABULARY))
                return
        self.assertions.append(
            Assertion(
                predicate=predicate,
                args=args,
                source=Source.EXTRACTED,
                confidence=1.0,
                explanation=explanation,
            )
        )

    def person(self, token: str) -> Optional[str]:
        if token.lower() in ("she", "he", "they"):
            return self.last_person
        self.last_person = token
        return token

    # -- sentence patterns --------------------------------------------------

    def on_marriage(self, m: re.Match, sentence: str) -> None:
        a, b = m.group("a"), m.group("b")
        if not (self.register(a, TAXPAYER_CLASS, sentence) and self.register(b, TAXPAYER_CLASS, sentence)):
            return
        self.marriages.append((a, b))
        for person in (a, b):
            self.emit("isMarriedIndividual", (Ind(person),), sentence, f"Married per: {sentence!r}")
        if self.emit_spouse_links:
            self.emit("hasSpouse", (Ind(a), Ind(b)), sentence, f"Spouses per: {sentence!r}")
            self.emit("hasSpouse", (Ind(b), Ind(a)), sentence, f"Spouses per: {sentence!r}")

    def on_child(self, m: re.Match, sentence: str) -> None:
        self.register(m.group("c"), DEPENDENT_CLASS, sentence)

    def on_death(self, m: re.Match, sentence: str) -> None:
        deceased = m.group("x")
        for a, b in self.marriages:
            survivor = b if deceased == a else a if deceased == b else None
            if survivor:
                self.emit(
                    "hasDeceasedSpouse",
                    (Ind(survivor), Ind(deceased)),
                    sentence,
                    f"Spouse died per: {sentence!r}",
                )

    def on_household(self, m: re.Match, sentence: str) -> None:
        keeper, dependent = m.group("a"), m.group("c")
        if dependent not in self.individuals:
            self.register(dependent, DEPENDENT_CLASS, sentence)
        self.register(keeper, TAXPAYER_CLASS, sentence)
        self.emit(
            "maintainsHouseholdForDependent",
            (Ind(keeper), Ind(dependent)),
            sentence,
            f"Maintains household per: {sentence!r}",
        )
        self.emit("claimsDependent", (Ind(keeper), Ind(dependent)), sentence, f"Dependent per: {sentence!r}")

    def on_joint(self, m: re.Match, sentence: str) -> None:
        names = [g for g in (m.groupdict().get("a"), m.groupdict().get("b")) if g]
        if not names and self.marriages:
            names = list(self.marriages[-1])
        for name in names:
            if self.register(name, TAXPAYER_CLASS, sentence):
                self.emit("filesJointReturn", (Ind(name),), sentence, f"Joint return per: {sentence!r}")

    def on_unmarried(self, m: re.Match, sentence: str) -> None:
        name = m.group("x")
        if self.register(name, TAXPAYER_CLASS, sentence):
            self.emit("isUnmarriedIndividual", (Ind(name),), sentence, f"Not married per: {sentence!r}")

    def on_standard_deduction(self, m: re.Match, sentence: str) -> None:
        name = m.group("x")
        if self.register(name, TAXPAYER_CLASS, sentence):
            self.emit("takesStandardDeduction", (Ind(name),), sentence, f"Standard deduction per: {sentence!r}")

    def on_itemized(self, m: re.Match, sentence: str) -> None:
        name = m.group("x")
        ok = self.register(name, TAXPAYER_CLASS, sentence)
        for raw in AMOUNT_RE.findall(m.group("amts")):
            span = f"itemized deduction ${raw}"
            if not ok:
                self.spans.append(UnmappedSpan(span, MISSING_VOCABULARY))
                continue
            self.emit(
                "hasItemizedDeductionAmount",
                (Ind(name), Literal.decimal(_to_amount(raw))),
                span,
                f"Itemized deduction ${raw} per: {sentence!r}",
            )

    def on_age(self, m: re.Match, sentence: str) -> None:
        name = m.group("x")
        if self.register(name, TAXPAYER_CLASS, sentence):
            self.emit(
                "hasAgeYears",
                (Ind(name), Literal.integer(m.group("n"))),
                sentence,
                f"Age per: {sentence!r}",
            )

    def on_income(self, m: re.Match, sentence: str) -> None:
        groups = m.groupdict()
        name = self.person(groups["x"])
        if name is None:
            self.spans.append(UnmappedSpan(f"${groups['amt']}", UNMATCHED_TEXT))
            return
        span = f"${groups['amt']}"
        if not self.register(name, TAXPAYER_CLASS, span + " " + sentence):
            return
        self.emit(
            "hasGrossIncomeAmount",
            (Ind(name), Literal.decimal(_to_amount(groups["amt"]))),
            span,
            f"Payment of ${groups['amt']} per: {sentence!r}",
        )

    PATTERNS = [
        (re.compile(_NAME.format("a") + r" and " + _NAME.format("b") + r" got married"), on_marriage),
        (re.compile(r"ha(?:ve|s) a (?:son|daughter|child) " + _NAME.format("c")), on_child),
        (re.compile(_NAME.format("x") + r" died on"), on_death),
        (
            re.compile(
                _NAME.format("c")
                + r" lives at the house that "
                + _NAME.format("a")
                + r" maintains as (?:her|his|their) principal place of abode"
            ),
            on_household,
        ),
        (re.compile(_NAME.format("a") + r" maintains a household for " + _NAME.format("c")), on_household),
        (re.compile(_NAME.format("a") + r" and " + _NAME.format("b") + r" files? a joint return"), on_joint),
        (re.compile(_NAME.format("a") + r" files a joint return(?: with " + _NAME.format("b") + r")?"), on_joint),
        (re.compile(r"They file a joint return"), on_joint),
        (re.compile(_NAME.format("x") + r" is (?:not married|unmarried|a single individual)"), on_unmarried),
        (re.compile(_NAME.format("x") + r" takes the standard deduction"), on_standard_deduction),
        (re.compile(_NAME.format("x") + r" is allowed itemized deductions of (?P<amts>[^.]*)"), on_itemized),
        (re.compile(_NAME.format("x") + r" is (?P<n>\d+) years old"), on_age),
        (re.compile(r"(?P<x>[A-Z][a-z][A-Za-z]*)'s gross income for the year \d{4} is " + _AMOUNT), on_income),
        (re.compile(r"In \d{4}, (?P<x>[A-Z][a-z][A-Za-z]*) was paid " + _AMOUNT), on_income),
        (re.compile(r"(?P<x>[A-Z][a-z][A-Za-z]*|she|he|they) was paid " + _AMOUNT + r" in \d{4}"), on_income),
        (re.compile(r"(?P<x>[A-Z][a-z][A-Za-z]*|she|he|they) earned " + _AMOUNT), on_income),
    ]

    def run(self) -> Candidates:
        for sentence in _SENTENCE_SPLIT.split(self.case.narrative.strip()):
            for pattern, handler in self.PATTERNS:
                for m in pattern.finditer(sentence):
                    handler(self, m, sentence)
        self._account_for_amounts()
        return Candidates(list(self.individuals.values()), self.assertions, self.spans)

    def _account_for_amounts(self) -> None:
        """Conservation of mentions: every narrative dollar amount must land
        in an assertion literal or an unmapped span."""
        captured: set[Decimal] = set()
        for a in self.assertions:
            for arg in a.args:
                if isinstance(arg, Literal) and isinstance(arg.value, Decimal):
                    captured.add(arg.value)
        for span in self.spans:
            for raw in AMOUNT_RE.findall(span.text):
                captured.add(_to_amount(raw))
        for raw in AMOUNT_RE.findall(self.case.narrative):
            if _to_amount(raw) not in captured:
                self.spans.append(UnmappedSpan(f"${raw}", UNMATCHED_TEXT))
                captured.add(_to_amount(raw))


# ---------------------------------------------------------------------------
# HTTP adapter

ENV_EXTRACTOR_URL = "SOLAR_EXTRACTOR_URL"


def vocabulary_summary(tbox: TBox) -> dict:
    """The schema digest sent to external backends: classes, properties,
    and the usage contracts describing required co-occurrences."""
    doc = encode_tbox(tbox)
    return {
        "classes": doc["classes"],
        "properties": doc["properties"],
        "usage_contracts": doc["usage_contracts"],
    }


class HttpExtractor:
    """Adapter for an external extraction service.

    Wire contract: POST {"case": {...}, "vocabulary": {...}} to the
    configured endpoint; the response body is an ABox document
    ({"individuals": ..., "assertions": ...}). Transient failures
    (connection errors, timeouts, 5xx) are retried with exponential
    backoff; anything still failing raises BackendUnavailableError.
    """

    name = "http"

    def __init__(self, url: str, timeout: float = 30.0, retries: int = 3, backoff: float = 0.5):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def propose(self, case: CaseText, tbox: TBox) -> Candidates:
        payload = {
            "case": {
                "id": case.id,
                "narrative": case.narrative,
                "question": case.question,
                "tax_year": case.tax_year,
            },
            "vocabulary": vocabulary_summary(tbox),
        }
        last_error: Optional[str] = None
        for attempt in range(self.retries):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                response = requests.post(self.url, json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = str(exc)
                continue
            if response.status_code >= 500:
                last_error = f"server error {response.status_code}"
                continue
            if response.status_code != 200:
                raise BackendUnavailableError(f"extractor returned {response.status_code}")
            try:
                doc = response.json()
            except ValueError:
                last_error = "response is not valid JSON"
                continue
            return self._decode(doc, tbox)
        raise BackendUnavailableError(f"extractor unreachable after {self.retries} attempts: {last_error}")

    def _decode(self, doc: dict, tbox: TBox) -> Candidates:
        from .ontology import Datatype, PropertyKind

        props = tbox.property_map()
        individuals = [
            Individual(name, spec.get("type", ""))
            for name, spec in (doc.get("individuals") or {}).items()
        ]
        assertions: list[Assertion] = []
        spans: list[UnmappedSpan] = []
        for entry in doc.get("assertions") or []:
            predicate = entry.get("predicate", "")
            raw_args = entry.get("args") or []
            rendered = f"{predicate}({', '.join(str(x) for x in raw_args)})"
            prop = props.get(predicate)
            if prop is None or len(raw_args) != prop.arity:
                spans.append(UnmappedSpan(rendered, SCHEMA_VIOLATION))
                continue
            args: list = [Ind(str(raw_args[0]))]
            if prop.kind is PropertyKind.OBJECT:
                args.append(Ind(str(raw_args[1])))
            elif prop.kind is PropertyKind.DATATYPE:
                try:
                    args.append(Literal.from_text(str(raw_args[1]), prop.datatype or Datatype.TEXT))
                except ValueError:
                    spans.append(UnmappedSpan(rendered, SCHEMA_VIOLATION))
                    continue
            assertions.append(
                Assertion(
                    predicate=predicate,
                    args=tuple(args),
                    source=Source.EXTRACTED,
                    confidence=float(entry.get("confidence", 1.0)),
                    explanation=entry.get("explanation", ""),
                )
            )
        return Candidates(individuals, assertions, spans)


def get_backend(name: str, url: Optional[str] = None) -> ExtractorBackend:
    if name == "deterministic":
        return DeterministicExtractor()
    if name == "http":
        endpoint = url or os.environ.get(ENV_EXTRACTOR_URL)
        if not endpoint:
            raise BackendUnavailableError(f"no extractor endpoint; set {ENV_EXTRACTOR_URL}")
        return HttpExtractor(endpoint)
    raise ValueError(f"unknown backend '{name}'")


# ---------------------------------------------------------------------------
# orchestration

def extract(case: CaseText, tbox: TBox, backend: ExtractorBackend) -> ExtractionResult:
    """Run a backend and sanitize its output.

    Candidate assertions that fail schema checks are quarantined into
    unmapped_spans (reason SCHEMA_VIOLATION), never silently dropped; the
    returned ABox always passes validation (warnings permitted).
    """
    if not case.narrative.strip():
        raise EmptyNarrativeError("case narrative is empty")
    candidates = backend.propose(case, tbox)
    individuals = {i.name: i for i in candidates.individuals if i.cls in tbox.class_map()}
    for i in candidates.individuals:
        if i.name not in individuals:
            candidates.spans.append(UnmappedSpan(f"{i.name}: {i.cls}", SCHEMA_VIOLATION))
    kept: list[Assertion] = []
    spans = list(candidates.spans)
    for a in candidates.assertions:
        findings = check_assertion(a, tbox, individuals)
        if any(f.severity is Severity.ERROR for f in findings):
            reasons = "; ".join(f.message for f in findings if f.severity is Severity.ERROR)
            spans.append(UnmappedSpan(f"{a.render()}: {reasons}", SCHEMA_VIOLATION))
        else:
            kept.append(a)
    abox = ABox.of(tbox.id, individuals.values(), kept)
    report = validate_abox(abox, tbox)
    assert report.is_valid, "sanitized ABox must validate"
    return ExtractionResult(abox, spans)
