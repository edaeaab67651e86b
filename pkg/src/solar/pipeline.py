"""Knowledge-acquisition orchestration as a deterministic state machine.

Candidate schema fragments are integrated into one TBox, validated, and
exercised end to end on a training suite. Each failing case is classified
by a deterministic judge into one of four failure classes; refinement then
routes the fix: vocabulary additions and usage contracts come from a
curated patch library (an external agent can supply richer patches through
the same extraction adapter contract), while implementation and extraction
failures become tickets for humans. Iteration continues until the training
suite is clean or the iteration cap is hit.

State order is fixed: Integrating -> Validating -> Evaluating ->
(Refining -> Validating -> Evaluating)* -> Converged | Exhausted.
"""

from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, field, replace
from decimal import Decimal
from importlib import resources
from typing import Optional, Sequence

from .engine import ProofTrace, enrich
from .errors import SolarError
from .extraction import (
    MISSING_VOCABULARY,
    SCHEMA_VIOLATION,
    CaseText,
    ExtractionResult,
    ExtractorBackend,
    extract,
    parse_subject,
)
from .interpreter import (
    DEFAULT_PRECEDENCE,
    ComputationLog,
    FilingStatus,
    TaxScheduleSet,
    compute_tax,
)
from .ontology import (
    Assertion,
    ABox,
    ClassDef,
    ContractScope,
    Datatype,
    Finding,
    PropertyDef,
    PropertyKind,
    Severity,
    TBox,
    UsageContract,
    ValidationReport,
    check_contracts,
    validate_abox,
    validate_tbox,
)
from .rules import Atom, Negated, Positive, Rule, print_rule
from .serialize import decode_tbox


class PipelineStatus(enum.Enum):
    INTEGRATING = "Integrating"
    VALIDATING = "Validating"
    EVALUATING = "Evaluating"
    REFINING = "Refining"
    CONVERGED = "Converged"
    EXHAUSTED = "Exhausted"


class Classification(enum.Enum):
    ONTOLOGICAL_GAP = "OntologicalGap"
    USAGE_PATTERN_GAP = "UsagePatternGap"
    IMPLEMENTATION_ERROR = "ImplementationError"
    EXTRACTION_ERROR = "ExtractionError"


# ---------------------------------------------------------------------------
# stage II: the knowledge-application pipeline for one case


@dataclass
class StageTwoRun:
    """Everything stage II produced for one case, successful or not."""

    case: CaseText
    extraction: Optional[ExtractionResult] = None
    validation: Optional[ValidationReport] = None
    inferred: list[Assertion] = field(default_factory=list)
    trace: Optional[ProofTrace] = None
    enriched: Optional[ABox] = None
    predicted: Optional[Decimal] = None
    log: Optional[ComputationLog] = None
    error: Optional[str] = None
    wall_seconds: float = 0.0


def apply_knowledge(
    case: CaseText,
    tbox: TBox,
    schedules: TaxScheduleSet,
    backend: ExtractorBackend,
    tax_year: Optional[int] = None,
    precedence: Sequence[FilingStatus] = DEFAULT_PRECEDENCE,
) -> StageTwoRun:
    """Extract facts, infer consequences, run the interpreter.

    Never raises for per-case problems: failures land in ``error`` (and
    ``predicted`` stays None) so the judge can look at the full artifacts.
    """
    run = StageTwoRun(case)
    started = time.perf_counter()
    year = tax_year if tax_year is not None else case.tax_year
    try:
        run.extraction = extract(case, tbox, backend)
        run.enriched, run.inferred, run.trace = enrich(tbox, run.extraction.abox)
        run.validation = validate_abox(run.enriched, tbox)
        if year is None:
            raise SolarError("no tax year on case or command line")
        subject = parse_subject(case.question)
        run.predicted, run.log = compute_tax(
            run.enriched, schedules, year, subject=subject, precedence=precedence
        )
    except SolarError as exc:
        run.error = f"{exc.code}: {exc.message}"
    run.wall_seconds = time.perf_counter() - started
    return run


# ---------------------------------------------------------------------------
# the judge: deterministic failure classification


@dataclass(frozen=True)
class CaseFailure:
    case_id: str
    expected: Decimal
    got: Optional[Decimal]
    classification: Classification
    evidence: tuple[str, ...]


@dataclass(frozen=True)
class PatchLibrary:
    """Curated fix knowledge consulted by the judge and by refinement:
    known usage contracts and vocabulary patches keyed by trigger tokens."""

    usage_contracts: tuple[UsageContract, ...]
    vocabulary: tuple[tuple[tuple[str, ...], PropertyDef], ...]

    @staticmethod
    def load_default() -> "PatchLibrary":
        path = resources.files("solar").joinpath("data/patch_library.json")
        return PatchLibrary.from_doc(json.loads(path.read_text()))

    @staticmethod
    def from_doc(doc: dict) -> "PatchLibrary":
        contracts = tuple(
            UsageContract(
                trigger=u["trigger"],
                requires=tuple(u["requires"]),
                scope=ContractScope(u.get("scope", "SameSubject")),
                message=u.get("message", ""),
            )
            for u in doc.get("usage_contracts", [])
        )
        vocab = []
        for entry in doc.get("vocabulary", []):
            p = entry["property"]
            vocab.append(
                (
                    tuple(entry["match_tokens"]),
                    PropertyDef(
                        name=p["name"],
                        kind=PropertyKind(p["kind"]),
                        subject_class=p["subject_class"],
                        datatype=Datatype(p["datatype"]) if p.get("datatype") else None,
                        object_class=p.get("object_class"),
                        description=p.get("description", ""),
                    ),
                )
            )
        return PatchLibrary(contracts, tuple(vocab))


def classify_failure(
    case: CaseText,
    run: StageTwoRun,
    expected: Decimal,
    library: Optional[PatchLibrary] = None,
) -> CaseFailure:
    """Deterministic decision procedure, most fundamental failure first:

    1. unmapped spans flagged MISSING_VOCABULARY -> OntologicalGap
    2. violated usage contracts (declared on the TBox, or known to the
       library even when the TBox omits them) -> UsagePatternGap
    3. quarantined ill-typed candidate assertions -> ExtractionError
    4. otherwise -> ImplementationError
    """
    library = library or PatchLibrary.load_default()
    spans = run.extraction.unmapped_spans if run.extraction else []

    vocab_evidence = [s.text for s in spans if s.reason == MISSING_VOCABULARY]
    if vocab_evidence:
        return CaseFailure(case.id, expected, run.predicted, Classification.ONTOLOGICAL_GAP, tuple(vocab_evidence))

    usage_evidence: list[str] = []
    if run.validation is not None:
        usage_evidence.extend(f.message for f in run.validation.by_code("USAGE_CONTRACT"))
    if run.enriched is not None:
        for finding in check_contracts(run.enriched, library.usage_contracts):
            if finding.message not in usage_evidence:
                usage_evidence.append(finding.message)
    if usage_evidence:
        return CaseFailure(case.id, expected, run.predicted, Classification.USAGE_PATTERN_GAP, tuple(usage_evidence))

    schema_evidence = [s.text for s in spans if s.reason == SCHEMA_VIOLATION]
    if schema_evidence:
        return CaseFailure(case.id, expected, run.predicted, Classification.EXTRACTION_ERROR, tuple(schema_evidence))

    evidence = (run.error,) if run.error else (f"answer {run.predicted} differs from expected {expected}",)
    return CaseFailure(case.id, expected, run.predicted, Classification.IMPLEMENTATION_ERROR, evidence)


# ---------------------------------------------------------------------------
# integration


def _canonical_class_name(name: str) -> str:
    return name[:1].upper() + name[1:]


def _canonical_property_name(name: str) -> str:
    return name[:1].lower() + name[1:]


def _rename_atom(atom: Atom, names: dict[str, str]) -> Atom:
    return Atom(names.get(atom.predicate.casefold(), atom.predicate), atom.terms)


def _rename_rule(rule: Rule, names: dict[str, str]) -> Rule:
    body = []
    for lit in rule.body:
        if isinstance(lit, Positive):
            body.append(Positive(_rename_atom(lit.atom, names)))
        elif isinstance(lit, Negated):
            body.append(Negated(_rename_atom(lit.atom, names)))
        else:
            body.append(lit)
    return Rule(_rename_atom(rule.head, names), tuple(body), id=rule.id, description=rule.description)


def integrate(fragments: Sequence[TBox]) -> tuple[TBox, list[Finding]]:
    """Consolidate candidate fragments into one TBox.

    Names are normalized to canonical camelCase and deduplicated by
    case-folded comparison; same-name declarations with different
    signatures keep the first and log a CONFLICT finding.
    """
    if not fragments:
        raise SolarError("no fragments to integrate")
    findings: list[Finding] = []
    classes: dict[str, ClassDef] = {}
    class_names: dict[str, str] = {}
    for frag in fragments:
        for cls in frag.classes:
            canonical = _canonical_class_name(cls.name)
            key = canonical.casefold()
            if key not in classes:
                classes[key] = replace(cls, name=canonical)
                class_names[key] = canonical
            else:
                kept = classes[key]
                if kept.parent != cls.parent:
                    findings.append(
                        Finding(Severity.WARNING, "CONFLICT", f"class '{canonical}' redeclared with different parent; keeping first", canonical)
                    )
                else:
                    findings.append(
                        Finding(Severity.WARNING, "DUPLICATE", f"class '{cls.name}' merged into '{canonical}'", canonical)
                    )

    properties: dict[str, PropertyDef] = {}
    prop_names: dict[str, str] = {}
    for frag in fragments:
        for prop in frag.properties:
            canonical = _canonical_property_name(prop.name)
            key = canonical.casefold()
            subject = class_names.get(prop.subject_class.casefold(), prop.subject_class)
            obj = class_names.get(prop.object_class.casefold(), prop.object_class) if prop.object_class else None
            normalized = replace(prop, name=canonical, subject_class=subject, object_class=obj)
            if key not in properties:
                properties[key] = normalized
                prop_names[key] = canonical
            else:
                kept = properties[key]
                same_signature = (
                    kept.kind is normalized.kind
                    and kept.subject_class == normalized.subject_class
                    and kept.object_class == normalized.object_class
                    and kept.datatype is normalized.datatype
                )
                code = "DUPLICATE" if same_signature else "CONFLICT"
                detail = "merged into" if same_signature else "conflicts with kept"
                findings.append(
                    Finding(Severity.WARNING, code, f"property '{prop.name}' {detail} '{kept.name}'; keeping first", canonical)
                )

    rules: dict[str, Rule] = {}
    for frag in fragments:
        for rule in frag.rules:
            renamed = _rename_rule(rule, prop_names)
            key = print_rule(renamed)
            if key not in rules:
                rules[key] = renamed
            else:
                findings.append(Finding(Severity.WARNING, "DUPLICATE", f"rule '{rule.id}' duplicates '{rules[key].id}'", rule.id))

    contracts: dict[tuple, UsageContract] = {}
    for frag in fragments:
        for contract in frag.usage_contracts:
            trigger = prop_names.get(contract.trigger.casefold(), contract.trigger)
            requires = tuple(prop_names.get(r.casefold(), r) for r in contract.requires)
            normalized = UsageContract(trigger, requires, contract.scope, contract.message)
            contracts.setdefault((trigger, requires, contract.scope), normalized)

    merged = TBox(
        id=fragments[0].id,
        version=fragments[0].version,
        classes=tuple(classes.values()),
        properties=tuple(properties.values()),
        rules=tuple(rules.values()),
        usage_contracts=tuple(contracts.values()),
    )
    return merged, findings


# ---------------------------------------------------------------------------
# refinement


@dataclass(frozen=True)
class PipelineState:
    tbox: TBox
    iteration: int
    failures: tuple[CaseFailure, ...]
    status: PipelineStatus
    tickets: tuple[str, ...] = ()

    def with_status(self, status: PipelineStatus) -> "PipelineState":
        return replace(self, status=status)


def refine(
    state: PipelineState,
    library: Optional[PatchLibrary] = None,
    max_iterations: int = 10,
) -> PipelineState:
    """Route fixes for the recorded failures.

    UsagePatternGap failures add the library's matching usage contracts;
    OntologicalGap failures add vocabulary patches whose trigger tokens
    appear in the evidence; implementation and extraction failures become
    tickets. Any schema change bumps the TBox version.
    """
    if not state.failures:
        return state.with_status(PipelineStatus.CONVERGED)
    if state.iteration >= max_iterations:
        return state.with_status(PipelineStatus.EXHAUSTED)
    library = library or PatchLibrary.load_default()
    tbox = state.tbox
    changed = False
    tickets = list(state.tickets)

    for failure in state.failures:
        if failure.classification is Classification.USAGE_PATTERN_GAP:
            existing = {(c.trigger, c.requires, c.scope) for c in tbox.usage_contracts}
            for contract in library.usage_contracts:
                key = (contract.trigger, contract.requires, contract.scope)
                violated = any(
                    contract.trigger in ev or any(req in ev for req in contract.requires)
                    for ev in failure.evidence
                )
                if key not in existing and violated:
                    tbox = replace(tbox, usage_contracts=tbox.usage_contracts + (contract,))
                    changed = True
        elif failure.classification is Classification.ONTOLOGICAL_GAP:
            declared = {p.name for p in tbox.properties}
            patched = False
            for tokens, prop in library.vocabulary:
                mentioned = any(
                    all(token.casefold() in evidence.casefold() for token in tokens) for evidence in failure.evidence
                )
                if mentioned and prop.name not in declared:
                    tbox = replace(tbox, properties=tbox.properties + (prop,))
                    changed = True
                    patched = True
            if not patched:
                tickets.append(f"{failure.case_id}: vocabulary gap without library patch: {'; '.join(failure.evidence)}")
        elif failure.classification is Classification.IMPLEMENTATION_ERROR:
            tickets.append(f"{failure.case_id}: interpreter bug report: {'; '.join(failure.evidence)}")
        else:
            tickets.append(f"{failure.case_id}: extraction defect: {'; '.join(failure.evidence)}")

    if changed:
        tbox = tbox.bumped()
    return PipelineState(tbox, state.iteration, state.failures, PipelineStatus.VALIDATING, tuple(tickets))


# ---------------------------------------------------------------------------
# the full loop


@dataclass
class IterationReport:
    iteration: int
    tbox_version: int
    failures: list[CaseFailure]


@dataclass
class PipelineResult:
    state: PipelineState
    transitions: list[str]
    iterations: list[IterationReport]
    integration_findings: list[Finding]


def load_fragment_files(paths) -> list[TBox]:
    fragments = []
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            fragments.append(decode_tbox(json.load(fh)))
    return fragments


def run_pipeline(
    fragments: Sequence[TBox],
    train: Sequence[tuple[CaseText, Decimal]],
    schedules: TaxScheduleSet,
    backend: ExtractorBackend,
    max_iterations: int = 10,
    library: Optional[PatchLibrary] = None,
) -> PipelineResult:
    """Drive the state machine to convergence or exhaustion."""
    from .harness import within_tolerance

    library = library or PatchLibrary.load_default()
    transitions = [PipelineStatus.INTEGRATING.value]
    tbox, findings = integrate(fragments)
    state = PipelineState(tbox, 0, (), PipelineStatus.INTEGRATING)
    iterations: list[IterationReport] = []

    while True:
        transitions.append(PipelineStatus.VALIDATING.value)
        report = validate_tbox(state.tbox)
        if not report.is_valid:
            details = "; ".join(f.message for f in report.errors())
            state = replace(
                state,
                status=PipelineStatus.EXHAUSTED,
                tickets=state.tickets + (f"schema invalid: {details}",),
            )
            transitions.append(PipelineStatus.EXHAUSTED.value)
            return PipelineResult(state, transitions, iterations, findings)

        transitions.append(PipelineStatus.EVALUATING.value)
        failures: list[CaseFailure] = []
        for case, expected in train:
            run = apply_knowledge(case, state.tbox, schedules, backend)
            if run.predicted is None or not within_tolerance(run.predicted, expected):
                failures.append(classify_failure(case, run, expected, library))
        state = replace(state, iteration=state.iteration + 1, failures=tuple(failures), status=PipelineStatus.EVALUATING)
        iterations.append(IterationReport(state.iteration, state.tbox.version, failures))

        if not failures:
            state = state.with_status(PipelineStatus.CONVERGED)
            transitions.append(PipelineStatus.CONVERGED.value)
            return PipelineResult(state, transitions, iterations, findings)
        if state.iteration >= max_iterations:
            state = state.with_status(PipelineStatus.EXHAUSTED)
            transitions.append(PipelineStatus.EXHAUSTED.value)
            return PipelineResult(state, transitions, iterations, findings)

        transitions.append(PipelineStatus.REFINING.value)
        state = refine(state.with_status(PipelineStatus.REFINING), library, max_iterations)
        if state.status is PipelineStatus.EXHAUSTED:
            transitions.append(PipelineStatus.EXHAUSTED.value)
            return PipelineResult(state, transitions, iterations, findings)
