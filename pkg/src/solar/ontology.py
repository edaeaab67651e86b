"""Statute-level schema (TBox) and case-level facts (ABox).

A TBox declares the vocabulary of one statute domain: classes, properties
(unary predicates, object relationships, datatype attributes), inference
rules, and usage contracts describing which predicates must co-occur.
An ABox holds the individuals and assertions of one concrete case, typed
against a TBox.

Both structures are immutable after construction; all mutation happens by
building new values. Currency-bearing literals use ``decimal.Decimal`` so
amounts like 236422.00 never pass through binary floating point.
"""

from __future__ import annotations

import datetime
import enum
import hashlib
from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation
from typing import Iterable, Sequence, Union

from .errors import SolarError


class Datatype(enum.Enum):
    DECIMAL = "Decimal"
    INTEGER = "Integer"
    DATE = "Date"
    BOOLEAN = "Boolean"
    TEXT = "Text"


class PropertyKind(enum.Enum):
    UNARY = "Unary"
    OBJECT = "Object"
    DATATYPE = "Datatype"


class Source(enum.Enum):
    GIVEN = "Given"
    EXTRACTED = "Extracted"
    INFERRED = "Inferred"


class Severity(enum.Enum):
    ERROR = "Error"
    WARNING = "Warning"


class ContractScope(enum.Enum):
    SAME_SUBJECT = "SameSubject"
    ANY_SUBJECT = "AnySubject"


@dataclass(frozen=True)
class Literal:
    """A typed constant value.

    ``value`` holds Decimal, int, datetime.date, bool, or str according to
    ``kind``. Construct through the ``decimal``/``integer``/... helpers,
    which normalize and type-check.
    """

    kind: Datatype
    value: object

    @staticmethod
    def decimal(value: Union[str, int, Decimal]) -> "Literal":
        try:
            d = Decimal(str(value))
        except InvalidOperation as exc:
            raise ValueError(f"not a decimal: {value!r}") from exc
        if not d.is_finite():
            raise ValueError(f"decimal must be finite: {value!r}")
        return Literal(Datatype.DECIMAL, d)

    @staticmethod
    def integer(value: Union[str, int]) -> "Literal":
        return Literal(Datatype.INTEGER, int(value))

    @staticmethod
    def date(value: Union[str, datetime.date]) -> "Literal":
        if isinstance(value, str):
            value = datetime.date.fromisoformat(value)
        return Literal(Datatype.DATE, value)

    @staticmethod
    def boolean(value: bool) -> "Literal":
        return Literal(Datatype.BOOLEAN, bool(value))

    @staticmethod
    def text(value: str) -> "Literal":
        return Literal(Datatype.TEXT, str(value))

    def to_text(self) -> str:
        """Canonical string form used on the wire and in assertion ids."""
        if self.kind is Datatype.BOOLEAN:
            return "true" if self.value else "false"
        if self.kind is Datatype.DATE:
            return self.value.isoformat()
        return str(self.value)

    @staticmethod
    def from_text(text: str, kind: Datatype) -> "Literal":
        if kind is Datatype.DECIMAL:
            return Literal.decimal(text)
        if kind is Datatype.INTEGER:
            return Literal.integer(text)
        if kind is Datatype.DATE:
            return Literal.date(text)
        if kind is Datatype.BOOLEAN:
            if text not in ("true", "false"):
                raise ValueError(f"not a boolean: {text!r}")
            return Literal.boolean(text == "true")
        return Literal.text(text)


@dataclass(frozen=True)
class Ind:
    """Reference to an individual by name, as it appears in assertion args."""

    name: str


Arg = Union[Ind, Literal]


@dataclass(frozen=True)
class ClassDef:
    name: str
    parent: str | None = None
    description: str = ""


@dataclass(frozen=True)
class PropertyDef:
    name: str
    kind: PropertyKind
    subject_class: str
    object_class: str | None = None
    datatype: Datatype | None = None
    description: str = ""

    @property
    def arity(self) -> int:
        return 1 if self.kind is PropertyKind.UNARY else 2


@dataclass(frozen=True)
class UsageContract:
    """Co-occurrence requirement: when ``trigger`` is asserted, each predicate
    in ``requires`` must also be asserted (for the same subject when scope is
    SameSubject). Violations are warnings, never inference blockers.
    """

    trigger: str
    requires: tuple[str, ...]
    scope: ContractScope = ContractScope.SAME_SUBJECT
    message: str = ""


@dataclass(frozen=True)
class TBox:
    id: str
    version: int
    classes: tuple[ClassDef, ...]
    properties: tuple[PropertyDef, ...]
    rules: tuple["Rule", ...] = ()  # noqa: F821 - defined in solar.rules
    usage_contracts: tuple[UsageContract, ...] = ()

    def class_map(self) -> dict[str, ClassDef]:
        return {c.name: c for c in self.classes}

    def property_map(self) -> dict[str, PropertyDef]:
        return {p.name: p for p in self.properties}

    def is_subclass(self, name: str, ancestor: str) -> bool:
        """True when ``name`` equals ``ancestor`` or inherits from it."""
        classes = self.class_map()
        seen = set()
        cur: str | None = name
        while cur is not None and cur not in seen:
            if cur == ancestor:
                return True
            seen.add(cur)
            cls = classes.get(cur)
            cur = cls.parent if cls else None
        return False

    def bumped(self) -> "TBox":
        return replace(self, version=self.version + 1)


@dataclass(frozen=True)
class Individual:
    name: str
    cls: str


def assertion_id(predicate: str, args: Sequence[Arg]) -> str:
    """Content-derived id: equal (predicate, args) means the same fact."""
    parts = [a.name if isinstance(a, Ind) else a.to_text() for a in args]
    digest = hashlib.sha1(f"{predicate}({','.join(parts)})".encode()).hexdigest()
    return f"a-{digest[:12]}"


@dataclass(frozen=True)
class Assertion:
    predicate: str
    args: tuple[Arg, ...]
    source: Source = Source.GIVEN
    confidence: float = 1.0
    explanation: str = ""
    id: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.id:
            object.__setattr__(self, "id", assertion_id(self.predicate, self.args))

    def key(self) -> tuple:
        """Fact identity: predicate plus argument values."""
        return (self.predicate, self.args)

    def render(self) -> str:
        parts = [a.name if isinstance(a, Ind) else a.to_text() for a in self.args]
        return f"{self.predicate}({', '.join(parts)})"


@dataclass(frozen=True)
class ABox:
    tbox_id: str
    individuals: tuple[Individual, ...]
    assertions: tuple[Assertion, ...]

    @staticmethod
    def of(
        tbox_id: str,
        individuals: Iterable[Individual],
        assertions: Iterable[Assertion],
    ) -> "ABox":
        """Build with set semantics: duplicate individuals and duplicate
        (predicate, args) assertions keep the first occurrence."""
        inds: dict[str, Individual] = {}
        for ind in individuals:
            inds.setdefault(ind.name, ind)
        facts: dict[tuple, Assertion] = {}
        for a in assertions:
            facts.setdefault(a.key(), a)
        return ABox(tbox_id, tuple(inds.values()), tuple(facts.values()))

    def individual_map(self) -> dict[str, Individual]:
        return {i.name: i for i in self.individuals}

    def by_predicate(self, predicate: str) -> list[Assertion]:
        return [a for a in self.assertions if a.predicate == predicate]

    def assertion_map(self) -> dict[str, Assertion]:
        return {a.id: a for a in self.assertions}


@dataclass(frozen=True)
class Finding:
    severity: Severity
    code: str
    message: str
    element: str = ""


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...]

    @property
    def is_valid(self) -> bool:
        return not any(f.severity is Severity.ERROR for f in self.findings)

    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity is Severity.ERROR]

    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.severity is Severity.WARNING]

    def by_code(self, code: str) -> list[Finding]:
        return [f for f in self.findings if f.code == code]


class MergeTypeError(SolarError):
    code = "MERGE_TYPE_MISMATCH"


def _err(code: str, message: str, element: str = "") -> Finding:
    return Finding(Severity.ERROR, code, message, element)


def _warn(code: str, message: str, element: str = "") -> Finding:
    return Finding(Severity.WARNING, code, message, element)


def validate_tbox(tbox: TBox) -> ValidationReport:
    """Check internal consistency of a TBox.

    Covers name uniqueness, class-reference closure, property field
    completeness per kind, rule safety and typing, stratifiability of the
    rule set, and usage-contract predicate closure. Findings are data;
    this never raises.
    """
    from . import rules as rule_lang

    findings: list[Finding] = []
    class_names: set[str] = set()
    for c in tbox.classes:
        if c.name in class_names:
            findings.append(_err("DUPLICATE_NAME", f"class '{c.name}' declared twice", c.name))
        class_names.add(c.name)

    classes = tbox.class_map()
    for c in tbox.classes:
        if c.parent is not None and c.parent not in classes:
            findings.append(
                _err("UNDECLARED_CLASS", f"class '{c.name}' has undeclared parent '{c.parent}'", c.name)
            )
    # parent chains must terminate
    for c in tbox.classes:
        seen: set[str] = set()
        cur: str | None = c.name
        while cur is not None:
            if cur in seen:
                findings.append(_err("CLASS_CYCLE", f"inheritance cycle through '{c.name}'", c.name))
                break
            seen.add(cur)
            parent = classes.get(cur)
            cur = parent.parent if parent else None

    prop_names: set[str] = set()
    for p in tbox.properties:
        if p.name in prop_names:
            findings.append(_err("DUPLICATE_NAME", f"property '{p.name}' declared twice", p.name))
        prop_names.add(p.name)
        if p.subject_class not in classes:
            findings.append(
                _err("UNDECLARED_CLASS", f"property '{p.name}' has undeclared subject class '{p.subject_class}'", p.name)
            )
        if p.kind is PropertyKind.OBJECT:
            if p.object_class is None:
                findings.append(_err("PROPERTY_FIELDS", f"object property '{p.name}' lacks object_class", p.name))
            elif p.object_class not in classes:
                findings.append(
                    _err("UNDECLARED_CLASS", f"property '{p.name}' has undeclared object class '{p.object_class}'", p.name)
                )
            if p.datatype is not None:
                findings.append(_err("PROPERTY_FIELDS", f"object property '{p.name}' must not declare datatype", p.name))
        elif p.kind is PropertyKind.DATATYPE:
            if p.datatype is None:
                findings.append(_err("PROPERTY_FIELDS", f"datatype property '{p.name}' lacks datatype", p.name))
            if p.object_class is not None:
                findings.append(_err("PROPERTY_FIELDS", f"datatype property '{p.name}' must not declare object_class", p.name))
        else:
            if p.object_class is not None or p.datatype is not None:
                findings.append(_err("PROPERTY_FIELDS", f"unary property '{p.name}' takes no object_class/datatype", p.name))

    props = tbox.property_map()
    for rule in tbox.rules:
        findings.extend(rule_lang.check_rule(rule, props))

    try:
        rule_lang.stratify(tbox.rules)
    except rule_lang.NotStratifiableError as exc:
        findings.append(
            _err("NOT_STRATIFIABLE", f"negation cycle: {' -> '.join(exc.cycle)}", exc.cycle[0] if exc.cycle else "")
        )

    for contract in tbox.usage_contracts:
        for name in (contract.trigger, *contract.requires):
            if name not in props:
                findings.append(
                    _err("CONTRACT_PREDICATE", f"usage contract references undeclared predicate '{name}'", name)
                )

    return ValidationReport(tuple(findings))


def check_assertion(a: Assertion, tbox: TBox, individuals: dict[str, Individual]) -> list[Finding]:
    findings: list[Finding] = []
    prop = tbox.property_map().get(a.predicate)
    if prop is None:
        return [_err("UNDECLARED_PREDICATE", f"assertion uses undeclared predicate '{a.predicate}'", a.render())]
    if len(a.args) != prop.arity:
        findings.append(
            _err("ARITY_MISMATCH", f"'{a.predicate}' expects {prop.arity} args, got {len(a.args)}", a.render())
        )
        return findings

    def check_individual(arg: Arg, expected_class: str, position: str) -> None:
        if not isinstance(arg, Ind):
            findings.append(
                _err("ARG_KIND_MISMATCH", f"{position} of '{a.predicate}' must be an individual", a.render())
            )
            return
        ind = individuals.get(arg.name)
        if ind is None:
            findings.append(
                _err("UNDECLARED_INDIVIDUAL", f"assertion references undeclared individual '{arg.name}'", a.render())
            )
        elif not tbox.is_subclass(ind.cls, expected_class):
            findings.append(
                _err(
                    "CLASS_MISMATCH",
                    f"'{arg.name}' has class '{ind.cls}', expected '{expected_class}' for {position} of '{a.predicate}'",
                    a.render(),
                )
            )

    check_individual(a.args[0], prop.subject_class, "subject")
    if prop.kind is PropertyKind.OBJECT:
        check_individual(a.args[1], prop.object_class or "", "object")
    elif prop.kind is PropertyKind.DATATYPE:
        value = a.args[1]
        if not isinstance(value, Literal):
            findings.append(
                _err("ARG_KIND_MISMATCH", f"value of datatype property '{a.predicate}' must be a literal", a.render())
            )
        elif value.kind is not prop.datatype:
            findings.append(
                _err(
                    "DATATYPE_MISMATCH",
                    f"'{a.predicate}' expects {prop.datatype.value}, got {value.kind.value}",
                    a.render(),
                )
            )
    if not 0.0 <= a.confidence <= 1.0:
        findings.append(_err("CONFIDENCE_INVALID", f"confidence {a.confidence} outside [0,1]", a.render()))
    elif a.source is Source.INFERRED and a.confidence != 1.0:
        findings.append(_err("CONFIDENCE_INVALID", "inferred assertions carry confidence 1.0", a.render()))
    return findings


def check_contracts(abox: ABox, contracts: Iterable[UsageContract]) -> list[Finding]:
    """Warning findings for violated usage contracts: trigger asserted but a
    required predicate absent (in scope)."""
    findings: list[Finding] = []
    by_pred: dict[str, list[Assertion]] = {}
    for a in abox.assertions:
        by_pred.setdefault(a.predicate, []).append(a)
    for contract in contracts:
        for trigger in by_pred.get(contract.trigger, []):
            subject = trigger.args[0]
            if not isinstance(subject, Ind):
                continue
            for required in contract.requires:
                present = by_pred.get(required, [])
                if contract.scope is ContractScope.SAME_SUBJECT:
                    present = [a for a in present if a.args and a.args[0] == subject]
                if not present:
                    msg = contract.message or (
                        f"'{contract.trigger}({subject.name})' asserted without required '{required}'"
                    )
                    findings.append(_warn("USAGE_CONTRACT", msg, f"{required}:{subject.name}"))
    return findings


def validate_abox(abox: ABox, tbox: TBox) -> ValidationReport:
    """Check that an ABox is well-typed against a TBox.

    Errors: undeclared predicates/individuals/classes, arity and argument
    kind mismatches, datatype mismatches. Warnings: violated usage
    contracts. Unknown predicates are errors, never silently ignored.
    """
    findings: list[Finding] = []
    individuals: dict[str, Individual] = {}
    classes = tbox.class_map()
    for ind in abox.individuals:
        if ind.name in individuals:
            findings.append(_err("DUPLICATE_NAME", f"individual '{ind.name}' declared twice", ind.name))
        individuals[ind.name] = ind
        if ind.cls not in classes:
            findings.append(
                _err("UNDECLARED_CLASS", f"individual '{ind.name}' has undeclared class '{ind.cls}'", ind.name)
            )
    for a in abox.assertions:
        findings.extend(check_assertion(a, tbox, individuals))
    findings.extend(check_contracts(abox, tbox.usage_contracts))
    return ValidationReport(tuple(findings))


def merge(base: ABox, inferred: Iterable[Assertion], tbox: TBox) -> ABox:
    """Union ``base`` with newly derived assertions, deduplicated by
    (predicate, args). On duplicates the original assertion wins, so
    Given/Extracted provenance is preserved. Any ill-typed assertion
    rejects the whole merge.
    """
    inferred = list(inferred)
    individuals = base.individual_map()
    bad: list[str] = []
    for a in inferred:
        findings = check_assertion(a, tbox, individuals)
        bad.extend(f.message for f in findings if f.severity is Severity.ERROR)
    if bad:
        raise MergeTypeError("; ".join(bad))
    facts: dict[tuple, Assertion] = {a.key(): a for a in base.assertions}
    for a in inferred:
        facts.setdefault(a.key(), a)
    return ABox(base.tbox_id, base.individuals, tuple(facts.values()))
