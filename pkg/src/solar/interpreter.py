"""Executable statute interpreter: tax liability from an enriched ABox.

Consumes an inference-enriched ABox plus a schedule set (bracket tables,
standard deductions, exemptions, all loaded from data files) and returns
the liability with a step-by-step computation log. All arithmetic is
exact ``Decimal``; rounding half-up to cents happens only on the final
answer.

The vocabulary consumed here (isSurvivingSpouse, filesJointReturn,
hasGrossIncomeAmount, ...) is the reference statute schema shipped in
``solar/data/reference_tbox.json``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from decimal import Decimal, ROUND_HALF_UP
from typing import Iterable, Optional, Sequence

from .errors import SolarError
from .ontology import ABox, Assertion, Ind, Literal, TBox

CENTS = Decimal("0.01")

# reference-schema predicate names
P_SURVIVING_SPOUSE = "isSurvivingSpouse"
P_HEAD_OF_HOUSEHOLD = "isHeadOfHousehold"
P_MARRIED = "isMarriedIndividual"
P_UNMARRIED = "isUnmarriedIndividual"
P_JOINT_RETURN = "filesJointReturn"
P_HAS_SPOUSE = "hasSpouse"
P_GROSS_INCOME = "hasGrossIncomeAmount"
P_ADJUSTED_INCOME = "hasAdjustedGrossIncomeAmount"
P_ITEMIZED = "hasItemizedDeductionAmount"
P_STANDARD_DEDUCTION = "takesStandardDeduction"
P_CLAIMS_DEPENDENT = "claimsDependent"

INCOME_PREDICATES = (P_GROSS_INCOME, P_ADJUSTED_INCOME)
TAXPAYER_CLASS = "Taxpayer"


class FilingStatus(enum.Enum):
    SURVIVING_SPOUSE = "SurvivingSpouse"
    HEAD_OF_HOUSEHOLD = "HeadOfHousehold"
    MARRIED_JOINT = "MarriedJoint"
    MARRIED_SEPARATE = "MarriedSeparate"
    SINGLE = "Single"


DEFAULT_PRECEDENCE: tuple[FilingStatus, ...] = (
    FilingStatus.SURVIVING_SPOUSE,
    FilingStatus.MARRIED_JOINT,
    FilingStatus.MARRIED_SEPARATE,
    FilingStatus.HEAD_OF_HOUSEHOLD,
    FilingStatus.SINGLE,
)


class MissingScheduleError(SolarError):
    code = "MISSING_SCHEDULE"

    def __init__(self, year: int, status: str | None = None, table: str = "brackets"):
        self.year = year
        self.status = status
        where = f"{table}[{year}]" + (f"[{status}]" if status else "")
        super().__init__(f"no schedule entry for {where}")


class MalformedScheduleError(SolarError):
    code = "MALFORMED_SCHEDULE"


class NoIncomeAssertionsError(SolarError):
    code = "NO_INCOME_ASSERTIONS"


class MultipleTaxpayersError(SolarError):
    code = "MULTIPLE_TAXPAYERS_AMBIGUOUS"


@dataclass(frozen=True)
class Bracket:
    lower: Decimal
    rate: Decimal
    base: Decimal


@dataclass(frozen=True)
class TaxScheduleSet:
    brackets: dict[int, dict[str, tuple[Bracket, ...]]]
    standard_deduction: dict[int, dict[str, Decimal]]
    exemption: dict[int, Decimal]

    def bracket_table(self, year: int, status: FilingStatus) -> tuple[Bracket, ...]:
        by_status = self.brackets.get(year)
        if by_status is None or status.value not in by_status:
            raise MissingScheduleError(year, status.value, "brackets")
        return by_status[status.value]

    def deduction_for(self, year: int, status: FilingStatus) -> Decimal:
        by_status = self.standard_deduction.get(year)
        if by_status is None or status.value not in by_status:
            raise MissingScheduleError(year, status.value, "standard_deduction")
        return by_status[status.value]

    def exemption_for(self, year: int) -> Decimal:
        if year not in self.exemption:
            raise MissingScheduleError(year, None, "exemption")
        return self.exemption[year]


def _validate_brackets(year: str, status: str, table: Sequence[Bracket]) -> None:
    if not table:
        raise MalformedScheduleError(f"brackets[{year}][{status}] is empty")
    if table[0].lower != 0:
        raise MalformedScheduleError(f"brackets[{year}][{status}] must start at 0")
    for i, b in enumerate(table):
        if not (0 <= b.rate <= 1):
            raise MalformedScheduleError(f"brackets[{year}][{status}][{i}] rate {b.rate} outside [0,1]")
        if i > 0 and b.lower <= table[i - 1].lower:
            raise MalformedScheduleError(f"brackets[{year}][{status}] bounds not strictly increasing")


def decode_schedules(doc: dict) -> TaxScheduleSet:
    try:
        brackets: dict[int, dict[str, tuple[Bracket, ...]]] = {}
        for year, by_status in doc["brackets"].items():
            brackets[int(year)] = {}
            for status, entries in by_status.items():
                table = tuple(
                    Bracket(Decimal(e["lower"]), Decimal(e["rate"]), Decimal(e["base"]))
                    for e in entries
                )
                _validate_brackets(year, status, table)
                brackets[int(year)][status] = table
        deductions = {
            int(year): {status: Decimal(v) for status, v in by_status.items()}
            for year, by_status in doc["standard_deduction"].items()
        }
        exemptions = {int(year): Decimal(v) for year, v in doc["exemption"].items()}
    except MalformedScheduleError:
        raise
    except (KeyError, ValueError, TypeError, ArithmeticError) as exc:
        raise MalformedScheduleError(f"malformed schedule file: {exc}") from exc
    return TaxScheduleSet(brackets, deductions, exemptions)


def load_schedules(path) -> TaxScheduleSet:
    with open(path, encoding="utf-8") as fh:
        return decode_schedules(json.load(fh))


@dataclass(frozen=True)
class FilingDetermination:
    status: FilingStatus
    basis: tuple[str, ...]  # assertion ids consulted


@dataclass(frozen=True)
class LogStep:
    label: str
    inputs: tuple[Decimal, ...]
    output: Decimal
    provenance: tuple[str, ...]


@dataclass
class ComputationLog:
    filing: FilingDetermination
    steps: list[LogStep]

    def step(self, label: str) -> LogStep:
        for s in self.steps:
            if s.label == label:
                return s
        raise KeyError(label)


def resolve_subject(abox: ABox, subject: Optional[str] = None) -> str:
    """The individual whose liability is computed.

    Explicit designation wins; otherwise the unique income-bearing
    individual, then the unique Taxpayer. Anything else is ambiguous.
    """
    individuals = abox.individual_map()
    if subject is not None:
        if subject not in individuals:
            raise MultipleTaxpayersError(f"designated subject '{subject}' not in ABox")
        return subject
    earners = []
    for a in abox.assertions:
        if a.predicate in INCOME_PREDICATES and isinstance(a.args[0], Ind):
            if a.args[0].name not in earners:
                earners.append(a.args[0].name)
    if len(earners) == 1:
        return earners[0]
    taxpayers = [i.name for i in abox.individuals if i.cls == TAXPAYER_CLASS]
    if len(taxpayers) == 1:
        return taxpayers[0]
    raise MultipleTaxpayersError(
        "multiple candidate taxpayers and no designated subject"
    )


def _subject_assertions(abox: ABox, subject: str) -> dict[str, list[Assertion]]:
    out: dict[str, list[Assertion]] = {}
    for a in abox.assertions:
        if a.args and isinstance(a.args[0], Ind) and a.args[0].name == subject:
            out.setdefault(a.predicate, []).append(a)
    return out


def _check_status(
    status: FilingStatus, facts: dict[str, list[Assertion]]
) -> Optional[list[Assertion]]:
    """Basis assertions when ``status`` applies, else None."""
    if status is FilingStatus.SURVIVING_SPOUSE:
        found = facts.get(P_SURVIVING_SPOUSE)
        return list(found) if found else None
    if status is FilingStatus.MARRIED_JOINT:
        joint = facts.get(P_JOINT_RETURN)
        spouse = facts.get(P_HAS_SPOUSE)
        if joint and spouse:
            return [joint[0], spouse[0]]
        return None
    if status is FilingStatus.MARRIED_SEPARATE:
        married = facts.get(P_MARRIED)
        if married and not facts.get(P_JOINT_RETURN):
            return [married[0]]
        return None
    if status is FilingStatus.HEAD_OF_HOUSEHOLD:
        found = facts.get(P_HEAD_OF_HOUSEHOLD)
        return list(found) if found else None
    # Single is the fallback status
    unmarried = facts.get(P_UNMARRIED)
    return [unmarried[0]] if unmarried else []


def determine_filing_status(
    abox: ABox,
    subject: Optional[str] = None,
    precedence: Sequence[FilingStatus] = DEFAULT_PRECEDENCE,
) -> FilingDetermination:
    """First applicable status in precedence order, citing the assertions
    that decided it."""
    name = resolve_subject(abox, subject)
    facts = _subject_assertions(abox, name)
    for status in precedence:
        basis = _check_status(status, facts)
        if basis is not None:
            return FilingDetermination(status, tuple(a.id for a in basis))
    return FilingDetermination(FilingStatus.SINGLE, ())


def apply_brackets(taxable: Decimal, table: Sequence[Bracket]) -> Decimal:
    """Progressive tax: base of the containing bracket plus its rate on the
    excess over the bracket's lower bound, rounded half-up to cents."""
    if taxable < 0:
        raise ValueError("taxable income must be non-negative")
    containing = table[0]
    for bracket in table:
        if taxable >= bracket.lower:
            containing = bracket
        else:
            break
    tax = containing.base + containing.rate * (taxable - containing.lower)
    return tax.quantize(CENTS, rounding=ROUND_HALF_UP)


def _amount(a: Assertion) -> Decimal:
    value = a.args[1]
    assert isinstance(value, Literal)
    return Decimal(str(value.value))


def compute_tax(
    abox: ABox,
    schedules: TaxScheduleSet,
    tax_year: int,
    subject: Optional[str] = None,
    precedence: Sequence[FilingStatus] = DEFAULT_PRECEDENCE,
) -> tuple[Decimal, ComputationLog]:
    """Liability pipeline: filing status, income aggregation, deduction,
    exemptions, taxable income with zero floor, progressive brackets,
    half-up rounding to cents. Every step lands in the log with the
    assertion ids or schedule cells it consumed."""
    name = resolve_subject(abox, subject)
    filing = determine_filing_status(abox, name, precedence)
    status = filing.status
    facts = _subject_assertions(abox, name)
    steps: list[LogStep] = []

    own_income = [a for p in INCOME_PREDICATES for a in facts.get(p, [])]
    own_total = sum((_amount(a) for a in own_income), Decimal(0))
    if own_income:
        steps.append(
            LogStep(
                "gross_income",
                tuple(_amount(a) for a in own_income),
                own_total,
                tuple(a.id for a in own_income),
            )
        )

    spouse_income: list[Assertion] = []
    if status in (FilingStatus.MARRIED_JOINT, FilingStatus.SURVIVING_SPOUSE):
        spouses = facts.get(P_HAS_SPOUSE, [])
        if spouses:
            spouse_arg = spouses[0].args[1]
            if isinstance(spouse_arg, Ind):
                spouse_facts = _subject_assertions(abox, spouse_arg.name)
                spouse_income = [a for p in INCOME_PREDICATES for a in spouse_facts.get(p, [])]
    spouse_total = sum((_amount(a) for a in spouse_income), Decimal(0))
    if spouse_income:
        steps.append(
            LogStep(
                "spouse_income",
                tuple(_amount(a) for a in spouse_income),
                spouse_total,
                tuple(a.id for a in spouse_income),
            )
        )

    if not own_income and not spouse_income:
        raise NoIncomeAssertionsError(f"no income assertions for subject '{name}'")

    income = own_total + spouse_total
    steps.append(LogStep("total_income", (own_total, spouse_total), income, ()))

    if facts.get(P_STANDARD_DEDUCTION):
        deduction = schedules.deduction_for(tax_year, status)
        steps.append(
            LogStep(
                "deduction",
                (),
                deduction,
                (f"standard_deduction[{tax_year}][{status.value}]",)
                + tuple(a.id for a in facts[P_STANDARD_DEDUCTION]),
            )
        )
    else:
        itemized = facts.get(P_ITEMIZED, [])
        deduction = sum((_amount(a) for a in itemized), Decimal(0))
        steps.append(
            LogStep("deduction", tuple(_amount(a) for a in itemized), deduction, tuple(a.id for a in itemized))
        )

    per_exemption = schedules.exemption_for(tax_year)
    dependents: list[str] = []
    dep_ids: list[str] = []
    for a in facts.get(P_CLAIMS_DEPENDENT, []):
        obj = a.args[1]
        if isinstance(obj, Ind) and obj.name not in dependents:
            dependents.append(obj.name)
            dep_ids.append(a.id)
    exemption_total = per_exemption * (1 + len(dependents))
    steps.append(
        LogStep(
            "exemption",
            (per_exemption,),
            exemption_total,
            (f"exemption[{tax_year}]",) + tuple(dep_ids),
        )
    )

    taxable = income - deduction - exemption_total
    if taxable < 0:
        taxable = Decimal(0)
    steps.append(LogStep("taxable_income", (income, deduction, exemption_total), taxable, ()))

    table = schedules.bracket_table(tax_year, status)
    liability = apply_brackets(taxable, table)
    steps.append(
        LogStep(
            "total_tax",
            (taxable,),
            liability,
            (f"brackets[{tax_year}][{status.value}]",),
        )
    )
    return liability, ComputationLog(filing, steps)
