"""Statutory reasoning engine.

Statutes become formal schemas (TBox: classes, properties, first-order
rules), case facts become typed assertions (ABox), forward inference
derives entailed facts with proof traces, and an executable interpreter
turns the enriched facts plus schedule data into a tax liability with a
step-by-step computation log.
"""

from .engine import DerivationCapError, ProofStep, ProofTrace, enrich, explain, infer, render_explanation
from .errors import SolarError
from .extraction import (
    CaseText,
    DeterministicExtractor,
    ExtractionResult,
    HttpExtractor,
    extract,
    get_backend,
)
from .harness import EvalCase, EvalReport, load_dataset, run_eval, within_tolerance
from .interpreter import (
    FilingStatus,
    TaxScheduleSet,
    apply_brackets,
    compute_tax,
    determine_filing_status,
    load_schedules,
)
from .ontology import (
    ABox,
    Assertion,
    ClassDef,
    ContractScope,
    Datatype,
    Ind,
    Individual,
    Literal,
    PropertyDef,
    PropertyKind,
    Source,
    TBox,
    UsageContract,
    ValidationReport,
    merge,
    validate_abox,
    validate_tbox,
)
from .pipeline import (
    Classification,
    PipelineStatus,
    apply_knowledge,
    classify_failure,
    integrate,
    refine,
    run_pipeline,
)
from .rules import NotStratifiableError, Rule, RuleParseError, parse_rule, parse_rules, print_rule, stratify
from .serialize import decode_abox, decode_tbox, encode_abox, encode_tbox

__version__ = "0.1.0"

__all__ = [
    "ABox",
    "Assertion",
    "CaseText",
    "ClassDef",
    "Classification",
    "ContractScope",
    "Datatype",
    "DerivationCapError",
    "DeterministicExtractor",
    "EvalCase",
    "EvalReport",
    "ExtractionResult",
    "FilingStatus",
    "HttpExtractor",
    "Ind",
    "Individual",
    "Literal",
    "NotStratifiableError",
    "PipelineStatus",
    "ProofStep",
    "ProofTrace",
    "PropertyDef",
    "PropertyKind",
    "Rule",
    "RuleParseError",
    "SolarError",
    "Source",
    "TBox",
    "TaxScheduleSet",
    "UsageContract",
    "ValidationReport",
    "apply_brackets",
    "apply_knowledge",
    "classify_failure",
    "compute_tax",
    "decode_abox",
    "decode_tbox",
    "determine_filing_status",
    "encode_abox",
    "encode_tbox",
    "enrich",
    "explain",
    "extract",
    "get_backend",
    "infer",
    "integrate",
    "load_dataset",
    "load_schedules",
    "merge",
    "parse_rule",
    "parse_rules",
    "print_rule",
    "refine",
    "render_explanation",
    "run_eval",
    "run_pipeline",
    "stratify",
    "validate_abox",
    "validate_tbox",
    "within_tolerance",
]
