"""Deterministic template extraction and the HTTP adapter contract."""

from __future__ import annotations

import json
import threading
from dataclasses import replace
from decimal import Decimal
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from solar.extraction import (
    AMOUNT_RE,
    MISSING_VOCABULARY,
    SCHEMA_VIOLATION,
    BackendUnavailableError,
    Candidates,
    DeterministicExtractor,
    EmptyNarrativeError,
    HttpExtractor,
    extract,
    get_backend,
    make_case,
    parse_subject,
    parse_tax_year,
    vocabulary_summary,
)
from solar.ontology import ABox, Assertion, Ind, Individual, Literal, Source, TBox, validate_abox
from solar.serialize import encode_abox

WORKED_EXAMPLE = (
    "Alice and Bob got married on Feb 3rd, 1998, and have a son Charlie, born April 1st, 1999. "
    "Bob died on Jan 1st, 2017. In 2019, Charlie lives at the house that Alice maintains as her "
    "principal place of abode. Alice's gross income for the year 2019 is $236,422. "
    "Alice takes the standard deduction."
)
QUESTION = "How much tax does Alice have to pay in 2019?"


def rendered(result):
    return {a.render() for a in result.abox.assertions}


class TestQuestionParsing:
    def test_tax_year_from_question(self):
        assert parse_tax_year(QUESTION) == 2019

    def test_subject_from_question(self):
        assert parse_subject(QUESTION) == "Alice"


class TestDeterministicExtraction:
    def test_worked_example_individuals_and_assertions(self, reference_tbox):
        case = make_case("ga", WORKED_EXAMPLE, QUESTION)
        result = extract(case, reference_tbox, DeterministicExtractor())
        individuals = {i.name: i.cls for i in result.abox.individuals}
        assert individuals == {"Alice": "Taxpayer", "Bob": "Taxpayer", "Charlie": "Dependent"}
        facts = rendered(result)
        assert {
            "isMarriedIndividual(Alice)",
            "hasDeceasedSpouse(Alice, Bob)",
            "claimsDependent(Alice, Charlie)",
            "maintainsHouseholdForDependent(Alice, Charlie)",
            "hasGrossIncomeAmount(Alice, 236422.00)",
        } <= facts
        assert not result.unmapped_spans

    def test_standard_deduction_election(self, reference_tbox):
        case = make_case("x", "Alice takes the standard deduction.", QUESTION)
        result = extract(case, reference_tbox, DeterministicExtractor())
        assert "takesStandardDeduction(Alice)" in rendered(result)

    def test_paid_in_year_template(self, reference_tbox):
        case = make_case("x", "In 2010, Alice was paid $33,408.", "How much tax does Alice have to pay in 2010?")
        result = extract(case, reference_tbox, DeterministicExtractor())
        assert "hasGrossIncomeAmount(Alice, 33408.00)" in rendered(result)

    def test_every_assertion_carries_confidence_and_explanation(self, reference_tbox):
        case = make_case("ga", WORKED_EXAMPLE, QUESTION)
        result = extract(case, reference_tbox, DeterministicExtractor())
        for a in result.abox.assertions:
            assert a.confidence == 1.0
            assert a.explanation

    def test_income_explanation_cites_the_span(self, reference_tbox):
        case = make_case("ga", WORKED_EXAMPLE, QUESTION)
        result = extract(case, reference_tbox, DeterministicExtractor())
        income = next(a for a in result.abox.assertions if a.predicate == "hasGrossIncomeAmount")
        assert "$236,422" in income.explanation

    def test_pronoun_resolution_for_post_release_earnings(self, reference_tbox):
        narrative = (
            "Alice was paid $1200 in 2019 for services performed in jail until May 5th, "
            "after which she earned $5320. Alice is not married."
        )
        case = make_case("gb", narrative, QUESTION)
        result = extract(case, reference_tbox, DeterministicExtractor())
        facts = rendered(result)
        assert "hasGrossIncomeAmount(Alice, 1200.00)" in facts
        assert "hasGrossIncomeAmount(Alice, 5320.00)" in facts
        assert "isUnmarriedIndividual(Alice)" in facts

    def test_missing_itemized_vocabulary_reported_never_dropped(self, reference_tbox):
        stripped = replace(
            reference_tbox,
            properties=tuple(p for p in reference_tbox.properties if p.name != "hasItemizedDeductionAmount"),
        )
        narrative = (
            "In 2010, Alice was paid $33,408. Alice is not married. "
            "Alice is allowed itemized deductions of $680, $2,102, $1,993 and $4,807."
        )
        case = make_case("c06", narrative, "How much tax does Alice have to pay in 2010?")
        result = extract(case, stripped, DeterministicExtractor())
        facts = rendered(result)
        assert "hasGrossIncomeAmount(Alice, 33408.00)" in facts
        assert "isUnmarriedIndividual(Alice)" in facts
        vocab_spans = [s for s in result.unmapped_spans if s.reason == MISSING_VOCABULARY]
        assert len(vocab_spans) == 4
        spanned = " ".join(s.text for s in vocab_spans)
        for token in ("$680", "$2,102", "$1,993", "$4,807"):
            assert token in spanned

    def test_empty_narrative_is_a_precondition_violation(self, reference_tbox):
        with pytest.raises(EmptyNarrativeError):
            extract(make_case("x", "   ", QUESTION), reference_tbox, DeterministicExtractor())

    def test_spouse_links_follow_the_usage_contracts(self, reference_tbox):
        case = make_case("c02", "Dave and Erin got married on June 1st, 2005.", "How much tax does Dave have to pay in 2019?")
        with_contract = extract(case, reference_tbox, DeterministicExtractor())
        assert "hasSpouse(Dave, Erin)" in rendered(with_contract)
        stripped = replace(reference_tbox, usage_contracts=())
        without_contract = extract(case, stripped, DeterministicExtractor())
        assert not any(a.predicate == "hasSpouse" for a in without_contract.abox.assertions)
        assert "isMarriedIndividual(Dave)" in rendered(without_contract)

    def test_determinism_byte_identical_output(self, reference_tbox, golden_cases, curated_cases):
        backend = DeterministicExtractor()
        for case in list(golden_cases) + list(curated_cases):
            first = extract(case.as_case_text(), reference_tbox, backend)
            second = extract(case.as_case_text(), reference_tbox, backend)
            assert json.dumps(encode_abox(first.abox)) == json.dumps(encode_abox(second.abox))
            assert first.unmapped_spans == second.unmapped_spans

    def test_conservation_of_amount_mentions(self, reference_tbox, golden_cases, curated_cases):
        backend = DeterministicExtractor()
        for case in list(golden_cases) + list(curated_cases):
            result = extract(case.as_case_text(), reference_tbox, backend)
            captured = {
                arg.value
                for a in result.abox.assertions
                for arg in a.args
                if isinstance(arg, Literal) and isinstance(arg.value, Decimal)
            }
            for span in result.unmapped_spans:
                captured.update(Decimal(m.replace(",", "")) for m in AMOUNT_RE.findall(span.text))
            for mention in AMOUNT_RE.findall(case.narrative):
                assert Decimal(mention.replace(",", "")) in {c for c in captured}, (case.id, mention)

    def test_empty_tbox_maps_nothing_but_reports_everything(self):
        empty = TBox("empty", 1, (), (), (), ())
        case = make_case("ga", WORKED_EXAMPLE, QUESTION)
        result = extract(case, empty, DeterministicExtractor())
        assert not result.abox.individuals
        assert not result.abox.assertions
        assert any(s.reason == MISSING_VOCABULARY for s in result.unmapped_spans)
        spanned = " ".join(s.text for s in result.unmapped_spans)
        assert "236,422" in spanned

    def test_extraction_output_always_validates(self, reference_tbox, golden_cases, curated_cases):
        backend = DeterministicExtractor()
        for case in list(golden_cases) + list(curated_cases):
            result = extract(case.as_case_text(), reference_tbox, backend)
            assert validate_abox(result.abox, reference_tbox).is_valid


class _FakeBackend:
    """Backend that emits one good and two ill-typed candidates."""

    name = "fake"

    def propose(self, case, tbox):
        return Candidates(
            individuals=[Individual("Alice", "Taxpayer"), Individual("Ghost", "Alien")],
            assertions=[
                Assertion("isUnmarriedIndividual", (Ind("Alice"),), Source.EXTRACTED, 0.9, "ok"),
                Assertion("hasSpouse", (Ind("Alice"), Literal.decimal("5.0")), Source.EXTRACTED, 0.9, "bad"),
                Assertion("wearsHats", (Ind("Alice"),), Source.EXTRACTED, 0.9, "unknown"),
            ],
            spans=[],
        )


class TestQuarantine:
    def test_ill_typed_candidates_are_quarantined_not_dropped(self, reference_tbox):
        case = make_case("x", "Alice is not married.", QUESTION)
        result = extract(case, reference_tbox, _FakeBackend())
        assert rendered(result) == {"isUnmarriedIndividual(Alice)"}
        reasons = [s.reason for s in result.unmapped_spans]
        assert reasons.count(SCHEMA_VIOLATION) == 3  # unknown class, bad arg, unknown predicate
        assert validate_abox(result.abox, reference_tbox).is_valid


class _Handler(BaseHTTPRequestHandler):
    responses: list = []
    requests: list = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        _Handler.requests.append(json.loads(self.rfile.read(length)))
        status, body = _Handler.responses.pop(0)
        payload = body if isinstance(body, (bytes,)) else json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):  # keep test output quiet
        pass


@pytest.fixture()
def http_server():
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _Handler.responses = []
    _Handler.requests = []
    yield f"http://127.0.0.1:{server.server_port}/extract"
    server.shutdown()
    thread.join()


ABOX_RESPONSE = {
    "individuals": {"Alice": {"type": "Taxpayer"}},
    "assertions": [
        {"predicate": "hasGrossIncomeAmount", "args": ["Alice", "33408.0"], "confidence": 0.93, "explanation": "pay"},
        {"predicate": "isUnmarriedIndividual", "args": ["Alice"], "confidence": 0.88, "explanation": "status"},
    ],
}


class TestHttpAdapter:
    def test_posts_case_and_vocabulary_and_decodes_abox(self, reference_tbox, http_server):
        _Handler.responses = [(200, ABOX_RESPONSE)]
        case = make_case("x", "In 2010, Alice was paid $33,408.", "How much tax does Alice have to pay in 2010?")
        result = extract(case, reference_tbox, HttpExtractor(http_server, backoff=0.01))
        assert "hasGrossIncomeAmount(Alice, 33408.0)" in rendered(result)
        posted = _Handler.requests[0]
        assert posted["case"]["narrative"].startswith("In 2010")
        assert any(p["name"] == "hasSpouse" for p in posted["vocabulary"]["properties"])
        assert posted["vocabulary"]["usage_contracts"]
        income = next(a for a in result.abox.assertions if a.predicate == "hasGrossIncomeAmount")
        assert income.confidence == 0.93  # external backends keep their own confidence

    def test_transient_failures_are_retried(self, reference_tbox, http_server):
        _Handler.responses = [(500, {"error": "busy"}), (200, ABOX_RESPONSE)]
        case = make_case("x", "In 2010, Alice was paid $33,408.", QUESTION)
        result = extract(case, reference_tbox, HttpExtractor(http_server, retries=3, backoff=0.01))
        assert result.abox.assertions

    def test_exhausted_retries_raise_backend_unavailable(self, reference_tbox, http_server):
        _Handler.responses = [(500, {}), (500, {}), (500, {})]
        case = make_case("x", "In 2010, Alice was paid $33,408.", QUESTION)
        with pytest.raises(BackendUnavailableError):
            extract(case, reference_tbox, HttpExtractor(http_server, retries=3, backoff=0.01))

    def test_connection_refused_raises_backend_unavailable(self, reference_tbox):
        case = make_case("x", "Alice is not married.", QUESTION)
        backend = HttpExtractor("http://127.0.0.1:9/none", retries=2, backoff=0.01, timeout=0.5)
        with pytest.raises(BackendUnavailableError):
            extract(case, reference_tbox, backend)

    def test_ill_typed_response_entries_are_quarantined(self, reference_tbox, http_server):
        bad = {
            "individuals": {"Alice": {"type": "Taxpayer"}},
            "assertions": [
                {"predicate": "wearsHats", "args": ["Alice"]},
                {"predicate": "hasGrossIncomeAmount", "args": ["Alice", "not-a-number"]},
                {"predicate": "isUnmarriedIndividual", "args": ["Alice"]},
            ],
        }
        _Handler.responses = [(200, bad)]
        case = make_case("x", "Alice is not married.", QUESTION)
        result = extract(case, reference_tbox, HttpExtractor(http_server, backoff=0.01))
        assert rendered(result) == {"isUnmarriedIndividual(Alice)"}
        assert sum(1 for s in result.unmapped_spans if s.reason == SCHEMA_VIOLATION) == 2

    def test_vocabulary_summary_shape(self, reference_tbox):
        summary = vocabulary_summary(reference_tbox)
        assert {"classes", "properties", "usage_contracts"} == set(summary)


class TestBackendRegistry:
    def test_deterministic_by_name(self):
        assert get_backend("deterministic").name == "deterministic"

    def test_http_requires_endpoint(self, monkeypatch):
        monkeypatch.delenv("SOLAR_EXTRACTOR_URL", raising=False)
        with pytest.raises(BackendUnavailableError):
            get_backend("http")

    def test_http_reads_environment(self, monkeypatch):
        monkeypatch.setenv("SOLAR_EXTRACTOR_URL", "http://example.invalid/extract")
        backend = get_backend("http")
        assert backend.url == "http://example.invalid/extract"

    def test_unknown_backend_rejected(self):
        with pytest.raises(ValueError):
            get_backend("telepathy")
