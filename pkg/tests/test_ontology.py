"""TBox/ABox validation, typing, and merge semantics."""

from __future__ import annotations

from decimal import Decimal

import pytest

from solar.ontology import (
    ABox,
    Assertion,
    ClassDef,
    ContractScope,
    Datatype,
    Ind,
    Individual,
    Literal,
    MergeTypeError,
    PropertyDef,
    PropertyKind,
    Source,
    TBox,
    UsageContract,
    merge,
    validate_abox,
    validate_tbox,
)
from solar.rules import parse_rule

from conftest import build_worked_example_abox


def small_tbox(rules=(), contracts=()) -> TBox:
    return TBox(
        id="t",
        version=1,
        classes=(ClassDef("Taxpayer"), ClassDef("Dependent")),
        properties=(
            PropertyDef("isSurvivingSpouse", PropertyKind.UNARY, "Taxpayer"),
            PropertyDef("isMarriedIndividual", PropertyKind.UNARY, "Taxpayer"),
            PropertyDef("filesJointReturn", PropertyKind.UNARY, "Taxpayer"),
            PropertyDef("hasSpouse", PropertyKind.OBJECT, "Taxpayer", object_class="Taxpayer"),
            PropertyDef("hasDeceasedSpouse", PropertyKind.OBJECT, "Taxpayer", object_class="Taxpayer"),
            PropertyDef(
                "maintainsHouseholdForDependent", PropertyKind.OBJECT, "Taxpayer", object_class="Dependent"
            ),
            PropertyDef("hasGrossIncomeAmount", PropertyKind.DATATYPE, "Taxpayer", datatype=Datatype.DECIMAL),
            PropertyDef("hasAgeYears", PropertyKind.DATATYPE, "Taxpayer", datatype=Datatype.INTEGER),
        ),
        rules=tuple(rules),
        usage_contracts=tuple(contracts),
    )


class TestValidateTBox:
    def test_empty_tbox_is_valid_with_no_findings(self):
        report = validate_tbox(TBox("empty", 1, (), (), (), ()))
        assert report.is_valid
        assert report.findings == ()

    def test_surviving_spouse_rule_is_valid(self):
        rule = parse_rule(
            "isSurvivingSpouse(X) <- hasDeceasedSpouse(X, Y) & maintainsHouseholdForDependent(X, Z)."
        )
        report = validate_tbox(small_tbox(rules=[rule]))
        assert report.is_valid

    def test_head_variable_missing_from_body_is_unsafe(self):
        rule = parse_rule("isSurvivingSpouse(X) <- isMarriedIndividual(Y).")
        report = validate_tbox(small_tbox(rules=[rule]))
        assert not report.is_valid
        assert report.by_code("UNSAFE_RULE")

    def test_negated_variable_must_be_positively_bound(self):
        rule = parse_rule("isSurvivingSpouse(X) <- isMarriedIndividual(X) & !hasSpouse(X, Y).")
        report = validate_tbox(small_tbox(rules=[rule]))
        assert report.by_code("UNSAFE_RULE")

    def test_duplicate_class_name(self):
        tbox = TBox("t", 1, (ClassDef("A"), ClassDef("A")), (), (), ())
        assert validate_tbox(tbox).by_code("DUPLICATE_NAME")

    def test_undeclared_parent_class(self):
        tbox = TBox("t", 1, (ClassDef("A", parent="Ghost"),), (), (), ())
        assert validate_tbox(tbox).by_code("UNDECLARED_CLASS")

    def test_class_inheritance_cycle(self):
        tbox = TBox("t", 1, (ClassDef("A", parent="B"), ClassDef("B", parent="A")), (), (), ())
        assert validate_tbox(tbox).by_code("CLASS_CYCLE")

    def test_object_property_requires_object_class(self):
        tbox = TBox(
            "t", 1, (ClassDef("A"),), (PropertyDef("rel", PropertyKind.OBJECT, "A"),), (), ()
        )
        assert validate_tbox(tbox).by_code("PROPERTY_FIELDS")

    def test_unary_property_must_not_carry_datatype(self):
        tbox = TBox(
            "t",
            1,
            (ClassDef("A"),),
            (PropertyDef("flag", PropertyKind.UNARY, "A", datatype=Datatype.BOOLEAN),),
            (),
            (),
        )
        assert validate_tbox(tbox).by_code("PROPERTY_FIELDS")

    def test_rule_over_undeclared_predicate(self):
        rule = parse_rule("isSurvivingSpouse(X) <- wearsHats(X).")
        report = validate_tbox(small_tbox(rules=[rule]))
        assert report.by_code("UNDECLARED_PREDICATE")

    def test_non_stratifiable_rule_set_flagged(self):
        rules = [
            parse_rule("isMarriedIndividual(X) <- isSurvivingSpouse(X) & !filesJointReturn(X)."),
            parse_rule("filesJointReturn(X) <- isMarriedIndividual(X)."),
        ]
        report = validate_tbox(small_tbox(rules=rules))
        assert report.by_code("NOT_STRATIFIABLE")

    def test_usage_contract_over_undeclared_predicate(self):
        contract = UsageContract("filesJointReturn", ("hasUnicorn",))
        report = validate_tbox(small_tbox(contracts=[contract]))
        assert report.by_code("CONTRACT_PREDICATE")

    def test_reference_tbox_is_valid(self, reference_tbox):
        assert validate_tbox(reference_tbox).is_valid


class TestValidateABox:
    def test_worked_example_abox_is_valid(self, reference_tbox, worked_example_abox):
        report = validate_abox(worked_example_abox, reference_tbox)
        assert report.is_valid

    def test_object_property_given_a_literal_is_arg_kind_mismatch(self):
        tbox = small_tbox()
        abox = ABox.of(
            "t",
            [Individual("Alice", "Taxpayer")],
            [Assertion("hasSpouse", (Ind("Alice"), Literal.decimal("5.0")))],
        )
        report = validate_abox(abox, tbox)
        assert report.by_code("ARG_KIND_MISMATCH")

    def test_joint_return_without_spouse_link_warns_usage_contract(self):
        contract = UsageContract(
            "filesJointReturn", ("hasSpouse",), ContractScope.SAME_SUBJECT, "joint return needs hasSpouse"
        )
        tbox = small_tbox(contracts=[contract])
        abox = ABox.of(
            "t",
            [Individual("Alice", "Taxpayer")],
            [
                Assertion("filesJointReturn", (Ind("Alice"),)),
                Assertion("isMarriedIndividual", (Ind("Alice"),)),
            ],
        )
        report = validate_abox(abox, tbox)
        assert report.is_valid  # warnings only
        warnings = report.by_code("USAGE_CONTRACT")
        assert warnings and "hasSpouse" in warnings[0].message

    def test_contract_satisfied_when_link_present(self):
        contract = UsageContract("filesJointReturn", ("hasSpouse",))
        tbox = small_tbox(contracts=[contract])
        abox = ABox.of(
            "t",
            [Individual("Alice", "Taxpayer"), Individual("Bob", "Taxpayer")],
            [
                Assertion("filesJointReturn", (Ind("Alice"),)),
                Assertion("hasSpouse", (Ind("Alice"), Ind("Bob"))),
            ],
        )
        assert not validate_abox(abox, tbox).by_code("USAGE_CONTRACT")

    def test_undeclared_predicate_is_an_error_not_ignored(self):
        abox = ABox.of("t", [Individual("Alice", "Taxpayer")], [Assertion("hasHat", (Ind("Alice"),))])
        report = validate_abox(abox, small_tbox())
        assert report.by_code("UNDECLARED_PREDICATE")
        assert not report.is_valid

    def test_arity_mismatch(self):
        abox = ABox.of(
            "t",
            [Individual("Alice", "Taxpayer")],
            [Assertion("isMarriedIndividual", (Ind("Alice"), Ind("Alice")))],
        )
        assert validate_abox(abox, small_tbox()).by_code("ARITY_MISMATCH")

    def test_datatype_mismatch(self):
        abox = ABox.of(
            "t",
            [Individual("Alice", "Taxpayer")],
            [Assertion("hasGrossIncomeAmount", (Ind("Alice"), Literal.integer(5)))],
        )
        assert validate_abox(abox, small_tbox()).by_code("DATATYPE_MISMATCH")

    def test_undeclared_individual(self):
        abox = ABox.of("t", [], [Assertion("isMarriedIndividual", (Ind("Ghost"),))])
        assert validate_abox(abox, small_tbox()).by_code("UNDECLARED_INDIVIDUAL")

    def test_wrong_class_for_object_position(self):
        abox = ABox.of(
            "t",
            [Individual("Alice", "Taxpayer"), Individual("Bob", "Taxpayer")],
            [Assertion("maintainsHouseholdForDependent", (Ind("Alice"), Ind("Bob")))],
        )
        assert validate_abox(abox, small_tbox()).by_code("CLASS_MISMATCH")

    def test_subclass_satisfies_superclass_position(self):
        tbox = TBox(
            "t",
            1,
            (ClassDef("Person"), ClassDef("Taxpayer", parent="Person")),
            (PropertyDef("knows", PropertyKind.OBJECT, "Person", object_class="Person"),),
            (),
            (),
        )
        abox = ABox.of(
            "t",
            [Individual("Alice", "Taxpayer"), Individual("Bob", "Person")],
            [Assertion("knows", (Ind("Alice"), Ind("Bob")))],
        )
        assert validate_abox(abox, tbox).is_valid

    def test_inferred_confidence_must_be_one(self):
        abox = ABox.of(
            "t",
            [Individual("Alice", "Taxpayer")],
            [Assertion("isMarriedIndividual", (Ind("Alice"),), Source.INFERRED, confidence=0.5)],
        )
        assert validate_abox(abox, small_tbox()).by_code("CONFIDENCE_INVALID")


class TestMerge:
    def test_merge_empty_is_identity(self, reference_tbox, worked_example_abox):
        merged = merge(worked_example_abox, [], reference_tbox)
        assert merged == worked_example_abox

    def test_merge_inferred_surviving_spouse_yields_six_assertions(self, reference_tbox, worked_example_abox):
        extra = Assertion("isSurvivingSpouse", (Ind("Alice"),), Source.INFERRED)
        merged = merge(worked_example_abox, [extra], reference_tbox)
        assert len(merged.assertions) == 6
        assert any(a.predicate == "isSurvivingSpouse" for a in merged.assertions)

    def test_merge_duplicates_keep_original_provenance(self, reference_tbox, worked_example_abox):
        retagged = [
            Assertion(a.predicate, a.args, Source.INFERRED, 1.0, "rederived")
            for a in worked_example_abox.assertions
        ]
        merged = merge(worked_example_abox, retagged, reference_tbox)
        assert merged == worked_example_abox
        assert all(a.source is Source.EXTRACTED for a in merged.assertions)

    def test_merge_rejects_ill_typed_assertions_wholesale(self, reference_tbox, worked_example_abox):
        bad = Assertion("hasSpouse", (Ind("Alice"), Literal.decimal("5.0")))
        with pytest.raises(MergeTypeError):
            merge(worked_example_abox, [bad], reference_tbox)

    def test_merged_abox_stays_valid(self, reference_tbox, worked_example_abox):
        extra = Assertion("isSurvivingSpouse", (Ind("Alice"),), Source.INFERRED)
        merged = merge(worked_example_abox, [extra], reference_tbox)
        assert validate_abox(merged, reference_tbox).is_valid


class TestLiteralsAndIdentity:
    def test_decimal_is_exact_not_binary_float(self):
        lit = Literal.decimal("236422.0")
        assert lit.value == Decimal("236422.0")
        assert lit.to_text() == "236422.0"
        assert Literal.from_text(lit.to_text(), Datatype.DECIMAL) == lit

    def test_date_must_be_a_real_calendar_day(self):
        with pytest.raises(ValueError):
            Literal.date("2019-02-30")

    def test_assertions_with_equal_predicate_and_args_share_identity(self):
        a = Assertion("p", (Ind("x"),), Source.GIVEN, 1.0, "first")
        b = Assertion("p", (Ind("x"),), Source.INFERRED, 1.0, "second")
        assert a.id == b.id
        assert a.key() == b.key()

    def test_abox_construction_applies_set_semantics(self):
        abox = ABox.of(
            "t",
            [Individual("A", "Taxpayer"), Individual("A", "Taxpayer")],
            [Assertion("p", (Ind("A"),)), Assertion("p", (Ind("A"),))],
        )
        assert len(abox.individuals) == 1
        assert len(abox.assertions) == 1

    def test_worked_example_decimal_survives(self, worked_example_abox):
        income = [a for a in worked_example_abox.assertions if a.predicate == "hasAdjustedGrossIncomeAmount"]
        assert income[0].args[1].to_text() == "236422.0"
