"""Shared fixtures: packaged reference schema, schedules, datasets, and the
hand-built worked-example ABox."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import pytest

from solar import serialize
from solar.harness import load_dataset
from solar.interpreter import decode_schedules
from solar.ontology import ABox, Assertion, Ind, Individual, Literal, Source


def data_path(*parts: str) -> Path:
    return Path(str(resources.files("solar").joinpath("data"))).joinpath(*parts)


@pytest.fixture(scope="session")
def reference_tbox():
    return serialize.decode_tbox(json.loads(data_path("reference_tbox.json").read_text()))


@pytest.fixture(scope="session")
def schedules():
    return decode_schedules(json.loads(data_path("schedules.json").read_text()))


@pytest.fixture(scope="session")
def golden_cases():
    return load_dataset(data_path("cases", "golden"))


@pytest.fixture(scope="session")
def curated_cases():
    return load_dataset(data_path("cases", "curated"))


def build_worked_example_abox(tbox_id: str = "us-individual-income-tax") -> ABox:
    """The worked example's five assertions over Alice, Bob, and Charlie."""
    return ABox.of(
        tbox_id,
        [
            Individual("Alice", "Taxpayer"),
            Individual("Bob", "Taxpayer"),
            Individual("Charlie", "Dependent"),
        ],
        [
            Assertion("isMarriedIndividual", (Ind("Alice"),), Source.EXTRACTED),
            Assertion("hasDeceasedSpouse", (Ind("Alice"), Ind("Bob")), Source.EXTRACTED),
            Assertion("claimsDependent", (Ind("Alice"), Ind("Charlie")), Source.EXTRACTED),
            Assertion("maintainsHouseholdForDependent", (Ind("Alice"), Ind("Charlie")), Source.EXTRACTED),
            Assertion(
                "hasAdjustedGrossIncomeAmount",
                (Ind("Alice"), Literal.decimal("236422.0")),
                Source.EXTRACTED,
            ),
        ],
    )


@pytest.fixture()
def worked_example_abox():
    return build_worked_example_abox()
