"""Canonical JSON serialization for TBox and ABox values.

Wire shape (JSON-compatible tree)::

    {
      "individuals": {"Alice": {"type": "Taxpayer"}},
      "assertions": [
        {"predicate": "hasGrossIncomeAmount", "args": ["Alice", "33408.0"],
         "source": "Extracted", "confidence": 1.0, "explanation": "..."}
      ]
    }

Assertion args are strings on the wire for both individual names and
literal values; decoding recovers the typed form from the property
declarations, which is why ``decode_abox`` needs the TBox. Decimals
serialize as strings so values like "236422.0" round-trip bit-exactly.
"""

from __future__ import annotations

import json
from typing import Any

from .errors import SolarError
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
)
from .rules import Rule, RuleParseError, parse_rule, print_rule


class DecodeError(SolarError):
    code = "DECODE_ERROR"


def encode_tbox(tbox: TBox) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "id": tbox.id,
        "version": tbox.version,
        "classes": [
            {"name": c.name, "parent": c.parent, "description": c.description}
            for c in tbox.classes
        ],
        "properties": [],
        "rules": [
            {"id": r.id, "text": print_rule(r), "description": r.description}
            for r in tbox.rules
        ],
        "usage_contracts": [
            {
                "trigger": u.trigger,
                "requires": list(u.requires),
                "scope": u.scope.value,
                "message": u.message,
            }
            for u in tbox.usage_contracts
        ],
    }
    for p in tbox.properties:
        entry: dict[str, Any] = {
            "name": p.name,
            "kind": p.kind.value,
            "subject_class": p.subject_class,
            "description": p.description,
        }
        if p.kind is PropertyKind.OBJECT:
            entry["object_class"] = p.object_class
        elif p.kind is PropertyKind.DATATYPE:
            entry["datatype"] = p.datatype.value if p.datatype else None
        doc["properties"].append(entry)
    return doc


def decode_tbox(doc: dict[str, Any]) -> TBox:
    try:
        classes = tuple(
            ClassDef(c["name"], c.get("parent"), c.get("description", ""))
            for c in doc.get("classes", [])
        )
        properties = []
        for p in doc.get("properties", []):
            kind = PropertyKind(p["kind"])
            properties.append(
                PropertyDef(
                    name=p["name"],
                    kind=kind,
                    subject_class=p["subject_class"],
                    object_class=p.get("object_class"),
                    datatype=Datatype(p["datatype"]) if p.get("datatype") else None,
                    description=p.get("description", ""),
                )
            )
        rules: list[Rule] = []
        for r in doc.get("rules", []):
            try:
                rules.append(parse_rule(r["text"], rule_id=r.get("id", ""), description=r.get("description", "")))
            except RuleParseError as exc:
                raise DecodeError(f"bad rule text {r.get('id', '')!r}: {exc.message}") from exc
        contracts = tuple(
            UsageContract(
                trigger=u["trigger"],
                requires=tuple(u.get("requires", [])),
                scope=ContractScope(u.get("scope", "SameSubject")),
                message=u.get("message", ""),
            )
            for u in doc.get("usage_contracts", [])
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise DecodeError(f"malformed TBox document: {exc}") from exc
    return TBox(
        id=doc.get("id", "tbox"),
        version=int(doc.get("version", 1)),
        classes=classes,
        properties=tuple(properties),
        rules=tuple(rules),
        usage_contracts=contracts,
    )


def encode_abox(abox: ABox) -> dict[str, Any]:
    return {
        "tbox_id": abox.tbox_id,
        "individuals": {i.name: {"type": i.cls} for i in abox.individuals},
        "assertions": [
            {
                "id": a.id,
                "predicate": a.predicate,
                "args": [arg.name if isinstance(arg, Ind) else arg.to_text() for arg in a.args],
                "source": a.source.value,
                "confidence": a.confidence,
                "explanation": a.explanation,
            }
            for a in abox.assertions
        ],
    }


def decode_abox(doc: dict[str, Any], tbox: TBox) -> ABox:
    props = tbox.property_map()
    try:
        individuals = tuple(
            Individual(name, spec["type"]) for name, spec in doc.get("individuals", {}).items()
        )
        assertions = []
        for entry in doc.get("assertions", []):
            predicate = entry["predicate"]
            raw_args = entry["args"]
            prop = props.get(predicate)
            if prop is None:
                raise DecodeError(f"assertion uses undeclared predicate '{predicate}'")
            if len(raw_args) != prop.arity:
                raise DecodeError(f"'{predicate}' expects {prop.arity} args, got {len(raw_args)}")
            args: list = [Ind(raw_args[0])]
            if prop.kind is PropertyKind.OBJECT:
                args.append(Ind(raw_args[1]))
            elif prop.kind is PropertyKind.DATATYPE:
                try:
                    args.append(Literal.from_text(raw_args[1], prop.datatype or Datatype.TEXT))
                except ValueError as exc:
                    raise DecodeError(f"bad literal for '{predicate}': {exc}") from exc
            assertions.append(
                Assertion(
                    predicate=predicate,
                    args=tuple(args),
                    source=Source(entry.get("source", "Given")),
                    confidence=float(entry.get("confidence", 1.0)),
                    explanation=entry.get("explanation", ""),
                )
            )
    except DecodeError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise DecodeError(f"malformed ABox document: {exc}") from exc
    return ABox(doc.get("tbox_id", tbox.id), individuals, tuple(assertions))


def dumps(doc: dict[str, Any]) -> str:
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def load_tbox_file(path) -> TBox:
    with open(path, encoding="utf-8") as fh:
        return decode_tbox(json.load(fh))


def load_abox_file(path, tbox: TBox) -> ABox:
    with open(path, encoding="utf-8") as fh:
        return decode_abox(json.load(fh), tbox)


def save_tbox_file(path, tbox: TBox) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(encode_tbox(tbox)))


def save_abox_file(path, abox: ABox) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(encode_abox(abox)))
