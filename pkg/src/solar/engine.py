"""Forward-chaining inference over a TBox rule set and an ABox.

Computes the least model stratum by stratum: within each stratum rules are
applied semi-naively (each round joins against the facts derived in the
previous round) until fixpoint. Negation-as-failure consults only strata
already completed, so the result is the unique stratified model. Every
derived fact carries a proof step recording the rule, the matched premise
assertions, and the variable substitution, which makes the whole run
replayable and explainable.

Evaluation is single-threaded and iterates insertion-ordered structures
only, so two runs on equal inputs produce identical output and traces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Iterator, Optional, Union

from .errors import SolarError
from .ontology import ABox, Arg, Assertion, Datatype, Ind, Literal, Source, TBox, merge
from .rules import (
    Atom,
    BodyLiteral,
    Comparison,
    Const,
    Negated,
    Positive,
    Rule,
    Term,
    Var,
    print_rule,
    stratify,
)

DEFAULT_DERIVATION_CAP = 100_000


class UnboundEvaluationError(SolarError):
    code = "UNBOUND_EVALUATION"


class UnknownAssertionError(SolarError):
    code = "UNKNOWN_ASSERTION"


class DerivationCapError(SolarError):
    code = "DERIVATION_CAP"

    def __init__(self, cap: int, inferred: list[Assertion], trace: "ProofTrace"):
        self.inferred = inferred
        self.trace = trace
        super().__init__(f"derivation cap of {cap} facts exceeded")


@dataclass(frozen=True)
class ProofStep:
    derived: str
    rule: str
    premises: tuple[str, ...]
    substitution: dict[str, Arg] = field(compare=False)


@dataclass
class ProofTrace:
    steps: list[ProofStep]
    stratum_boundaries: list[int]
    facts: dict[str, Assertion]  # id -> assertion, inputs and derived alike

    def step_for(self, assertion_id: str) -> Optional[ProofStep]:
        for step in self.steps:
            if step.derived == assertion_id:
                return step
        return None


Substitution = dict[str, Arg]


def _match_term(term: Term, value: Arg, subst: Substitution) -> Optional[Substitution]:
    if isinstance(term, Var):
        bound = subst.get(term.name)
        if bound is None:
            out = dict(subst)
            out[term.name] = value
            return out
        return subst if bound == value else None
    if isinstance(term, Const):
        return subst if isinstance(value, Ind) and value.name == term.name else None
    return subst if isinstance(value, Literal) and value == term else None


def _match_atom(atom: Atom, args: tuple[Arg, ...], subst: Substitution) -> Optional[Substitution]:
    if len(atom.terms) != len(args):
        return None
    current: Optional[Substitution] = subst
    for term, value in zip(atom.terms, args):
        current = _match_term(term, value, current)
        if current is None:
            return None
    return current


def _ground_term(term: Term, subst: Substitution) -> Arg:
    if isinstance(term, Var):
        value = subst.get(term.name)
        if value is None:
            raise UnboundEvaluationError(f"variable '{term.name}' unbound at evaluation")
        return value
    if isinstance(term, Const):
        return Ind(term.name)
    return term


_NUMERIC = (Datatype.DECIMAL, Datatype.INTEGER)


def _comparable(lhs: Literal, rhs: Literal) -> bool:
    if lhs.kind in _NUMERIC and rhs.kind in _NUMERIC:
        return True
    return lhs.kind is rhs.kind and lhs.kind in (Datatype.DATE, Datatype.TEXT)


def _as_number(lit: Literal) -> Decimal:
    return lit.value if isinstance(lit.value, Decimal) else Decimal(lit.value)


def evaluate_comparison(cmp: Comparison, subst: Substitution) -> bool:
    """Comparison semantics: == and != compare typed values (numeric kinds
    interoperate); ordering requires both sides numeric, both dates, or
    both text, and is otherwise unsatisfied."""
    lhs = _ground_term(cmp.lhs, subst)
    rhs = _ground_term(cmp.rhs, subst)
    if not isinstance(lhs, Literal) or not isinstance(rhs, Literal):
        raise UnboundEvaluationError("comparison operand is not datatype-valued")
    numeric = lhs.kind in _NUMERIC and rhs.kind in _NUMERIC
    if cmp.op in ("==", "!="):
        if numeric:
            equal = _as_number(lhs) == _as_number(rhs)
        else:
            equal = lhs == rhs
        return equal if cmp.op == "==" else not equal
    if not _comparable(lhs, rhs):
        return False
    a, b = (_as_number(lhs), _as_number(rhs)) if numeric else (lhs.value, rhs.value)
    if cmp.op == "<":
        return a < b
    if cmp.op == "<=":
        return a <= b
    if cmp.op == ">":
        return a > b
    return a >= b


def plan_body(rule: Rule) -> list[BodyLiteral]:
    """Greedy reordering: positive atoms keep their relative order; each
    negation/comparison is scheduled as soon as its variables are bound.
    Raises UnboundEvaluationError when no such schedule exists."""
    positives = [lit for lit in rule.body if isinstance(lit, Positive)]
    guards = [lit for lit in rule.body if not isinstance(lit, Positive)]
    plan: list[BodyLiteral] = []
    bound: set[str] = set()

    def flush_guards() -> None:
        progress = True
        while progress:
            progress = False
            for lit in list(guards):
                vars_needed = lit.atom.variables() if isinstance(lit, Negated) else lit.variables()
                if vars_needed <= bound:
                    plan.append(lit)
                    guards.remove(lit)
                    progress = True

    flush_guards()
    for lit in positives:
        plan.append(lit)
        bound |= lit.atom.variables()
        flush_guards()
    if guards:
        names = ", ".join(sorted(set().union(*(g.atom.variables() if isinstance(g, Negated) else g.variables() for g in guards))))
        raise UnboundEvaluationError(f"cannot schedule negation/comparison with unbound variables: {names}")
    return plan


class _FactStore:
    """Per-predicate fact lists in insertion order plus an identity index."""

    def __init__(self) -> None:
        self.by_pred: dict[str, list[tuple[tuple[Arg, ...], Assertion]]] = {}
        self.index: dict[tuple, Assertion] = {}

    def add(self, assertion: Assertion) -> bool:
        key = assertion.key()
        if key in self.index:
            return False
        self.index[key] = assertion
        self.by_pred.setdefault(assertion.predicate, []).append((assertion.args, assertion))
        return True

    def contains(self, predicate: str, args: tuple[Arg, ...]) -> bool:
        return (predicate, args) in self.index

    def facts(self, predicate: str) -> list[tuple[tuple[Arg, ...], Assertion]]:
        return self.by_pred.get(predicate, [])


def _solve(
    plan: list[BodyLiteral],
    idx: int,
    subst: Substitution,
    premises: list[Assertion],
    store: _FactStore,
    delta_at: Optional[int],
    delta: dict[str, list[tuple[tuple[Arg, ...], Assertion]]],
    positive_seen: int,
) -> Iterator[tuple[Substitution, list[Assertion]]]:
    if idx == len(plan):
        yield subst, list(premises)
        return
    lit = plan[idx]
    if isinstance(lit, Positive):
        if delta_at is not None and positive_seen == delta_at:
            candidates = delta.get(lit.atom.predicate, [])
        else:
            candidates = store.facts(lit.atom.predicate)
        for args, fact in candidates:
            new_subst = _match_atom(lit.atom, args, subst)
            if new_subst is None:
                continue
            premises.append(fact)
            yield from _solve(plan, idx + 1, new_subst, premises, store, delta_at, delta, positive_seen + 1)
            premises.pop()
    elif isinstance(lit, Negated):
        args = tuple(_ground_term(t, subst) for t in lit.atom.terms)
        if not store.contains(lit.atom.predicate, args):
            yield from _solve(plan, idx + 1, subst, premises, store, delta_at, delta, positive_seen)
    else:
        if evaluate_comparison(lit, subst):
            yield from _solve(plan, idx + 1, subst, premises, store, delta_at, delta, positive_seen)


def infer(
    tbox: TBox,
    abox: ABox,
    max_derived: int = DEFAULT_DERIVATION_CAP,
) -> tuple[list[Assertion], ProofTrace]:
    """Derive all entailed assertions with proof steps.

    Returns the inferred assertions (disjoint from the input facts) in
    lexicographic order by predicate then args, plus the proof trace in
    derivation order. Raises NotStratifiableError for bad rule sets and
    DerivationCapError (carrying partial results) past ``max_derived``.
    """
    strata = stratify(tbox.rules)
    stratum_of: dict[str, int] = {}
    for level, preds in enumerate(strata):
        for pred in preds:
            stratum_of[pred] = level

    store = _FactStore()
    trace = ProofTrace(steps=[], stratum_boundaries=[], facts={})
    for a in abox.assertions:
        store.add(a)
        trace.facts[a.id] = a

    plans = {rule.id: plan_body(rule) for rule in tbox.rules}
    inferred: list[Assertion] = []

    def derive(rule: Rule, subst: Substitution, premises: list[Assertion]) -> Optional[Assertion]:
        args = tuple(_ground_term(t, subst) for t in rule.head.terms)
        if store.contains(rule.head.predicate, args):
            return None
        assertion = Assertion(
            predicate=rule.head.predicate,
            args=args,
            source=Source.INFERRED,
            confidence=1.0,
            explanation=rule.description or print_rule(rule),
        )
        store.add(assertion)
        trace.facts[assertion.id] = assertion
        trace.steps.append(
            ProofStep(
                derived=assertion.id,
                rule=rule.id,
                premises=tuple(p.id for p in premises),
                substitution={k: v for k, v in sorted(subst.items())},
            )
        )
        return assertion

    for level in range(len(strata)):
        stratum_rules = [r for r in tbox.rules if stratum_of.get(r.head.predicate, 0) == level]
        # first round is naive over everything visible so far
        delta_facts: list[Assertion] = []
        for rule in stratum_rules:
            for subst, premises in _solve(plans[rule.id], 0, {}, [], store, None, {}, 0):
                new = derive(rule, subst, premises)
                if new is not None:
                    delta_facts.append(new)
                    inferred.append(new)
                    if len(inferred) > max_derived:
                        raise DerivationCapError(max_derived, inferred, trace)
        # subsequent rounds join against the previous round's delta only
        while delta_facts:
            delta: dict[str, list[tuple[tuple[Arg, ...], Assertion]]] = {}
            for a in delta_facts:
                delta.setdefault(a.predicate, []).append((a.args, a))
            delta_facts = []
            for rule in stratum_rules:
                plan = plans[rule.id]
                n_pos = sum(1 for lit in plan if isinstance(lit, Positive))
                for pos_idx in range(n_pos):
                    for subst, premises in _solve(plan, 0, {}, [], store, pos_idx, delta, 0):
                        new = derive(rule, subst, premises)
                        if new is not None:
                            delta_facts.append(new)
                            inferred.append(new)
                            if len(inferred) > max_derived:
                                raise DerivationCapError(max_derived, inferred, trace)
        trace.stratum_boundaries.append(len(trace.steps))

    inferred.sort(key=lambda a: (a.predicate, tuple(x.name if isinstance(x, Ind) else x.to_text() for x in a.args)))
    return inferred, trace


def enrich(tbox: TBox, abox: ABox, max_derived: int = DEFAULT_DERIVATION_CAP) -> tuple[ABox, list[Assertion], ProofTrace]:
    """Convenience: infer and merge the consequences back into the ABox."""
    inferred, trace = infer(tbox, abox, max_derived)
    return merge(abox, inferred, tbox), inferred, trace


# ---------------------------------------------------------------------------
# explanations


@dataclass
class ExplanationNode:
    assertion: Assertion
    rule: Optional[str]
    rule_description: str
    children: list["ExplanationNode"]


def explain(assertion_id: str, trace: ProofTrace, tbox: Optional[TBox] = None) -> ExplanationNode:
    """Explanation tree for an inferred assertion: children are the premise
    facts, leaves are Given/Extracted inputs."""
    step = trace.step_for(assertion_id)
    if step is None:
        raise UnknownAssertionError(f"no derivation recorded for assertion '{assertion_id}'")
    rule_desc = ""
    if tbox is not None:
        for rule in tbox.rules:
            if rule.id == step.rule:
                rule_desc = rule.description or print_rule(rule)
                break

    def build(aid: str) -> ExplanationNode:
        assertion = trace.facts[aid]
        inner = trace.step_for(aid)
        if inner is None or assertion.source is not Source.INFERRED:
            return ExplanationNode(assertion, None, "", [])
        desc = ""
        if tbox is not None:
            for rule in tbox.rules:
                if rule.id == inner.rule:
                    desc = rule.description or print_rule(rule)
                    break
        return ExplanationNode(assertion, inner.rule, desc, [build(p) for p in inner.premises])

    root = build(assertion_id)
    root.rule_description = root.rule_description or rule_desc
    return root


def render_explanation(node: ExplanationNode, indent: int = 0) -> str:
    pad = "  " * indent
    label = node.assertion.render()
    if node.rule:
        detail = f"  [rule {node.rule}" + (f": {node.rule_description}" if node.rule_description else "") + "]"
    else:
        src = node.assertion.source.value.lower()
        detail = f"  [{src}" + (f": {node.assertion.explanation}" if node.assertion.explanation else "") + "]"
    lines = [pad + label + detail]
    for child in node.children:
        lines.append(render_explanation(child, indent + 1))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# trace export


def export_trace(trace: ProofTrace) -> dict[str, Any]:
    """Structured form mirroring the proof-step fields, for ``--trace``."""
    def render_value(v: Arg) -> str:
        return v.name if isinstance(v, Ind) else v.to_text()

    return {
        "steps": [
            {
                "derived": s.derived,
                "rule": s.rule,
                "premises": list(s.premises),
                "substitution": {k: render_value(v) for k, v in s.substitution.items()},
            }
            for s in trace.steps
        ],
        "stratum_boundaries": list(trace.stratum_boundaries),
        "facts": {
            aid: {"predicate": a.predicate, "args": [render_value(x) for x in a.args], "source": a.source.value}
            for aid, a in trace.facts.items()
        },
    }
