"""First-order rule language: text format, parser, printer, stratification.

Concrete syntax, one rule per statement::

    isSurvivingSpouse(X) <- hasDeceasedSpouse(X, Y) & maintainsHouseholdForDependent(X, Z).
    eligible(X) <- hasAgeYears(X, A) & A >= 65.
    single(X) <- taxpayer(X) & !isMarriedIndividual(X).

Variables are uppercase-initial identifiers, individual constants are
lowercase-initial, ``!`` negates an atom, comparisons are infix over
datatype values (numbers, ISO dates, quoted text, true/false). ``#``
starts a line comment. Rules are range-restricted Horn clauses; negation
is closed-world and must be stratifiable.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import networkx as nx

from .errors import SolarError
from .ontology import Datatype, Finding, Literal, PropertyDef, PropertyKind, Severity


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


Term = Union[Var, Const, Literal]

COMPARISON_OPS = ("==", "!=", "<=", ">=", "<", ">")


@dataclass(frozen=True)
class Atom:
    predicate: str
    terms: tuple[Term, ...]

    def variables(self) -> set[str]:
        return {t.name for t in self.terms if isinstance(t, Var)}


@dataclass(frozen=True)
class Positive:
    atom: Atom


@dataclass(frozen=True)
class Negated:
    atom: Atom


@dataclass(frozen=True)
class Comparison:
    lhs: Term
    op: str
    rhs: Term

    def variables(self) -> set[str]:
        return {t.name for t in (self.lhs, self.rhs) if isinstance(t, Var)}


BodyLiteral = Union[Positive, Negated, Comparison]


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple[BodyLiteral, ...]
    id: str = field(default="", compare=False)
    description: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.id:
            digest = hashlib.sha1(print_rule(self).encode()).hexdigest()
            object.__setattr__(self, "id", f"r-{digest[:8]}")

    def positive_atoms(self) -> list[Atom]:
        return [lit.atom for lit in self.body if isinstance(lit, Positive)]

    def negated_atoms(self) -> list[Atom]:
        return [lit.atom for lit in self.body if isinstance(lit, Negated)]


# ---------------------------------------------------------------------------
# printing


def print_term(term: Term) -> str:
    if isinstance(term, (Var, Const)):
        return term.name
    if term.kind is Datatype.TEXT:
        escaped = term.value.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
        return f'"{escaped}"'
    return term.to_text()


def print_atom(atom: Atom) -> str:
    return f"{atom.predicate}({', '.join(print_term(t) for t in atom.terms)})"


def print_literal(lit: BodyLiteral) -> str:
    if isinstance(lit, Positive):
        return print_atom(lit.atom)
    if isinstance(lit, Negated):
        return f"!{print_atom(lit.atom)}"
    return f"{print_term(lit.lhs)} {lit.op} {print_term(lit.rhs)}"


def print_rule(rule: Rule) -> str:
    """Canonical single-line form; ``parse_rule`` inverts it exactly."""
    body = " & ".join(print_literal(lit) for lit in rule.body)
    return f"{print_atom(rule.head)} <- {body}."


# ---------------------------------------------------------------------------
# tokenizer

class RuleParseError(SolarError):
    code = "SYNTAX_ERROR"

    def __init__(self, message: str, line: int, column: int, expected: Iterable[str] = ()):
        self.line = line
        self.column = column
        self.expected = frozenset(expected)
        suffix = f" (expected {', '.join(sorted(self.expected))})" if self.expected else ""
        super().__init__(f"{line}:{column}: {message}{suffix}")


class EmptyBodyError(RuleParseError):
    code = "EMPTY_BODY"


_TOKEN_RE = re.compile(
    r"""
    (?P<WS>[^\S\n]+)
  | (?P<COMMENT>\#[^\n]*)
  | (?P<NL>\n)
  | (?P<DATE>\d{4}-\d{2}-\d{2})
  | (?P<NUMBER>-?\d+(?:\.\d+)?)
  | (?P<IDENT>[A-Za-z][A-Za-z0-9_]*)
  | (?P<STRING>"(?:\\.|[^"\\\n])*")
  | (?P<ARROW><-)
  | (?P<OP>==|!=|<=|>=|<|>)
  | (?P<AMP>&)
  | (?P<BANG>!)
  | (?P<LPAREN>\()
  | (?P<RPAREN>\))
  | (?P<COMMA>,)
  | (?P<DOT>\.)
""",
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise RuleParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup or ""
        value = m.group()
        if kind == "NL":
            line += 1
            col = 1
        elif kind in ("WS", "COMMENT"):
            col += len(value)
        else:
            tokens.append(_Token(kind, value, line, col))
            col += len(value)
        pos = m.end()
    tokens.append(_Token("EOF", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def expect(self, kind: str, expected: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            raise RuleParseError(
                f"unexpected {tok.kind.lower()} {tok.text!r}", tok.line, tok.column, {expected}
            )
        return self.advance()

    def parse_term(self) -> Term:
        tok = self.peek()
        if tok.kind == "IDENT":
            self.advance()
            if tok.text == "true":
                return Literal.boolean(True)
            if tok.text == "false":
                return Literal.boolean(False)
            if tok.text[0].isupper():
                return Var(tok.text)
            return Const(tok.text)
        if tok.kind == "NUMBER":
            self.advance()
            if "." in tok.text:
                return Literal.decimal(tok.text)
            return Literal.integer(tok.text)
        if tok.kind == "DATE":
            self.advance()
            try:
                return Literal.date(tok.text)
            except ValueError:
                raise RuleParseError(f"invalid calendar date {tok.text!r}", tok.line, tok.column)
        if tok.kind == "STRING":
            self.advance()
            raw = tok.text[1:-1]
            value = re.sub(r"\\(.)", lambda m: {"n": "\n"}.get(m.group(1), m.group(1)), raw)
            return Literal.text(value)
        raise RuleParseError(
            f"unexpected {tok.kind.lower()} {tok.text!r}", tok.line, tok.column, {"term"}
        )

    def parse_atom(self) -> Atom:
        name = self.expect("IDENT", "predicate")
        self.expect("LPAREN", "'('")
        terms = [self.parse_term()]
        while self.peek().kind == "COMMA":
            self.advance()
            terms.append(self.parse_term())
        self.expect("RPAREN", "')'")
        return Atom(name.text, tuple(terms))

    def parse_body_literal(self) -> BodyLiteral:
        tok = self.peek()
        if tok.kind == "BANG":
            self.advance()
            return Negated(self.parse_atom())
        if tok.kind == "IDENT" and self.tokens[self.pos + 1].kind == "LPAREN":
            return Positive(self.parse_atom())
        lhs = self.parse_term()
        op_tok = self.peek()
        if op_tok.kind != "OP":
            raise RuleParseError(
                f"unexpected {op_tok.kind.lower()} {op_tok.text!r}",
                op_tok.line,
                op_tok.column,
                {"comparison operator"},
            )
        self.advance()
        rhs = self.parse_term()
        return Comparison(lhs, op_tok.text, rhs)

    def parse_rule_statement(self, rule_id: str = "", description: str = "") -> Rule:
        head = self.parse_atom()
        self.expect("ARROW", "'<-'")
        if self.peek().kind == "DOT":
            tok = self.peek()
            raise EmptyBodyError("rule body is empty", tok.line, tok.column, {"body literal"})
        body = [self.parse_body_literal()]
        while self.peek().kind == "AMP":
            self.advance()
            body.append(self.parse_body_literal())
        self.expect("DOT", "'.'")
        return Rule(head, tuple(body), id=rule_id, description=description)


def parse_rule(text: str, rule_id: str = "", description: str = "") -> Rule:
    """Parse a single rule statement; reject trailing input."""
    parser = _Parser(_tokenize(text))
    rule = parser.parse_rule_statement(rule_id, description)
    trailing = parser.peek()
    if trailing.kind != "EOF":
        raise RuleParseError(
            f"trailing input {trailing.text!r}", trailing.line, trailing.column, {"end of input"}
        )
    return rule


def parse_rules(text: str) -> list[Rule]:
    """Parse a rule file: one statement per rule, ``#`` line comments."""
    parser = _Parser(_tokenize(text))
    rules: list[Rule] = []
    while parser.peek().kind != "EOF":
        rules.append(parser.parse_rule_statement())
    return rules


# ---------------------------------------------------------------------------
# well-formedness against a TBox


def check_rule(rule: Rule, props: dict[str, PropertyDef]) -> list[Finding]:
    """Safety and typing findings for one rule.

    Safety: every head variable and every variable inside a negation or
    comparison must occur in a positive body atom. Typing: predicates
    declared, arities match, individual vs datatype positions respected,
    comparison operands datatype-valued.
    """
    findings: list[Finding] = []
    text = print_rule(rule)

    def err(code: str, message: str) -> None:
        findings.append(Finding(Severity.ERROR, code, message, text))

    if not rule.body:
        err("EMPTY_BODY", f"rule '{rule.id}' has an empty body")

    positive_vars: set[str] = set()
    for atom in rule.positive_atoms():
        positive_vars |= atom.variables()
    for v in sorted(rule.head.variables() - positive_vars):
        err("UNSAFE_RULE", f"head variable '{v}' not bound by a positive body atom")
    for lit in rule.body:
        if isinstance(lit, Negated):
            unbound = sorted(lit.atom.variables() - positive_vars)
            for v in unbound:
                err("UNSAFE_RULE", f"negated variable '{v}' not bound by a positive body atom")
        elif isinstance(lit, Comparison):
            for v in sorted(lit.variables() - positive_vars):
                err("UNSAFE_RULE", f"comparison variable '{v}' not bound by a positive body atom")

    var_kinds: dict[str, str] = {}  # variable -> "individual" | datatype name

    def check_atom(atom: Atom) -> None:
        prop = props.get(atom.predicate)
        if prop is None:
            err("UNDECLARED_PREDICATE", f"rule uses undeclared predicate '{atom.predicate}'")
            return
        if len(atom.terms) != prop.arity:
            err("ARITY_MISMATCH", f"'{atom.predicate}' expects {prop.arity} terms, got {len(atom.terms)}")
            return
        positions = ["individual"] * len(atom.terms)
        if prop.kind is PropertyKind.DATATYPE:
            positions[1] = prop.datatype.value if prop.datatype else "individual"
        for term, expected in zip(atom.terms, positions):
            if expected == "individual":
                if isinstance(term, Literal):
                    err("ARG_KIND_MISMATCH", f"literal in individual position of '{atom.predicate}'")
                elif isinstance(term, Var):
                    prior = var_kinds.setdefault(term.name, "individual")
                    if prior != "individual":
                        err("VAR_KIND_CONFLICT", f"variable '{term.name}' used as individual and {prior}")
            else:
                if isinstance(term, Const):
                    err("ARG_KIND_MISMATCH", f"constant in datatype position of '{atom.predicate}'")
                elif isinstance(term, Literal):
                    if term.kind.value != expected:
                        err("DATATYPE_MISMATCH", f"'{atom.predicate}' expects {expected}, got {term.kind.value}")
                else:
                    prior = var_kinds.setdefault(term.name, expected)
                    if prior != expected:
                        err("VAR_KIND_CONFLICT", f"variable '{term.name}' used as {expected} and {prior}")

    check_atom(rule.head)
    for lit in rule.body:
        if isinstance(lit, (Positive, Negated)):
            check_atom(lit.atom)
    for lit in rule.body:
        if isinstance(lit, Comparison):
            for side in (lit.lhs, lit.rhs):
                if isinstance(side, Const):
                    err("COMPARISON_TYPE", "comparison operands must be datatype-valued, not individuals")
                elif isinstance(side, Var) and var_kinds.get(side.name) == "individual":
                    err("COMPARISON_TYPE", f"variable '{side.name}' is individual-valued in a comparison")
    return findings


# ---------------------------------------------------------------------------
# stratification

class NotStratifiableError(SolarError):
    code = "NOT_STRATIFIABLE"

    def __init__(self, cycle: Sequence[str]):
        self.cycle = list(cycle)
        super().__init__(f"negation cycle: {' -> '.join(self.cycle)}")


def dependency_graph(rules: Iterable[Rule]) -> nx.DiGraph:
    """Directed graph over predicates: edge b -> h when h's rule mentions b
    in the body; edge attribute ``negative`` marks negated occurrences."""
    graph = nx.DiGraph()
    for rule in rules:
        graph.add_node(rule.head.predicate)
        for lit in rule.body:
            if isinstance(lit, Positive):
                graph.add_node(lit.atom.predicate)
                if not graph.has_edge(lit.atom.predicate, rule.head.predicate):
                    graph.add_edge(lit.atom.predicate, rule.head.predicate, negative=False)
            elif isinstance(lit, Negated):
                graph.add_node(lit.atom.predicate)
                graph.add_edge(lit.atom.predicate, rule.head.predicate, negative=True)
    return graph


def stratify(rules: Iterable[Rule]) -> list[list[str]]:
    """Partition rule predicates into strata.

    Positive dependencies stay within or below a stratum; negative
    dependencies point strictly below. Raises NotStratifiableError with
    the offending predicate cycle when negation occurs inside a cycle.
    """
    rules = list(rules)
    graph = dependency_graph(rules)
    scc_of: dict[str, int] = {}
    components = list(nx.strongly_connected_components(graph))
    for idx, comp in enumerate(components):
        for pred in comp:
            scc_of[pred] = idx
    for src, dst, data in graph.edges(data=True):
        if data["negative"] and scc_of[src] == scc_of[dst]:
            members = components[scc_of[src]]
            path = nx.shortest_path(graph.subgraph(members), dst, src)
            raise NotStratifiableError(path + [dst])

    condensation = nx.condensation(graph, components)
    level: dict[int, int] = {}
    for node in nx.topological_sort(condensation):
        best = 0
        for pred_node in condensation.predecessors(node):
            weight = 0
            for src in condensation.nodes[pred_node]["members"]:
                for dst in condensation.nodes[node]["members"]:
                    if graph.has_edge(src, dst) and graph.edges[src, dst]["negative"]:
                        weight = 1
            best = max(best, level[pred_node] + weight)
        level[node] = best

    strata: dict[int, set[str]] = {}
    for node, lvl in level.items():
        strata.setdefault(lvl, set()).update(condensation.nodes[node]["members"])
    return [sorted(strata[lvl]) for lvl in sorted(strata)]
