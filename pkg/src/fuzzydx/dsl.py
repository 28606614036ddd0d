"""Text format for knowledge bases: a Prolog-like clause syntax.

The grammar, one clause per line when printed canonically::

    program   := clause* ;
    clause    := ( rule | fact | prior ) "." ;
    rule      := literal ":-" body_lit ("," body_lit)* ;
    body_lit  := ["\\+"] literal ["@" number] ;
    literal   := ident [ "(" term ("," term)* ")" ] ;
    term      := ident | "_" ;
    fact      := "fuzzy_symptom" "(" ident "," number ")" | literal ;
    prior     := "prior" "(" ident "," term "," term "," term "," number ")" ;

``%`` starts a comment running to end of line.  Numbers are plain decimals
without exponent notation.  ``@`` weights default to 1.0 when omitted; a bare
ground fact gets weight 1.0 and ``fuzzy_symptom(name, w)`` is sugar for a
``symptom(name)`` fact at weight ``w``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .model import (
    WILDCARD,
    BodyLiteral,
    EngineError,
    FuzzyFact,
    Literal,
    PriorEntry,
    Provenance,
    Rule,
)

# ===================== errors =====================


class DslError(EngineError):
    """Base class for parse and print failures."""


class ParseError(DslError):
    def __init__(self, line: int, column: int, expected: str, found: str):
        self.line = line
        self.column = column
        self.expected = expected
        self.found = found
        super().__init__(f"line {line}, column {column}: expected {expected}, found {found}")


class DuplicateClauseError(DslError):
    def __init__(self, line: int, clause: str):
        self.line = line
        self.clause = clause
        super().__init__(f"line {line}: duplicate clause {clause}")


class WeightOutOfRangeError(DslError):
    def __init__(self, line: int, column: int, value: float, bounds: str):
        self.line = line
        self.column = column
        self.value = value
        super().__init__(f"line {line}, column {column}: weight {value} outside {bounds}")


class PrintError(DslError):
    """Raised for in-memory values the grammar cannot represent."""


# ===================== lexer =====================

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>%[^\n]*)
  | (?P<newline>\n)
  | (?P<number>[0-9]+(?:\.[0-9]+)?)
  | (?P<ident>[a-z][a-z0-9_]*)
  | (?P<implies>:-)
  | (?P<naf>\\\+)
  | (?P<wildcard>_)
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<comma>,)
  | (?P<dot>\.)
  | (?P<at>@)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(source):
        match = _TOKEN_RE.match(source, pos)
        if match is None:
            raise ParseError(line, pos - line_start + 1, "a token", repr(source[pos]))
        kind = match.lastgroup or ""
        if kind == "newline":
            line += 1
            line_start = match.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, match.group(), line, match.start() - line_start + 1))
        pos = match.end()
    tokens.append(Token("eof", "", line, len(source) - line_start + 1))
    return tokens


# ===================== parsed program =====================


@dataclass
class Program:
    """Parse result: clauses grouped by kind, each in source order."""

    rules: list[Rule] = field(default_factory=list)
    facts: list[FuzzyFact] = field(default_factory=list)
    priors: list[PriorEntry] = field(default_factory=list)


# ===================== parser =====================


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        token = self.tokens[self.pos]
        if token.kind != "eof":
            self.pos += 1
        return token

    def expect(self, kind: str, expected: str) -> Token:
        token = self.peek()
        if token.kind != kind:
            raise ParseError(token.line, token.column, expected, token.text or "end of input")
        return self.advance()

    def fail(self, expected: str) -> ParseError:
        token = self.peek()
        return ParseError(token.line, token.column, expected, token.text or "end of input")

    # -- grammar productions -------------------------------------------------

    def parse_program(self) -> Program:
        program = Program()
        seen_rules: dict[str, int] = {}
        seen_facts: set[tuple[Literal, float]] = set()
        seen_priors: set[tuple[str, str, str, str]] = set()
        while self.peek().kind != "eof":
            line = self.peek().line
            kind, clause = self.parse_clause()
            if kind == "rule":
                if clause.rule_id in seen_rules:
                    raise DuplicateClauseError(line, f"rule for {clause.disease}")
                seen_rules[clause.rule_id] = line
                program.rules.append(clause)
            elif kind == "fact":
                key = (clause.literal, clause.weight)
                if key in seen_facts:
                    raise DuplicateClauseError(line, str(clause.literal))
                seen_facts.add(key)
                program.facts.append(clause)
            else:
                key = (clause.disease, *clause.stratum)
                if key in seen_priors:
                    raise DuplicateClauseError(line, f"prior({clause.disease}, ...)")
                seen_priors.add(key)
                program.priors.append(clause)
        return program

    def parse_clause(self):
        token = self.peek()
        if token.kind == "implies":
            raise self.fail("a clause (directives are not supported)")
        if token.kind != "ident":
            raise self.fail("a clause")
        if token.text == "prior":
            prior = self.parse_prior()
            self.expect("dot", "'.'")
            return "prior", prior
        if token.text == "fuzzy_symptom":
            fact = self.parse_fuzzy_symptom()
            self.expect("dot", "'.'")
            return "fact", fact
        literal = self.parse_literal()
        if self.peek().kind == "implies":
            self.advance()
            rule = self.parse_rule_body(literal)
            self.expect("dot", "'.'")
            return "rule", rule
        if not literal.is_ground:
            raise self.fail("a ground fact ('.' after a wildcard-free literal)")
        self.expect("dot", "'.'")
        return "fact", FuzzyFact(literal, 1.0)

    def parse_rule_body(self, head: Literal) -> Rule:
        if head.predicate != "diagnosis" or len(head.args) != 1 or not head.is_ground:
            raise self.fail("rule head diagnosis(<disease>)")
        body: list[BodyLiteral] = []
        while True:
            body.append(self.parse_body_literal())
            if self.peek().kind == "comma":
                self.advance()
                continue
            break
        try:
            return Rule(head, tuple(body))
        except ValueError as exc:
            token = self.peek()
            raise ParseError(token.line, token.column, "a valid rule", str(exc)) from exc

    def parse_body_literal(self) -> BodyLiteral:
        negated = False
        if self.peek().kind == "naf":
            self.advance()
            negated = True
        literal = self.parse_literal()
        if negated:
            literal = Literal(literal.predicate, literal.args, negated=True)
        weight = 1.0
        if self.peek().kind == "at":
            self.advance()
            weight = self.parse_number("a weight")
            # Zero is allowed so snapshots holding learner-clipped weights
            # reload; anything outside [0, 1] is rejected.
            if not 0.0 <= weight <= 1.0:
                token = self.tokens[self.pos - 1]
                raise WeightOutOfRangeError(token.line, token.column, weight, "[0, 1]")
        return BodyLiteral(literal, weight)

    def parse_literal(self) -> Literal:
        name = self.expect("ident", "a predicate name").text
        args: list[str] = []
        if self.peek().kind == "lparen":
            self.advance()
            while True:
                args.append(self.parse_term())
                if self.peek().kind == "comma":
                    self.advance()
                    continue
                break
            self.expect("rparen", "')'")
        return Literal(name, tuple(args))

    def parse_term(self) -> str:
        token = self.peek()
        if token.kind == "ident":
            return self.advance().text
        if token.kind == "wildcard":
            self.advance()
            return WILDCARD
        raise self.fail("an atom or '_'")

    def parse_number(self, expected: str) -> float:
        token = self.expect("number", expected)
        return float(token.text)

    def parse_fuzzy_symptom(self) -> FuzzyFact:
        self.expect("ident", "'fuzzy_symptom'")
        self.expect("lparen", "'('")
        name = self.expect("ident", "a symptom name").text
        self.expect("comma", "','")
        at = self.peek()
        weight = self.parse_number("a weight")
        if not 0.0 <= weight <= 1.0:
            raise WeightOutOfRangeError(at.line, at.column, weight, "[0, 1]")
        self.expect("rparen", "')'")
        return FuzzyFact(Literal("symptom", (name,)), weight)

    def parse_prior(self) -> PriorEntry:
        self.expect("ident", "'prior'")
        self.expect("lparen", "'('")
        disease_token = self.peek()
        disease = self.expect("ident", "a disease name").text
        fields = []
        for _ in range(3):
            self.expect("comma", "','")
            fields.append(self.parse_term())
        self.expect("comma", "','")
        at = self.peek()
        prevalence = self.parse_number("a prevalence")
        self.expect("rparen", "')'")
        if not 0.0 < prevalence <= 1.0:
            raise WeightOutOfRangeError(at.line, at.column, prevalence, "(0, 1]")
        try:
            return PriorEntry(disease, fields[0], fields[1], fields[2], prevalence)
        except ValueError as exc:
            raise ParseError(disease_token.line, disease_token.column, "a valid prior", str(exc)) from exc


def parse_program(source: str) -> Program:
    """Parse a knowledge-base text into rules, facts, and priors.

    Clauses come back in source order within each group.  Exact duplicates
    (same rule structure, identical fact, or repeated prior stratum) raise
    ``DuplicateClauseError``.
    """
    return _Parser(_tokenize(source)).parse_program()


def parse_literal(source: str) -> Literal:
    """Parse a single (possibly negated) literal like ``\\+ lab(x)``."""
    parser = _Parser(_tokenize(source))
    negated = False
    if parser.peek().kind == "naf":
        parser.advance()
        negated = True
    literal = parser.parse_literal()
    if parser.peek().kind != "eof":
        raise parser.fail("end of input after literal")
    if negated:
        return Literal(literal.predicate, literal.args, negated=True)
    return literal


def parse_rule(source: str) -> Rule:
    """Parse exactly one rule clause, dot-terminated."""
    program = parse_program(source)
    if len(program.rules) != 1 or program.facts or program.priors:
        raise ParseError(1, 1, "exactly one rule clause", "something else")
    return program.rules[0]


# ===================== printer =====================


def format_weight(value: float) -> str:
    """Shortest plain-decimal string that parses back to the same float."""
    if value != value or value in (float("inf"), float("-inf")):
        raise PrintError(f"cannot print weight {value}")
    for precision in range(0, 30):
        text = f"{value:.{precision}f}"
        if float(text) == value:
            return text
    # Exact decimal expansion; verbose but always round-trips.
    from decimal import Decimal

    return format(Decimal(value), "f")


def format_body_literal(entry: BodyLiteral) -> str:
    if entry.weight == 1.0:
        return str(entry.literal)
    return f"{entry.literal}@{format_weight(entry.weight)}"


def format_rule(rule: Rule) -> str:
    body = ", ".join(format_body_literal(entry) for entry in rule.body)
    return f"{rule.head} :- {body}."


def format_fact(fact: FuzzyFact) -> str:
    if fact.weight == 1.0:
        return f"{fact.literal}."
    literal = fact.literal
    if literal.predicate == "symptom" and len(literal.args) == 1:
        return f"fuzzy_symptom({literal.args[0]}, {format_weight(fact.weight)})."
    raise PrintError(
        f"fact {literal} at weight {fact.weight} has no textual form; "
        "only symptom/1 facts carry non-unit weights"
    )


def format_prior(entry: PriorEntry) -> str:
    parts = (entry.disease, *entry.stratum, format_weight(entry.prevalence))
    return f"prior({', '.join(parts)})."


def print_program(program: Program) -> str:
    """Canonical text: one clause per line, rules then facts then priors."""
    lines = [format_rule(rule) for rule in program.rules]
    lines.extend(format_fact(fact) for fact in program.facts)
    lines.extend(format_prior(entry) for entry in program.priors)
    return "\n".join(lines) + ("\n" if lines else "")
