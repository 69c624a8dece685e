"""Datalog-style policy checks carried by chained tokens.

Three profiles, by expressiveness:

* Simple — exactly the four canonical templates the compiler emits
  (tool allowlist, budget ceiling, depth ceiling, time bound).
* Standard — conjunctions of fact atoms, comparisons, and set containment
  over a fixed fact vocabulary; no recursion, no rule definitions, at most
  three variables (bounded evaluation).
* Advanced — anything beyond Standard (rule heads, negation, unknown
  predicates, unbounded variables). This artifact never evaluates Advanced
  checks; verifiers reject tokens that carry them.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .errors import InvalidParams, ParseError
from .identity import parse_rfc3339

# Fact vocabulary: predicate name -> arity.
KNOWN_FACTS = {
    "tool": 1,
    "budget": 1,
    "depth": 1,
    "time": 1,
    "delegator": 1,
    "trust_domain": 2,
}

MAX_VARS = 3


class Profile(Enum):
    SIMPLE = "Simple"
    STANDARD = "Standard"
    ADVANCED = "Advanced"


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Lit:
    value: Union[int, str]
    is_time: bool = False


Term = Union[Var, Lit]


@dataclass(frozen=True)
class FactAtom:
    pred: str
    terms: Tuple[Term, ...]


@dataclass(frozen=True)
class Contains:
    items: Tuple[Union[int, str], ...]
    var: Var


@dataclass(frozen=True)
class Compare:
    lhs: Term
    op: str
    rhs: Term


Atom = Union[FactAtom, Contains, Compare]


@dataclass(frozen=True)
class CheckExpr:
    """Parsed form of one check string."""

    raw: str
    profile: Profile
    atoms: Tuple[Atom, ...] = ()

    def leading_predicate(self) -> Optional[str]:
        for atom in self.atoms:
            if isinstance(atom, FactAtom):
                return atom.pred
        return None


@dataclass(frozen=True)
class FailedCheck:
    index: int
    check: CheckExpr


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_TIMESTAMP_RE = r"\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(?:\.\d+)?(?:Z|[+-]\d{2}:\d{2})"

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<timestamp>""" + _TIMESTAMP_RE + r""")
  | (?P<int>-?\d+)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<var>\$[A-Za-z_][A-Za-z0-9_]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|==|<|>)
  | (?P<punct>[\[\](),;.])
    """,
    re.VERBOSE,
)

_STRING_STRIP_RE = re.compile(r'"(?:[^"\\]|\\.)*"')
_RULE_MARKER_RE = re.compile(r"<-|:-")
_NEGATION_RE = re.compile(r"!|\bnot\b")


def _tokenize(text: str) -> List[Tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r} at offset {pos}")
        pos = m.end()
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group()))
    return tokens


def _has_advanced_markers(text: str) -> bool:
    stripped = _STRING_STRIP_RE.sub('""', text)
    return bool(_RULE_MARKER_RE.search(stripped) or _NEGATION_RE.search(stripped))


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: List[Tuple[str, str]]):
        self.tokens = tokens
        self.pos = 0

    def peek(self, offset: int = 0) -> Optional[Tuple[str, str]]:
        i = self.pos + offset
        return self.tokens[i] if i < len(self.tokens) else None

    def take(self, kind: Optional[str] = None, value: Optional[str] = None) -> Tuple[str, str]:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of check")
        if kind is not None and tok[0] != kind:
            raise ParseError(f"expected {kind}, found {tok[1]!r}")
        if value is not None and tok[1] != value:
            raise ParseError(f"expected {value!r}, found {tok[1]!r}")
        self.pos += 1
        return tok

    def term(self) -> Term:
        tok = self.peek()
        if tok is None:
            raise ParseError("expected a term")
        kind, text = tok
        self.pos += 1
        if kind == "var":
            return Var(text[1:])
        if kind == "int":
            return Lit(int(text))
        if kind == "string":
            return Lit(json.loads(text))
        if kind == "timestamp":
            return Lit(parse_rfc3339(text), is_time=True)
        raise ParseError(f"bad term {text!r}")

    def literal(self) -> Union[int, str]:
        t = self.term()
        if isinstance(t, Var):
            raise ParseError("variables are not allowed inside set literals")
        return t.value

    def clause(self) -> Atom:
        tok = self.peek()
        if tok is None:
            raise ParseError("expected a clause")
        if tok == ("punct", "["):
            return self.containment()
        nxt = self.peek(1)
        if tok[0] == "ident" and nxt == ("punct", "("):
            return self.fact()
        lhs = self.term()
        op = self.take("op")[1]
        rhs = self.term()
        return Compare(lhs, op, rhs)

    def containment(self) -> Contains:
        self.take("punct", "[")
        items = [self.literal()]
        while self.peek() == ("punct", ","):
            self.take()
            items.append(self.literal())
        self.take("punct", "]")
        self.take("punct", ".")
        self.take("ident", "contains")
        self.take("punct", "(")
        var = self.term()
        if not isinstance(var, Var):
            raise ParseError("contains() takes a variable")
        self.take("punct", ")")
        return Contains(tuple(items), var)

    def fact(self) -> FactAtom:
        pred = self.take("ident")[1]
        self.take("punct", "(")
        terms = [self.term()]
        while self.peek() == ("punct", ","):
            self.take()
            terms.append(self.term())
        self.take("punct", ")")
        return FactAtom(pred, tuple(terms))

    def check(self) -> Tuple[Atom, ...]:
        self.take("ident", "check")
        self.take("ident", "if")
        atoms = [self.clause()]
        while self.peek() == ("punct", ","):
            self.take()
            atoms.append(self.clause())
        if self.peek() == ("punct", ";"):
            self.take()
        if self.peek() is not None:
            raise ParseError(f"trailing input after check: {self.peek()[1]!r}")
        return tuple(atoms)


@lru_cache(maxsize=4096)
def parse_check(text: str) -> CheckExpr:
    """Parse one check string, classifying its profile.

    Rule definitions, negation, unknown predicates, and checks needing more
    than three variables come back classified Advanced (verifiers reject
    those tokens); text that is not even advanced-shaped raises ParseError.
    Results are cached: CheckExpr is immutable and verifiers re-parse the
    same policy strings on every request.
    """
    if not isinstance(text, str) or not text.strip():
        raise ParseError("empty check")
    if _has_advanced_markers(text):
        return CheckExpr(raw=text, profile=Profile.ADVANCED)
    atoms = _Parser(_tokenize(text)).check()
    return CheckExpr(raw=text, profile=_classify(atoms), atoms=atoms)


def profile_of(check: CheckExpr) -> Profile:
    return check.profile


def _collect_vars(atoms: Sequence[Atom]) -> set:
    names = set()
    for atom in atoms:
        if isinstance(atom, FactAtom):
            names.update(t.name for t in atom.terms if isinstance(t, Var))
        elif isinstance(atom, Contains):
            names.add(atom.var.name)
        elif isinstance(atom, Compare):
            for t in (atom.lhs, atom.rhs):
                if isinstance(t, Var):
                    names.add(t.name)
    return names


def _classify(atoms: Sequence[Atom]) -> Profile:
    for atom in atoms:
        if isinstance(atom, FactAtom):
            if KNOWN_FACTS.get(atom.pred) != len(atom.terms):
                return Profile.ADVANCED
    if len(_collect_vars(atoms)) > MAX_VARS:
        return Profile.ADVANCED
    if _is_simple_template(atoms):
        return Profile.SIMPLE
    return Profile.STANDARD


def _is_simple_template(atoms: Sequence[Atom]) -> bool:
    if len(atoms) != 2 or not isinstance(atoms[0], FactAtom):
        return False
    fact, guard = atoms
    if len(fact.terms) != 1 or not isinstance(fact.terms[0], Var):
        return False
    v = fact.terms[0]
    if fact.pred == "tool":
        return (
            isinstance(guard, Contains)
            and guard.var == v
            and all(isinstance(i, str) for i in guard.items)
        )
    if fact.pred in ("budget", "depth"):
        return (
            isinstance(guard, Compare)
            and guard.lhs == v
            and guard.op == "<="
            and isinstance(guard.rhs, Lit)
            and isinstance(guard.rhs.value, int)
            and not guard.rhs.is_time
        )
    if fact.pred == "time":
        return (
            isinstance(guard, Compare)
            and guard.lhs == v
            and guard.op == "<="
            and isinstance(guard.rhs, Lit)
            and guard.rhs.is_time
        )
    return False


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

FactSet = Dict[str, Iterable[Tuple]]


def evaluate_checks(
    checks: Sequence[CheckExpr],
    facts: FactSet,
) -> Optional[FailedCheck]:
    """Evaluate Simple/Standard checks against ground facts.

    A check passes iff some variable binding over the facts satisfies every
    atom; clauses are evaluated left to right, so comparisons and containment
    apply to variables bound by earlier fact atoms. Returns None when all
    checks pass, else the first failure.
    """
    for i, check in enumerate(checks):
        if check.profile is Profile.ADVANCED:
            raise InvalidParams("advanced-profile checks cannot be evaluated")
        if not _satisfiable(check.atoms, facts):
            return FailedCheck(index=i, check=check)
    return None


def _satisfiable(atoms: Sequence[Atom], facts: FactSet) -> bool:
    bindings: List[Dict[str, Union[int, str]]] = [{}]
    for atom in atoms:
        if isinstance(atom, FactAtom):
            tuples = list(facts.get(atom.pred, ()))
            new = []
            for binding in bindings:
                for row in tuples:
                    if len(row) != len(atom.terms):
                        continue
                    candidate = _unify(atom.terms, row, binding)
                    if candidate is not None:
                        new.append(candidate)
            bindings = new
        elif isinstance(atom, Contains):
            bindings = [
                b for b in bindings
                if atom.var.name in b and b[atom.var.name] in atom.items
            ]
        elif isinstance(atom, Compare):
            bindings = [b for b in bindings if _compare(atom, b)]
        if not bindings:
            return False
    return True


def _unify(terms, row, binding):
    out = dict(binding)
    for term, value in zip(terms, row):
        if isinstance(term, Var):
            if term.name in out:
                if out[term.name] != value:
                    return None
            else:
                out[term.name] = value
        else:
            if term.value != value:
                return None
    return out


def _resolve(term: Term, binding) -> Optional[Union[int, str]]:
    if isinstance(term, Var):
        return binding.get(term.name)
    return term.value


def _compare(atom: Compare, binding) -> bool:
    lhs = _resolve(atom.lhs, binding)
    rhs = _resolve(atom.rhs, binding)
    if lhs is None or rhs is None:
        return False
    if atom.op == "==":
        return lhs == rhs
    if not isinstance(lhs, int) or not isinstance(rhs, int):
        return False
    if atom.op == "<=":
        return lhs <= rhs
    if atom.op == "<":
        return lhs < rhs
    if atom.op == ">=":
        return lhs >= rhs
    return lhs > rhs


# ---------------------------------------------------------------------------
# Simple-profile compiler
# ---------------------------------------------------------------------------

def compile_simple_policy(
    tools: Sequence[str],
    budget_cents: int,
    max_depth: int,
    expiry: str,
) -> List[str]:
    """Emit the four canonical check templates, byte-exact.

    These exact patterns are the interoperability contract of the Simple
    profile; nothing else is ever generated for it.
    """
    if not tools or not all(isinstance(t, str) and t and '"' not in t for t in tools):
        raise InvalidParams("tools must be non-empty plain strings")
    if not isinstance(budget_cents, int) or isinstance(budget_cents, bool) or budget_cents < 0:
        raise InvalidParams("budget_cents must be an integer >= 0")
    if not isinstance(max_depth, int) or isinstance(max_depth, bool) or max_depth < 0:
        raise InvalidParams("max_depth must be an integer >= 0")
    try:
        parse_rfc3339(expiry)
    except ValueError as exc:
        raise InvalidParams(f"bad expiry timestamp: {exc}") from exc
    allowlist = ",".join(json.dumps(t) for t in tools)
    return [
        f"check if tool($t), [{allowlist}].contains($t);",
        f"check if budget($b), $b <= {budget_cents};",
        f"check if depth($d), $d <= {max_depth};",
        f"check if time($t), $t <= {expiry};",
    ]
