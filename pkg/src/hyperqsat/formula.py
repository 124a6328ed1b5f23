"""HyperLTL formulas: AST, concrete syntax, normal forms and lasso semantics.

A formula is a quantifier prefix over trace variables followed by an LTL
body whose atoms are indexed by those variables (``a_pi``).  Models are
finite sets of ultimately periodic traces that share one stem length and
one loop length.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, Union

import numpy as np


class FormulaError(ValueError):
    pass


class ParseError(FormulaError):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"{message} at line {line}, column {col}"
        super().__init__(message)


class Quant(str, enum.Enum):
    FORALL = "forall"
    EXISTS = "exists"

    def dual(self) -> "Quant":
        return Quant.EXISTS if self is Quant.FORALL else Quant.FORALL


# ---------------------------------------------------------------------------
# LTL body
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: bool


@dataclass(frozen=True)
class Atom:
    ap: str
    var: str


@dataclass(frozen=True)
class Not:
    arg: "Ltl"


@dataclass(frozen=True)
class Next:
    arg: "Ltl"


@dataclass(frozen=True)
class Finally:
    arg: "Ltl"


@dataclass(frozen=True)
class Globally:
    arg: "Ltl"


@dataclass(frozen=True)
class And:
    left: "Ltl"
    right: "Ltl"


@dataclass(frozen=True)
class Or:
    left: "Ltl"
    right: "Ltl"


@dataclass(frozen=True)
class Implies:
    left: "Ltl"
    right: "Ltl"


@dataclass(frozen=True)
class Iff:
    left: "Ltl"
    right: "Ltl"


@dataclass(frozen=True)
class Until:
    left: "Ltl"
    right: "Ltl"


@dataclass(frozen=True)
class WeakUntil:
    left: "Ltl"
    right: "Ltl"


@dataclass(frozen=True)
class Release:
    left: "Ltl"
    right: "Ltl"


Ltl = Union[Const, Atom, Not, Next, Finally, Globally, And, Or, Implies, Iff,
            Until, WeakUntil, Release]

TRUE = Const(True)
FALSE = Const(False)

UNARY = (Not, Next, Finally, Globally)
BINARY = (And, Or, Implies, Iff, Until, WeakUntil, Release)


def children(node: Ltl) -> tuple:
    if isinstance(node, UNARY):
        return (node.arg,)
    if isinstance(node, BINARY):
        return (node.left, node.right)
    return ()


def subformulas(node: Ltl) -> Iterator[Ltl]:
    """Pre-order walk (shared subtrees are visited once per occurrence)."""
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(children(n)))


def size(node: Ltl) -> int:
    return sum(1 for _ in subformulas(node))


def atoms(node: Ltl) -> set[Atom]:
    return {n for n in subformulas(node) if isinstance(n, Atom)}


def trace_vars(node: Ltl) -> set[str]:
    return {a.var for a in atoms(node)}


def aps(node: Ltl) -> list[str]:
    return sorted({a.ap for a in atoms(node)})


def rename(node: Ltl, mapping: dict[str, str]) -> Ltl:
    if isinstance(node, Atom):
        return Atom(node.ap, mapping.get(node.var, node.var))
    if isinstance(node, UNARY):
        return type(node)(rename(node.arg, mapping))
    if isinstance(node, BINARY):
        return type(node)(rename(node.left, mapping), rename(node.right, mapping))
    return node


# ---------------------------------------------------------------------------
# Prenex formulas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantGroup:
    quant: Quant
    vars: tuple[str, ...]

    def __post_init__(self):
        if not self.vars:
            raise FormulaError("quantifier group without trace variables")
        if len(set(self.vars)) != len(self.vars):
            raise FormulaError(f"duplicate trace variable in group {self.vars}")


@dataclass(frozen=True)
class Formula:
    prefix: tuple[QuantGroup, ...]
    body: Ltl

    def __post_init__(self):
        if not self.prefix:
            raise FormulaError("empty quantifier prefix")
        seen: set[str] = set()
        for group in self.prefix:
            for v in group.vars:
                if v in seen:
                    raise FormulaError(f"duplicate trace variable {v!r}")
                seen.add(v)
        unbound = trace_vars(self.body) - seen
        if unbound:
            raise FormulaError(f"unbound trace variable {sorted(unbound)[0]!r}")

    @property
    def variables(self) -> list[str]:
        return [v for g in self.prefix for v in g.vars]

    @property
    def quantified(self) -> list[tuple[Quant, str]]:
        return [(g.quant, v) for g in self.prefix for v in g.vars]

    @property
    def aps(self) -> list[str]:
        return aps(self.body)

    def __str__(self) -> str:
        return print_formula(self)


def negate(f: Formula) -> Formula:
    prefix = tuple(QuantGroup(g.quant.dual(), g.vars) for g in f.prefix)
    return Formula(prefix, Not(f.body))


def _fresh(name: str, used: set[str]) -> str:
    if name not in used:
        return name
    n = 1
    while f"{name}{n}" in used:
        n += 1
    return f"{name}{n}"


def conjoin(f: Formula, g: Formula) -> Formula:
    """Prenex conjunction; g's variables are renamed apart from f's."""
    used = set(f.variables)
    mapping = {}
    for v in g.variables:
        mapping[v] = _fresh(v, used)
        used.add(mapping[v])
    prefix = f.prefix + tuple(
        QuantGroup(grp.quant, tuple(mapping[v] for v in grp.vars)) for grp in g.prefix)
    return Formula(prefix, And(f.body, rename(g.body, mapping)))


def implication(f: Formula, g: Formula) -> Formula:
    """f ∧ ¬g in prenex form: satisfiable iff f does not imply g."""
    return conjoin(f, negate(g))


# ---------------------------------------------------------------------------
# Negation normal form
# ---------------------------------------------------------------------------


def nnf(body: Ltl) -> Ltl:
    """Push negations to atoms and rewrite ->, <->, F, G, W into U/R form."""
    memo: dict[tuple[int, bool], Ltl] = {}

    def go(n: Ltl, pos: bool) -> Ltl:
        key = (id(n), pos)
        hit = memo.get(key)
        if hit is not None:
            return hit
        out = _nnf_step(n, pos, go)
        memo[key] = out
        return out

    return go(body, True)


def _nnf_step(n, pos, go):
    if isinstance(n, Const):
        return n if pos else Const(not n.value)
    if isinstance(n, Atom):
        return n if pos else Not(n)
    if isinstance(n, Not):
        return go(n.arg, not pos)
    if isinstance(n, Next):
        return Next(go(n.arg, pos))
    if isinstance(n, And):
        op = And if pos else Or
        return op(go(n.left, pos), go(n.right, pos))
    if isinstance(n, Or):
        op = Or if pos else And
        return op(go(n.left, pos), go(n.right, pos))
    if isinstance(n, Implies):
        if pos:
            return Or(go(n.left, False), go(n.right, True))
        return And(go(n.left, True), go(n.right, False))
    if isinstance(n, Iff):
        lp, ln = go(n.left, True), go(n.left, False)
        rp, rn = go(n.right, True), go(n.right, False)
        if pos:
            return Or(And(lp, rp), And(ln, rn))
        return Or(And(lp, rn), And(ln, rp))
    if isinstance(n, Finally):
        return Until(TRUE, go(n.arg, True)) if pos else Release(FALSE, go(n.arg, False))
    if isinstance(n, Globally):
        return Release(FALSE, go(n.arg, True)) if pos else Until(TRUE, go(n.arg, False))
    if isinstance(n, Until):
        if pos:
            return Until(go(n.left, True), go(n.right, True))
        return Release(go(n.left, False), go(n.right, False))
    if isinstance(n, Release):
        if pos:
            return Release(go(n.left, True), go(n.right, True))
        return Until(go(n.left, False), go(n.right, False))
    if isinstance(n, WeakUntil):
        # a W b == b R (a | b);  !(a W b) == !b U (!a & !b)
        if pos:
            return Release(go(n.right, True), Or(go(n.left, True), go(n.right, True)))
        return Until(go(n.right, False), And(go(n.left, False), go(n.right, False)))
    raise TypeError(f"not an LTL node: {n!r}")


def is_nnf(body: Ltl) -> bool:
    for n in subformulas(body):
        if isinstance(n, Not) and not isinstance(n.arg, Atom):
            return False
        if isinstance(n, (Implies, Iff, Finally, Globally, WeakUntil)):
            return False
    return True


# ---------------------------------------------------------------------------
# Concrete syntax
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<atom>[a-zA-Z][a-zA-Z0-9]*_[a-zA-Z][a-zA-Z0-9]*)
  | (?P<word>[a-zA-Z][a-zA-Z0-9]*)
  | (?P<op><->|->|[~&|().])
""", re.VERBOSE)

_UNARY_WORDS = {"X": Next, "F": Finally, "G": Globally}
_TEMPORAL_WORDS = {"U": Until, "W": WeakUntil, "R": Release}
_RESERVED = {"forall", "exists", "true", "false"} | set(_UNARY_WORDS) | set(_TEMPORAL_WORDS)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        chunk = m.group()
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        found = tok.text or "end of input"
        raise ParseError(f"{msg}, found {found!r}", tok.line, tok.col)

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind in ("op", "word") and tok.text == text

    def expect(self, text: str):
        if not self.at(text):
            self.error(f"expected {text!r}")
        return self.take()

    def formula(self) -> Formula:
        groups = []
        declared: dict[str, _Tok] = {}
        while self.at("forall") or self.at("exists"):
            quant = Quant(self.take().text)
            names = []
            while self.peek().kind == "word" and self.peek().text not in _RESERVED:
                tok = self.take()
                if tok.text in declared:
                    raise ParseError(f"duplicate trace variable {tok.text!r}", tok.line, tok.col)
                declared[tok.text] = tok
                names.append(tok.text)
            if not names:
                self.error("expected trace variable")
            self.expect(".")
            groups.append(QuantGroup(quant, tuple(names)))
        if not groups:
            self.error("expected 'forall' or 'exists'")
        self.declared = declared
        body = self.iff()
        if self.peek().kind != "eof":
            self.error("unexpected token")
        return Formula(tuple(groups), body)

    def iff(self) -> Ltl:
        left = self.impl()
        while self.at("<->"):
            self.take()
            left = Iff(left, self.impl())
        return left

    def impl(self) -> Ltl:
        left = self.disj()
        if self.at("->"):
            self.take()
            return Implies(left, self.impl())
        return left

    def disj(self) -> Ltl:
        left = self.conj()
        while self.at("|"):
            self.take()
            left = Or(left, self.conj())
        return left

    def conj(self) -> Ltl:
        left = self.temp()
        while self.at("&"):
            self.take()
            left = And(left, self.temp())
        return left

    def temp(self) -> Ltl:
        left = self.unary()
        tok = self.peek()
        if tok.kind == "word" and tok.text in _TEMPORAL_WORDS:
            self.take()
            return _TEMPORAL_WORDS[tok.text](left, self.temp())
        return left

    def unary(self) -> Ltl:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "~":
            self.take()
            return Not(self.unary())
        if tok.kind == "word" and tok.text in _UNARY_WORDS:
            self.take()
            return _UNARY_WORDS[tok.text](self.unary())
        return self.atom()

    def atom(self) -> Ltl:
        tok = self.take()
        if tok.kind == "atom":
            ap, var = tok.text.split("_", 1)
            if var not in self.declared:
                raise ParseError(f"unbound trace variable {var!r}", tok.line, tok.col)
            return Atom(ap, var)
        if tok.kind == "word" and tok.text == "true":
            return TRUE
        if tok.kind == "word" and tok.text == "false":
            return FALSE
        if tok.kind == "op" and tok.text == "(":
            inner = self.iff()
            self.expect(")")
            return inner
        self.error("expected atom, constant or '('", tok)


def parse(text: str) -> Formula:
    return _Parser(text).formula()


# Binding strength, loosest first.
_PREC = {Iff: 1, Implies: 2, Or: 3, And: 4, Until: 5, WeakUntil: 5, Release: 5}
_UNARY_PREC = 6
_ATOM_PREC = 7
_SYMBOL = {Iff: "<->", Implies: "->", Or: "|", And: "&", Until: "U", WeakUntil: "W",
           Release: "R", Not: "~", Next: "X", Finally: "F", Globally: "G"}
_RIGHT_ASSOC = (Implies, Until, WeakUntil, Release)


def _prec(node: Ltl) -> int:
    if isinstance(node, UNARY):
        return _UNARY_PREC
    return _PREC.get(type(node), _ATOM_PREC)


def print_body(node: Ltl) -> str:
    def wrap(child: Ltl, minimum: int) -> str:
        text = print_body(child)
        return f"({text})" if _prec(child) < minimum else text

    if isinstance(node, Const):
        return "true" if node.value else "false"
    if isinstance(node, Atom):
        return f"{node.ap}_{node.var}"
    if isinstance(node, Not):
        return "~" + wrap(node.arg, _UNARY_PREC)
    if isinstance(node, UNARY):
        return f"{_SYMBOL[type(node)]} {wrap(node.arg, _UNARY_PREC)}"
    p = _PREC[type(node)]
    if isinstance(node, _RIGHT_ASSOC):
        left, right = wrap(node.left, p + 1), wrap(node.right, p)
    else:
        left, right = wrap(node.left, p), wrap(node.right, p + 1)
    return f"{left} {_SYMBOL[type(node)]} {right}"


def print_formula(f: Formula) -> str:
    quants = " ".join(f"{g.quant.value} {' '.join(g.vars)}." for g in f.prefix)
    return f"{quants} {print_body(f.body)}"


# ---------------------------------------------------------------------------
# Lasso traces and models
# ---------------------------------------------------------------------------

Letter = frozenset


@dataclass(frozen=True)
class LassoTrace:
    stem: tuple[frozenset, ...]
    loop: tuple[frozenset, ...]

    def __post_init__(self):
        if not self.loop:
            raise FormulaError("lasso loop must be non-empty")
        object.__setattr__(self, "stem", tuple(frozenset(x) for x in self.stem))
        object.__setattr__(self, "loop", tuple(frozenset(x) for x in self.loop))

    def letter(self, j: int) -> frozenset:
        if j < len(self.stem):
            return self.stem[j]
        return self.loop[(j - len(self.stem)) % len(self.loop)]

    def reshaped(self, stem_len: int, loop_len: int) -> "LassoTrace":
        """Same infinite word with a longer stem and/or a multiple of the period."""
        if stem_len < len(self.stem) or loop_len % len(self.loop):
            raise FormulaError("cannot shrink a lasso")
        word = [self.letter(j) for j in range(stem_len + loop_len)]
        return LassoTrace(tuple(word[:stem_len]), tuple(word[stem_len:]))


def lasso(stem: Iterable[Iterable[str]], loop: Iterable[Iterable[str]]) -> LassoTrace:
    return LassoTrace(tuple(frozenset(x) for x in stem), tuple(frozenset(x) for x in loop))


@dataclass(frozen=True)
class Model:
    traces: tuple[LassoTrace, ...]

    def __post_init__(self):
        object.__setattr__(self, "traces", tuple(self.traces))
        if not self.traces:
            raise FormulaError("a model needs at least one trace")
        shapes = {(len(t.stem), len(t.loop)) for t in self.traces}
        if len(shapes) != 1:
            raise FormulaError("model traces must share stem and loop lengths")

    @property
    def stem_len(self) -> int:
        return len(self.traces[0].stem)

    @property
    def loop_len(self) -> int:
        return len(self.traces[0].loop)

    def dedup(self) -> "Model":
        return Model(tuple(dict.fromkeys(self.traces)))


def normalize(traces: Sequence[LassoTrace]) -> Model:
    """Build a model, padding stems and unifying periods (lcm) as needed."""
    stem = max(len(t.stem) for t in traces)
    period = math.lcm(*(len(t.loop) for t in traces))
    return Model(tuple(t.reshaped(stem, period) for t in traces))


# ---------------------------------------------------------------------------
# Semantics over lasso models
# ---------------------------------------------------------------------------


def body_truth(body: Ltl, variables: Sequence[str], traces: Sequence[LassoTrace]) -> np.ndarray:
    """Truth of `body` at every position, for every assignment of traces to variables.

    Axis i ranges over `traces` for ``variables[i]``; the last axis ranges over
    positions 0..p+q-1 of the common (p, q) lasso shape.  Axes of variables a
    subformula does not mention have length 1 (numpy broadcasting).
    """
    p, q = len(traces[0].stem), len(traces[0].loop)
    if any((len(t.stem), len(t.loop)) != (p, q) for t in traces):
        raise FormulaError("traces must share stem and loop lengths")
    n, npos = len(variables), p + q
    axis = {v: i for i, v in enumerate(variables)}
    succ = np.array(list(range(1, npos)) + [p])
    letters = [[t.letter(j) for j in range(npos)] for t in traces]
    memo: dict[int, np.ndarray] = {}

    def atom(a: Atom) -> np.ndarray:
        if a.var not in axis:
            raise FormulaError(f"unbound variable {a.var!r}")
        shape = [1] * n + [npos]
        shape[axis[a.var]] = len(traces)
        vals = np.array([[a.ap in letters[t][j] for j in range(npos)]
                         for t in range(len(traces))], dtype=bool)
        return vals.reshape(shape)

    def const(value: bool) -> np.ndarray:
        return np.full([1] * n + [npos], value, dtype=bool)

    def fix(now: np.ndarray, step: np.ndarray, seed: bool) -> np.ndarray:
        # out[j] = now[j] | (step[j] & out[succ(j)]): least fixpoint when seeded
        # False, greatest when seeded True.  Loop positions first, then the stem
        # backwards from position p.
        shape = np.broadcast_shapes(now.shape, step.shape)
        now = np.broadcast_to(now, shape)
        step = np.broadcast_to(step, shape)
        out = np.full(shape, seed, dtype=bool)
        for _ in range(q + 1):
            new = now[..., p:] | (step[..., p:] & out[..., succ[p:]])
            if np.array_equal(new, out[..., p:]):
                break
            out[..., p:] = new
        for j in range(p - 1, -1, -1):
            out[..., j] = now[..., j] | (step[..., j] & out[..., j + 1])
        return out

    def go(node: Ltl) -> np.ndarray:
        hit = memo.get(id(node))
        if hit is not None:
            return hit
        if isinstance(node, Const):
            out = const(node.value)
        elif isinstance(node, Atom):
            out = atom(node)
        elif isinstance(node, Not):
            out = ~go(node.arg)
        elif isinstance(node, Next):
            out = go(node.arg)[..., succ]
        elif isinstance(node, And):
            out = go(node.left) & go(node.right)
        elif isinstance(node, Or):
            out = go(node.left) | go(node.right)
        elif isinstance(node, Implies):
            out = ~go(node.left) | go(node.right)
        elif isinstance(node, Iff):
            out = go(node.left) == go(node.right)
        elif isinstance(node, Finally):
            out = fix(go(node.arg), const(True), False)
        elif isinstance(node, Globally):
            out = fix(const(False), go(node.arg), True)
        elif isinstance(node, Until):
            out = fix(go(node.right), go(node.left), False)
        elif isinstance(node, WeakUntil):
            out = fix(go(node.right), go(node.left), True)
        elif isinstance(node, Release):
            a, b = go(node.left), go(node.right)
            out = fix(a & b, b, True)
        else:
            raise TypeError(f"not an LTL node: {node!r}")
        memo[id(node)] = out
        return out

    return go(body)


def resolve_quantifiers(truth: np.ndarray, quants: Sequence[Quant]) -> np.ndarray:
    """Fold trace-variable axes innermost-first (any for exists, all for forall).

    `truth` has one leading axis per quantifier; trailing axes are kept.
    """
    for i in range(len(quants) - 1, -1, -1):
        if quants[i] is Quant.FORALL:
            truth = truth.all(axis=i)
        else:
            truth = truth.any(axis=i)
    return truth


def evaluate(model: Model, f: Formula) -> bool:
    # Axes a variable does not touch have length 1; folding them is a no-op.
    truth = body_truth(f.body, f.variables, model.traces)[..., 0]
    return bool(resolve_quantifiers(truth, [q for q, _ in f.quantified]))
