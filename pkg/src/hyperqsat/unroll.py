"""Bounded unrolling of NNF LTL bodies into propositional formulas.

Traces are represented by per-step variables ``ApStep(owner, ap, j)`` for
``0 <= j < k``.  All traces share one loop position, chosen by the one-hot
selector family ``LoopSel(l)``: the denoted lasso has stem ``0..l-1`` and
loop ``l..k-1``, so the successor of step ``k-1`` is ``l``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Mapping

from . import formula as F


class NotNNFError(ValueError):
    pass


class UnassignedVariable(LookupError):
    pass


@dataclass(frozen=True, slots=True)
class ApStep:
    owner: str
    ap: str
    step: int

    def __str__(self):
        return f"{self.ap}^{self.step}_{self.owner}"


@dataclass(frozen=True, slots=True)
class LoopSel:
    pos: int

    def __str__(self):
        return f"l_{self.pos}"


@dataclass(frozen=True, slots=True)
class Aux:
    serial: int

    def __str__(self):
        return f"x{self.serial}"


PropVar = ApStep | LoopSel | Aux


def trace_owner(i: int) -> str:
    # '@' cannot occur in a trace-variable name, so owners never collide
    return f"@t{i}"


class Prop:
    """Node of a propositional DAG: true, false, lit, not, and, or."""

    __slots__ = ("op", "args", "var", "positive")

    def __init__(self, op: str, args: tuple = (), var=None, positive: bool = True):
        self.op = op
        self.args = args
        self.var = var
        self.positive = positive

    def __repr__(self):
        if self.op == "lit":
            return str(self.var) if self.positive else f"~{self.var}"
        if self.op in ("true", "false"):
            return self.op
        if self.op == "not":
            return f"~({self.args[0]!r})"
        sym = " & " if self.op == "and" else " | "
        return "(" + sym.join(repr(a) for a in self.args) + ")"


TRUE = Prop("true")
FALSE = Prop("false")

_lits: dict = {}


def lit(var, positive: bool = True) -> Prop:
    key = (var, positive)
    node = _lits.get(key)
    if node is None:
        if len(_lits) > 1_000_000:
            _lits.clear()
        node = _lits[key] = Prop("lit", var=var, positive=positive)
    return node


def neg(p: Prop) -> Prop:
    if p is TRUE:
        return FALSE
    if p is FALSE:
        return TRUE
    if p.op == "lit":
        return lit(p.var, not p.positive)
    if p.op == "not":
        return p.args[0]
    return Prop("not", (p,))


def _nary(op: str, unit: Prop, zero: Prop, items: Iterable[Prop]) -> Prop:
    out, seen = [], set()
    for p in items:
        if p is zero:
            return zero
        if p is unit:
            continue
        for q in (p.args if p.op == op else (p,)):
            if id(q) not in seen:
                seen.add(id(q))
                out.append(q)
    if not out:
        return unit
    if len(out) == 1:
        return out[0]
    return Prop(op, tuple(out))


def conj(*items: Prop) -> Prop:
    return _nary("and", TRUE, FALSE, items)


def disj(*items: Prop) -> Prop:
    return _nary("or", FALSE, TRUE, items)


def conj_all(items: Iterable[Prop]) -> Prop:
    return _nary("and", TRUE, FALSE, items)


def disj_all(items: Iterable[Prop]) -> Prop:
    return _nary("or", FALSE, TRUE, items)


def implies(a: Prop, b: Prop) -> Prop:
    return disj(neg(a), b)


def iff(a: Prop, b: Prop) -> Prop:
    # two implications; keeps clause conversion free of auxiliaries
    return conj(disj(neg(a), b), disj(a, neg(b)))


def variables(p: Prop) -> list:
    """Variables of p in first-occurrence order."""
    seen_nodes, out, found = set(), [], set()
    stack = [p]
    while stack:
        n = stack.pop()
        if id(n) in seen_nodes:
            continue
        seen_nodes.add(id(n))
        if n.op == "lit":
            if n.var not in found:
                found.add(n.var)
                out.append(n.var)
        else:
            stack.extend(reversed(n.args))
    return out


def node_count(p: Prop) -> int:
    seen, stack = set(), [p]
    while stack:
        n = stack.pop()
        if id(n) not in seen:
            seen.add(id(n))
            stack.extend(n.args)
    return len(seen)


def substitute(p: Prop, assignment: Mapping):
    """Evaluate p under a total assignment.

    Values may be Python bools or numpy bool arrays (evaluated elementwise),
    which lets tests evaluate many assignments at once.
    """
    memo: dict[int, object] = {}

    def go(n: Prop):
        hit = memo.get(id(n))
        if hit is not None:
            return hit
        if n.op == "true":
            out = True
        elif n.op == "false":
            out = False
        elif n.op == "lit":
            try:
                v = assignment[n.var]
            except KeyError:
                raise UnassignedVariable(f"unassigned variable {n.var}") from None
            out = v if n.positive else v ^ True
        elif n.op == "not":
            out = go(n.args[0]) ^ True
        elif n.op == "and":
            out = reduce(lambda a, b: a & b, (go(c) for c in n.args))
        else:
            out = reduce(lambda a, b: a | b, (go(c) for c in n.args))
        memo[id(n)] = out
        return out

    return go(p)


def loop_constraint(k: int) -> Prop:
    """Exactly one of LoopSel(0..k-1)."""
    if k < 1:
        raise ValueError("unrolling bound must be >= 1")
    sels = [lit(LoopSel(j)) for j in range(k)]
    at_most = [disj(neg(sels[i]), neg(sels[j])) for i in range(k) for j in range(i + 1, k)]
    return conj(disj_all(sels), *at_most)


class Encoder:
    """Memoized encoder Enc(node, i, l) for one bound k.

    ``env`` maps trace variables to ApStep owners; unmapped variables own
    their own steps.  Memo keys use the environment restricted to the free
    variables of the node, so instantiations share every subterm they can.
    """

    def __init__(self, k: int):
        if k < 1:
            raise ValueError("unrolling bound must be >= 1")
        self.k = k
        self.memo: dict[tuple, Prop] = {}
        self._fv: dict[int, tuple[str, ...]] = {}
        self._keep: list = []

    def free_vars(self, node) -> tuple[str, ...]:
        fv = self._fv.get(id(node))
        if fv is None:
            fv = tuple(sorted(F.trace_vars(node)))
            self._fv[id(node)] = fv
            self._keep.append(node)  # pin id()
        return fv

    def path(self, i: int, l: int) -> list[int]:
        """Positions visited from i until the loop has been traversed once."""
        tail = list(range(i, self.k))
        return tail + list(range(l, i)) if i >= l else tail

    def enc(self, node, i: int, l: int, env: Mapping[str, str] | None = None) -> Prop:
        env = env or {}
        fv = self.free_vars(node)
        key = (id(node), i, l, tuple(env.get(v, v) for v in fv))
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        out = self._enc(node, i, l, env)
        self.memo[key] = out
        return out

    def _enc(self, node, i, l, env) -> Prop:
        k = self.k
        if isinstance(node, F.Const):
            return TRUE if node.value else FALSE
        if isinstance(node, F.Atom):
            return lit(ApStep(env.get(node.var, node.var), node.ap, i))
        if isinstance(node, F.Not):
            if not isinstance(node.arg, F.Atom):
                raise NotNNFError(f"negation of non-atom: {F.print_body(node)}")
            return neg(self.enc(node.arg, i, l, env))
        if isinstance(node, F.And):
            return conj(self.enc(node.left, i, l, env), self.enc(node.right, i, l, env))
        if isinstance(node, F.Or):
            return disj(self.enc(node.left, i, l, env), self.enc(node.right, i, l, env))
        if isinstance(node, F.Next):
            return self.enc(node.arg, i + 1 if i < k - 1 else l, l, env)
        if isinstance(node, F.Until):
            # psi_i | (phi_i & (psi_i+1 | ...)), closed with false once the
            # loop has been walked: the least fixpoint on the lasso.
            acc = FALSE
            for n in reversed(self.path(i, l)):
                acc = disj(self.enc(node.right, n, l, env),
                           conj(self.enc(node.left, n, l, env), acc))
            return acc
        if isinstance(node, F.Release):
            acc = TRUE
            for n in reversed(self.path(i, l)):
                acc = conj(self.enc(node.right, n, l, env),
                           disj(self.enc(node.left, n, l, env), acc))
            return acc
        raise NotNNFError(f"operator not in negation normal form: {type(node).__name__}")

    def body(self, body, env: Mapping[str, str] | None = None) -> Prop:
        return disj_all(conj(lit(LoopSel(l)), self.enc(body, 0, l, env)) for l in range(self.k))


def unroll_body(body, k: int) -> Prop:
    """OR over loop positions l of (LoopSel(l) & Enc(body, 0, l))."""
    return Encoder(k).body(body)
