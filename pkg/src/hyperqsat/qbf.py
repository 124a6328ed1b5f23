"""QBF construction for "is the formula satisfied by some set of m traces".

The prefix existentially guesses the m candidate traces (and the shared
loop position), then quantifies each trace-variable group as the formula
does.  Linking premises tie every trace variable to one of the candidates;
they are chained with -> under universal groups and & under existential
ones, right-nested, with the unrolled body innermost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from . import formula as F
from .formula import Formula, Quant, QuantGroup
from .unroll import (
    Aux, ApStep, LoopSel, Prop, conj, conj_all, disj_all, iff, implies,
    lit, loop_constraint, trace_owner, unroll_body,
)


@dataclass(frozen=True)
class Block:
    quant: Quant
    vars: tuple


@dataclass
class QbfInstance:
    blocks: list[Block]
    clauses: list[tuple[int, ...]]
    varmap: dict  # PropVar -> positive int
    m: int
    k: int
    names: list = field(default_factory=list)  # id - 1 -> PropVar

    @property
    def outer(self) -> tuple:
        return self.blocks[0].vars

    @property
    def num_vars(self) -> int:
        return len(self.names)


def outer_vars(aps: Sequence[str], m: int, k: int) -> tuple:
    """Canonical block-0 order: (trace, ap, step), then loop selectors."""
    steps = [ApStep(trace_owner(i), a, j) for i in range(m) for a in sorted(aps) for j in range(k)]
    return tuple(steps) + tuple(LoopSel(j) for j in range(k))


def build_prefix(f: Formula, m: int, k: int) -> list[Block]:
    if m < 1 or k < 1:
        raise ValueError("m and k must be >= 1")
    aps = f.aps
    blocks = [Block(Quant.EXISTS, outer_vars(aps, m, k))]
    for group in f.prefix:
        vs = tuple(ApStep(v, a, j) for v in group.vars for a in aps for j in range(k))
        blocks.append(Block(group.quant, vs))
    return blocks


def build_linking_premise(group: QuantGroup, m: int, k: int, aps: Sequence[str]) -> Prop:
    """AND over the group's variables of OR over candidates of pointwise equality."""
    return conj_all(
        disj_all(
            conj_all(iff(lit(ApStep(trace_owner(i), a, j)), lit(ApStep(v, a, j)))
                     for a in aps for j in range(k))
            for i in range(m))
        for v in group.vars)


def assemble(f: Formula, m: int, k: int) -> Prop:
    aps = f.aps
    loop = loop_constraint(k)
    acc = conj(loop, unroll_body(F.nnf(f.body), k))
    for group in reversed(f.prefix):
        premise = build_linking_premise(group, m, k, aps)
        if group.quant is Quant.FORALL:
            acc = implies(premise, acc)
        else:
            acc = conj(premise, acc)
    # outside the chain: the loop choice must be well formed even when an
    # outer universal premise fails
    return conj(loop, acc)


class _Tseitin:
    def __init__(self, varmap: dict, names: list):
        self.varmap = varmap
        self.names = names
        self.clauses: list[tuple[int, ...]] = []
        self.gates: dict[int, int] = {}
        self._keep: list = []
        self.aux: list = []

    def var_id(self, var) -> int:
        vid = self.varmap.get(var)
        if vid is None:
            vid = len(self.names) + 1
            self.varmap[var] = vid
            self.names.append(var)
        return vid

    def fresh(self) -> int:
        var = Aux(len(self.aux))
        self.aux.append(var)
        return self.var_id(var)

    def add(self, lits) -> None:
        seen: dict[int, int] = {}
        for x in lits:
            if -x in seen:
                return  # tautology
            seen[x] = x
        self.clauses.append(tuple(seen))

    def literal(self, p: Prop) -> int:
        if p.op == "lit":
            vid = self.var_id(p.var)
            return vid if p.positive else -vid
        if p.op == "not":
            return -self.literal(p.args[0])
        hit = self.gates.get(id(p))
        if hit is not None:
            return hit
        if p.op in ("true", "false"):
            g = self.fresh()
            self.add([g] if p.op == "true" else [-g])
        else:
            kids = [self.literal(c) for c in p.args]
            g = self.fresh()
            if p.op == "and":
                for c in kids:
                    self.add([-g, c])
                self.add([g] + [-c for c in kids])
            else:
                for c in kids:
                    self.add([g, -c])
                self.add([-g] + kids)
        self.gates[id(p)] = g
        self._keep.append(p)
        return g

    def assert_root(self, p: Prop) -> None:
        roots = p.args if p.op == "and" else (p,)
        for r in roots:
            if r.op == "or" and all(c.op == "lit" for c in r.args):
                self.add([self.literal(c) for c in r.args])
            else:
                self.add([self.literal(r)])


def to_cnf(p: Prop, blocks: Sequence[Block], m: int = 0, k: int = 0) -> QbfInstance:
    """Tseitin conversion; definitional variables go to a final existential block."""
    varmap: dict = {}
    names: list = []
    for b in blocks:
        for v in b.vars:
            if v in varmap:
                raise ValueError(f"variable {v} quantified twice")
            varmap[v] = len(names) + 1
            names.append(v)
    ts = _Tseitin(varmap, names)
    ts.assert_root(p)
    nbound = sum(len(b.vars) for b in blocks)
    unbound = [v for v in names[nbound:] if not isinstance(v, Aux)]
    if unbound:
        raise ValueError(f"matrix variable outside every block: {unbound[0]}")
    out_blocks = list(blocks) + [Block(Quant.EXISTS, tuple(ts.aux))]
    return QbfInstance(out_blocks, ts.clauses, varmap, m, k, names)


def build_instance(f: Formula, m: int, k: int) -> QbfInstance:
    return to_cnf(assemble(f, m, k), build_prefix(f, m, k), m, k)


def emit_qdimacs(inst: QbfInstance, comments: Sequence[str] = ()) -> str:
    lines = [f"c {c}" for c in comments]
    lines.append(f"p cnf {inst.num_vars} {len(inst.clauses)}")
    merged: list[tuple[Quant, list[int]]] = []
    for b in inst.blocks:
        if not b.vars:
            continue
        ids = [inst.varmap[v] for v in b.vars]
        if merged and merged[-1][0] is b.quant:
            merged[-1][1].extend(ids)
        else:
            merged.append((b.quant, ids))
    for quant, ids in merged:
        tag = "e" if quant is Quant.EXISTS else "a"
        lines.append(f"{tag} {' '.join(map(str, ids))} 0")
    for clause in inst.clauses:
        lines.append(" ".join(map(str, clause)) + " 0")
    return "\n".join(lines) + "\n"
