"""Deciding constructed instances.

Two routes: hand the QDIMACS text to an external QBF solver and read back
the outermost existential block, or expand every trace quantifier over the
m candidate traces (forall -> AND, exists -> OR) and run the built-in SAT
search on the resulting purely existential formula.
"""

from __future__ import annotations

import heapq
import os
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import formula as F
from .formula import Formula, LassoTrace, Model, Quant
from .qbf import Block, QbfInstance, emit_qdimacs, outer_vars, to_cnf
from .unroll import (
    ApStep, Encoder, LoopSel, Prop, conj, conj_all, disj_all, lit, loop_constraint,
    trace_owner, variables,
)

SOLVER_ENV = "HYPERQSAT_SOLVER"
DEFAULT_EXPANSION_CAP = 10**6


@dataclass(frozen=True)
class Sat:
    assignment: dict  # block-0 PropVar -> bool


@dataclass(frozen=True)
class Unsat:
    pass


@dataclass(frozen=True)
class Unknown:
    reason: str


SolveOutcome = Sat | Unsat | Unknown


@dataclass
class BackendConfig:
    kind: str = "auto"  # "builtin", "external" or "auto"
    command: str | None = field(default_factory=lambda: os.environ.get(SOLVER_ENV) or None)
    time_limit: float = 120.0
    strict_certificate: bool = False
    expansion_cap: int = DEFAULT_EXPANSION_CAP

    def __post_init__(self):
        if self.kind not in ("builtin", "external", "auto"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.time_limit <= 0:
            raise ValueError("time limit must be positive")


class ExpansionCapExceeded(RuntimeError):
    def __init__(self, count: int, cap: int):
        self.count = count
        super().__init__(f"expansion cap exceeded: {count} instantiations > {cap}")


class DecodeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# External QBF solver
# ---------------------------------------------------------------------------


def parse_certificate(text: str) -> dict[int, bool]:
    values: dict[int, bool] = {}
    for line in text.splitlines():
        parts = line.split()
        if not parts or parts[0] != "V":
            continue
        for tok in parts[1:]:
            x = int(tok)
            if x:
                values[abs(x)] = x > 0
    return values


def solve_external(inst: QbfInstance, cfg: BackendConfig) -> SolveOutcome:
    if not cfg.command or "{file}" not in cfg.command:
        return Unknown("no external solver command with a {file} placeholder")
    fd, path = tempfile.mkstemp(suffix=".qdimacs", prefix="hyperqsat-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(emit_qdimacs(inst))
        argv = [a.replace("{file}", path) for a in shlex.split(cfg.command)]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=cfg.time_limit)
        except subprocess.TimeoutExpired:
            return Unknown("solver error/timeout: time limit")
        except OSError as exc:
            return Unknown(f"solver error/timeout: cannot run solver ({exc})")
    finally:
        os.unlink(path)

    if proc.returncode == 20:
        return Unsat()
    if proc.returncode != 10:
        return Unknown(f"solver error/timeout: exit status {proc.returncode}")
    try:
        cert = parse_certificate(proc.stdout)
    except ValueError:
        return Unknown("malformed certificate")
    outer = {}
    for var in inst.outer:
        vid = inst.varmap[var]
        if vid not in cert and cfg.strict_certificate:
            return Unknown(f"certificate misses outer variable {vid}")
        outer[var] = cert.get(vid, False)
    return Sat(outer)


# ---------------------------------------------------------------------------
# Expansion to SAT
# ---------------------------------------------------------------------------


def instantiation_count(f: Formula, m: int) -> int:
    used = F.trace_vars(f.body)
    return m ** sum(1 for v in f.variables if v in used)


def expand_to_sat(f: Formula, m: int, k: int, cap: int = DEFAULT_EXPANSION_CAP) -> Prop:
    """Propositional formula over block-0 variables only.

    Every trace variable is instantiated with each candidate t_i; linking
    premises become true under that substitution and disappear.  Variables
    the body never mentions are dropped (the candidate set is non-empty).
    The loop disjunction is hoisted outermost, which is equivalent under
    the exactly-one loop constraint.
    """
    count = instantiation_count(f, m)
    if count > cap:
        raise ExpansionCapExceeded(count, cap)
    body = F.nnf(f.body)
    used = F.trace_vars(f.body)
    quantified = [(q, v) for q, v in f.quantified if v in used]
    owners = [trace_owner(i) for i in range(m)]
    enc = Encoder(k)

    def expand(idx: int, env: dict, l: int) -> Prop:
        if idx == len(quantified):
            return enc.enc(body, 0, l, env)
        quant, var = quantified[idx]
        parts = (expand(idx + 1, {**env, var: o}, l) for o in owners)
        return conj_all(parts) if quant is Quant.FORALL else disj_all(parts)

    per_loop = disj_all(conj(lit(LoopSel(l)), expand(0, {}, l)) for l in range(k))
    return conj(loop_constraint(k), per_loop)


# ---------------------------------------------------------------------------
# Built-in SAT search
# ---------------------------------------------------------------------------


class _Timeout(Exception):
    pass


def _search(nvars: int, clauses: Sequence[tuple[int, ...]], order: Sequence[int],
            deadline: float | None) -> list[int] | None:
    """CDCL: two watched literals, first-UIP learning, non-chronological backjumps.

    Branching picks the most active unassigned variable (activity bumped
    during conflict analysis, ties broken by position in `order`, then by
    id), false first, so the result is a pure function of the clauses and
    the order.
    Returns the value array (index = variable id, 1 / -1) or None when
    unsatisfiable.
    """
    value = [0] * (nvars + 1)
    level = [0] * (nvars + 1)
    reason: list[int] = [-1] * (nvars + 1)
    seen = [False] * (nvars + 1)
    cls: list[list[int]] = []
    watches: dict[int, list[int]] = {}
    trail: list[int] = []
    trail_lim: list[int] = []
    qhead = 0

    def enqueue(x: int, why: int) -> None:
        v = abs(x)
        value[v] = 1 if x > 0 else -1
        level[v] = len(trail_lim)
        reason[v] = why
        trail.append(x)

    def lit_value(x: int) -> int:
        v = value[abs(x)]
        return v if x > 0 else -v

    def watch(ci: int) -> None:
        c = cls[ci]
        watches.setdefault(c[0], []).append(ci)
        watches.setdefault(c[1], []).append(ci)

    units = []
    for c in clauses:
        if not c:
            return None
        if len(c) == 1:
            units.append(c[0])
        else:
            cls.append(list(c))
            watch(len(cls) - 1)
    for u in units:
        val = lit_value(u)
        if val < 0:
            return None
        if val == 0:
            enqueue(u, -1)

    def propagate() -> int:
        nonlocal qhead
        while qhead < len(trail):
            false_lit = -trail[qhead]
            qhead += 1
            watching = watches.get(false_lit)
            if not watching:
                continue
            keep = []
            i, n = 0, len(watching)
            while i < n:
                ci = watching[i]
                i += 1
                c = cls[ci]
                if c[0] == false_lit:
                    c[0], c[1] = c[1], c[0]
                other = c[0]
                ov = lit_value(other)
                if ov > 0:
                    keep.append(ci)
                    continue
                for j in range(2, len(c)):
                    y = c[j]
                    if lit_value(y) >= 0:
                        c[1], c[j] = y, false_lit
                        watches.setdefault(y, []).append(ci)
                        break
                else:
                    keep.append(ci)
                    if ov < 0:
                        keep.extend(watching[i:])
                        watches[false_lit] = keep
                        return ci
                    enqueue(other, ci)
            watches[false_lit] = keep
        return -1

    def analyze(confl: int) -> tuple[list[int], int]:
        dl = len(trail_lim)
        learnt = [0]
        pending = 0
        idx = len(trail) - 1
        p = 0
        clause = cls[confl]
        while True:
            for q in clause:
                v = abs(q)
                if v == abs(p) or seen[v] or level[v] == 0:
                    continue
                seen[v] = True
                bump(v)
                if level[v] == dl:
                    pending += 1
                else:
                    learnt.append(q)
            while not seen[abs(trail[idx])]:
                idx -= 1
            p = trail[idx]
            idx -= 1
            seen[abs(p)] = False
            pending -= 1
            if pending == 0:
                break
            clause = cls[reason[abs(p)]]
        learnt[0] = -p
        for q in learnt[1:]:
            seen[abs(q)] = False
        if len(learnt) == 1:
            return learnt, 0
        best = max(range(1, len(learnt)), key=lambda j: level[abs(learnt[j])])
        learnt[1], learnt[best] = learnt[best], learnt[1]
        return learnt, level[abs(learnt[1])]

    def backtrack(lvl: int) -> None:
        nonlocal qhead
        if len(trail_lim) <= lvl:
            return
        cut = trail_lim[lvl]
        for x in trail[cut:]:
            v = abs(x)
            value[v] = 0
            if branchable[v]:
                heapq.heappush(heap, (-activity[v], rank[v], v))
        del trail[cut:]
        del trail_lim[lvl:]
        qhead = cut

    rank = [0] * (nvars + 1)
    for r, v in enumerate(list(dict.fromkeys(order)) + list(range(1, nvars + 1))):
        if not rank[v]:
            rank[v] = r + 1
    activity = [0.0] * (nvars + 1)
    inc = 1.0
    # branch on the given order only; definitional variables follow by propagation
    branchable = [False] * (nvars + 1)
    for v in order:
        branchable[v] = True
    if not any(branchable):
        branchable = [True] * (nvars + 1)
    heap = [(0.0, rank[v], v) for v in range(1, nvars + 1) if branchable[v]]
    heapq.heapify(heap)

    def bump(v: int) -> None:
        nonlocal inc
        activity[v] += inc
        if activity[v] > 1e100:
            for u in range(1, nvars + 1):
                activity[u] *= 1e-100
            inc *= 1e-100
            heap[:] = [(-activity[u], rank[u], u) for u in range(1, nvars + 1)
                       if branchable[u] and not value[u]]
            heapq.heapify(heap)
        elif branchable[v] and not value[v]:
            heapq.heappush(heap, (-activity[v], rank[v], v))

    conflicts = 0
    while True:
        confl = propagate()
        if confl >= 0:
            if not trail_lim:
                return None
            conflicts += 1
            if deadline is not None and conflicts % 64 == 0 and time.monotonic() > deadline:
                raise _Timeout()
            learnt, lvl = analyze(confl)
            backtrack(lvl)
            inc /= 0.95
            if len(learnt) == 1:
                enqueue(learnt[0], -1)
            else:
                cls.append(learnt)
                watch(len(cls) - 1)
                enqueue(learnt[0], len(cls) - 1)
            continue
        while heap and (value[heap[0][2]] or -heap[0][0] != activity[heap[0][2]]):
            heapq.heappop(heap)
        if heap:
            v = heapq.heappop(heap)[2]
        else:
            v = next((u for u in range(1, nvars + 1) if not value[u]), 0)
            if not v:
                return value
        trail_lim.append(len(trail))
        enqueue(-v, -1)


def solve_builtin(p: Prop, order: Sequence | None = None, time_limit: float | None = None) -> SolveOutcome:
    """Complete SAT search over the variables of p.

    Only variables in `order` (default: those of p, first occurrence) are
    branched on; clause-definition variables follow by propagation.  The
    outcome is a pure function of (p, order).  Variables in `order` that p
    does not mention are reported false.
    """
    order = list(order) if order is not None else variables(p)
    inst = to_cnf(p, [Block(Quant.EXISTS, tuple(dict.fromkeys(order + variables(p))))])
    deadline = time.monotonic() + time_limit if time_limit else None
    ids = [inst.varmap[v] for v in order]
    try:
        value = _search(inst.num_vars, inst.clauses, ids, deadline)
    except _Timeout:
        return Unknown("time limit")
    if value is None:
        return Unsat()
    return Sat({v: value[inst.varmap[v]] > 0 for v in inst.blocks[0].vars})


# ---------------------------------------------------------------------------
# Models <-> outer assignments
# ---------------------------------------------------------------------------


def decode_model(outer: Mapping, m: int, k: int, aps: Sequence[str] | None = None) -> Model:
    if aps is None:
        aps = sorted({v.ap for v in outer if isinstance(v, ApStep)})
    loops = [j for j in range(k) if outer.get(LoopSel(j), False)]
    if not loops:
        raise DecodeError("no loop selected")
    if len(loops) > 1:
        raise DecodeError(f"multiple loops selected: {loops}")
    l = loops[0]
    traces = []
    for i in range(m):
        owner = trace_owner(i)
        word = [frozenset(a for a in aps if outer.get(ApStep(owner, a, j), False))
                for j in range(k)]
        traces.append(LassoTrace(tuple(word[:l]), tuple(word[l:])))
    return Model(tuple(traces))


def encode_model(model: Model, aps: Sequence[str]) -> dict:
    """Outer assignment denoting `model`: k = stem + loop, loop selector at the stem length."""
    p, q = model.stem_len, model.loop_len
    k = p + q
    out = {var: False for var in outer_vars(aps, len(model.traces), k)}
    for i, t in enumerate(model.traces):
        for j in range(k):
            for a in t.letter(j):
                if a in aps:
                    out[ApStep(trace_owner(i), a, j)] = True
    out[LoopSel(p)] = True
    return out
