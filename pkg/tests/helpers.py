"""Independent oracles and generators shared by the test modules."""

from __future__ import annotations

import itertools
import random
import sys
from functools import lru_cache
from pathlib import Path

import numpy as np

from hyperqsat import formula as F
from hyperqsat.formula import Formula, LassoTrace, Model, Quant, QuantGroup
from hyperqsat.qbf import assemble
from hyperqsat.unroll import ApStep, LoopSel, trace_owner

TOOLS = Path(__file__).parent / "tools"
REF_QBF = f"{sys.executable} {TOOLS / 'ref_qbf.py'} {{file}}"

sys.path.insert(0, str(TOOLS))
from ref_qbf import read_qdimacs  # noqa: E402


# ---------------------------------------------------------------------------
# Naive semantics: walk the lasso explicitly
# ---------------------------------------------------------------------------


def _walk(p: int, q: int, i: int) -> list[int]:
    """Positions from i on, each distinct position once."""
    out, j = [], i
    while j not in out:
        out.append(j)
        j = j + 1 if j + 1 < p + q else p
    return out


def naive_holds(node, env: dict[str, LassoTrace], i: int = 0) -> bool:
    t0 = next(iter(env.values()))
    p, q = len(t0.stem), len(t0.loop)

    def at(n, j):
        return naive_holds(n, env, j)

    if isinstance(node, F.Const):
        return node.value
    if isinstance(node, F.Atom):
        return node.ap in env[node.var].letter(i)
    if isinstance(node, F.Not):
        return not at(node.arg, i)
    if isinstance(node, F.And):
        return at(node.left, i) and at(node.right, i)
    if isinstance(node, F.Or):
        return at(node.left, i) or at(node.right, i)
    if isinstance(node, F.Implies):
        return (not at(node.left, i)) or at(node.right, i)
    if isinstance(node, F.Iff):
        return at(node.left, i) == at(node.right, i)
    if isinstance(node, F.Next):
        return at(node.arg, i + 1 if i + 1 < p + q else p)
    path = _walk(p, q, i)
    if isinstance(node, F.Finally):
        return any(at(node.arg, j) for j in path)
    if isinstance(node, F.Globally):
        return all(at(node.arg, j) for j in path)

    def until(a, b):
        for j in path:
            if b(j):
                return True
            if not a(j):
                return False
        return False

    if isinstance(node, F.Until):
        return until(lambda j: at(node.left, j), lambda j: at(node.right, j))
    if isinstance(node, F.WeakUntil):
        return (until(lambda j: at(node.left, j), lambda j: at(node.right, j))
                or all(at(node.left, j) for j in path))
    if isinstance(node, F.Release):
        return not until(lambda j: not at(node.left, j), lambda j: not at(node.right, j))
    raise TypeError(node)


def naive_eval(model: Model, f: Formula) -> bool:
    quants = f.quantified

    def go(idx, env):
        if idx == len(quants):
            return naive_holds(f.body, env, 0)
        q, v = quants[idx]
        branches = (go(idx + 1, {**env, v: t}) for t in model.traces)
        return all(branches) if q is Quant.FORALL else any(branches)

    return go(0, {})


# ---------------------------------------------------------------------------
# Enumerating traces and models
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def all_traces(p: int, q: int, aps: tuple[str, ...]) -> tuple[LassoTrace, ...]:
    letters = [frozenset(c) for r in range(len(aps) + 1) for c in itertools.combinations(aps, r)]
    return tuple(LassoTrace(tuple(w[:p]), tuple(w[p:]))
                 for w in itertools.product(letters, repeat=p + q))


def model_indices(n_traces: int, m: int) -> np.ndarray:
    return np.array(list(itertools.product(range(n_traces), repeat=m)), dtype=np.int64).reshape(-1, m)


def truth_per_model(f: Formula, traces, idx: np.ndarray) -> np.ndarray:
    """formula value for every model idx[r] (a tuple of trace indices), vectorized."""
    n, T, m = len(f.variables), len(traces), idx.shape[1]
    full = np.broadcast_to(F.body_truth(f.body, f.variables, traces)[..., 0], (T,) * n)
    combos = np.array(list(itertools.product(range(m), repeat=n))).reshape(-1, n)
    picked = full[tuple(idx[:, combos[:, d]] for d in range(n))]  # models x m^n
    picked = picked.reshape((len(idx),) + (m,) * n)
    for d in range(n, 0, -1):
        q = f.quantified[d - 1][0]
        picked = picked.all(axis=d) if q is Quant.FORALL else picked.any(axis=d)
    return picked


def brute_force_sat(f: Formula, m: int, k: int) -> bool:
    """Does some m-trace model of a (l, k-l) shape satisfy f, for some l < k."""
    aps = tuple(f.aps)
    for l in range(k):
        traces = all_traces(l, k - l, aps)
        if truth_per_model(f, traces, model_indices(len(traces), m)).any():
            return True
    return False


# ---------------------------------------------------------------------------
# Three-valued evaluation of propositional DAGs
# ---------------------------------------------------------------------------


def kleene(p, assignment: dict, n: int):
    """(surely_true, surely_false) arrays; variables missing from assignment are unknown."""
    memo: dict[int, tuple] = {}
    unknown = (np.zeros(n, bool), np.zeros(n, bool))

    def go(node):
        hit = memo.get(id(node))
        if hit is not None:
            return hit
        if node.op == "true":
            out = (np.ones(n, bool), np.zeros(n, bool))
        elif node.op == "false":
            out = (np.zeros(n, bool), np.ones(n, bool))
        elif node.op == "lit":
            v = assignment.get(node.var)
            if v is None:
                out = unknown
            else:
                out = (v, ~v) if node.positive else (~v, v)
        elif node.op == "not":
            t, f = go(node.args[0])
            out = (f, t)
        else:
            parts = [go(c) for c in node.args]
            ts = [x[0] for x in parts]
            fs = [x[1] for x in parts]
            if node.op == "and":
                out = (np.logical_and.reduce(ts), np.logical_or.reduce(fs))
            else:
                out = (np.logical_or.reduce(ts), np.logical_and.reduce(fs))
        memo[id(node)] = out
        return out

    return go(p)


def matrix_truth_per_model(f: Formula, m: int, p: int, q: int, idx: np.ndarray,
                           chunk: int = 1 << 15) -> np.ndarray:
    """Truth of the assembled matrix under each model-fixed outer assignment.

    Inner trace-variable blocks are resolved by brute force over all their
    assignments, breadth first; rows that Kleene evaluation already decides
    are not expanded further.
    """
    aps = tuple(f.aps)
    k = p + q
    traces = all_traces(p, q, aps)
    prop = assemble(f, m, k)
    bits = np.array([[[a in t.letter(j) for j in range(k)] for a in aps] for t in traces],
                    dtype=bool).reshape(len(traces), len(aps), k)

    def outer_assignment(models):
        out = {LoopSel(j): np.full(len(models), j == p) for j in range(k)}
        for i in range(m):
            for ai, a in enumerate(aps):
                for j in range(k):
                    out[ApStep(trace_owner(i), a, j)] = bits[idx[models, i], ai, j]
        return out

    levels = f.quantified
    inner_vars = {v: [ApStep(v, a, j) for a in aps for j in range(k)] for _, v in levels}
    nbits = len(aps) * k
    values = np.array(list(itertools.product((False, True), repeat=nbits)), dtype=bool).reshape(-1, nbits)

    def evaluate_rows(models, inner):
        t = np.zeros(len(models), bool)
        f_ = np.zeros(len(models), bool)
        for s in range(0, len(models), chunk):
            sl = slice(s, s + chunk)
            asg = outer_assignment(models[sl])
            asg.update({var: arr[sl] for var, arr in inner.items()})
            t[sl], f_[sl] = kleene(prop, asg, len(models[sl]))
        return t, f_

    def resolve(level, models, inner):
        quant, v = levels[level]
        V = len(values)
        rows = np.repeat(models, V)
        sub = {var: np.repeat(arr, V) for var, arr in inner.items()}
        for b, var in enumerate(inner_vars[v]):
            sub[var] = np.tile(values[:, b], len(models))
        t, fl = evaluate_rows(rows, sub)
        undecided = ~(t | fl)
        val = t.copy()
        if undecided.any():
            if level + 1 == len(levels):
                raise AssertionError("fully assigned matrix evaluated to unknown")
            val[undecided] = resolve(level + 1, rows[undecided],
                                     {var: arr[undecided] for var, arr in sub.items()})
        val = val.reshape(len(models), V)
        return val.all(axis=1) if quant is Quant.FORALL else val.any(axis=1)

    return resolve(0, np.arange(len(idx)), {})


# ---------------------------------------------------------------------------
# Random formulas over every operator (the CLI generator skips W, R, constants)
# ---------------------------------------------------------------------------

_UN = (F.Not, F.Next, F.Finally, F.Globally)
_BIN = (F.And, F.Or, F.Implies, F.Iff, F.Until, F.WeakUntil, F.Release)


def random_body(rng: random.Random, size: int, aps, names):
    if size == 1:
        if rng.random() < 0.1:
            return F.Const(rng.random() < 0.5)
        return F.Atom(rng.choice(aps), rng.choice(names))
    if size == 2 or rng.random() < 0.3:
        return rng.choice(_UN)(random_body(rng, size - 1, aps, names))
    left = rng.randint(1, size - 2)
    return rng.choice(_BIN)(random_body(rng, left, aps, names),
                            random_body(rng, size - 1 - left, aps, names))


def random_formula(rng: random.Random, max_size: int, max_aps: int, max_vars: int) -> Formula:
    n_vars = rng.randint(1, max_vars)
    names = [f"v{i}" for i in range(n_vars)]
    groups, i = [], 0
    while i < n_vars:
        take = rng.randint(1, n_vars - i)
        groups.append(QuantGroup(rng.choice(list(Quant)), tuple(names[i:i + take])))
        i += take
    aps = [f"a{i}" for i in range(rng.randint(1, max_aps))]
    return Formula(tuple(groups), random_body(rng, rng.randint(1, max_size), aps, names))


# ---------------------------------------------------------------------------
# Aux projection of a CNF
# ---------------------------------------------------------------------------


def cnf_satisfiable_under(clauses, nvars: int, fixed: dict[int, np.ndarray]) -> np.ndarray:
    """For each row of fixed values (var id -> bool array), is the CNF satisfiable?

    Unit propagation runs on all rows at once; rows it cannot decide are
    handed to the reference QDPLL with the fixed values as unit clauses.
    """
    from ref_qbf import solve as ref_solve

    n = len(next(iter(fixed.values()))) if fixed else 1
    val = np.zeros((nvars + 1, n), np.int8)  # 1 true, -1 false, 0 open
    for v, arr in fixed.items():
        val[v] = np.where(arr, 1, -1)
    conflict = np.zeros(n, bool)
    lits = [np.array(c, dtype=np.int64) for c in clauses]
    changed = True
    while changed:
        changed = False
        for c in lits:
            lv = val[np.abs(c)] * np.sign(c)[:, None]  # literal values, shape len(c) x n
            sat = (lv == 1).any(axis=0)
            open_ = (lv == 0).sum(axis=0)
            conflict |= ~sat & (open_ == 0)
            unit = ~sat & (open_ == 1) & ~conflict
            if unit.any():
                which = np.argmax(lv == 0, axis=0)
                for row in np.nonzero(unit)[0]:
                    x = c[which[row]]
                    val[abs(x), row] = 1 if x > 0 else -1
                changed = True
    out = ~conflict
    undecided = out & (val[1:] == 0).any(axis=0)
    for row in np.nonzero(undecided)[0]:
        units = [[v if val[v, row] > 0 else -v] for v in range(1, nvars + 1) if val[v, row]]
        out[row] = ref_solve([("e", list(range(1, nvars + 1)))], [list(c) for c in clauses] + units) is not None
    for row in np.nonzero(out & ~undecided)[0]:
        # fully assigned without conflict: double check every clause
        assert all(any(val[abs(x), row] == (1 if x > 0 else -1) for x in c) for c in clauses)
    return out
