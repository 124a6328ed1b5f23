import itertools

import numpy as np
import pytest
from helpers import all_traces, naive_holds
from hypothesis import given, settings
from hypothesis import strategies as st
from strategies import APS, VARS, bodies

from hyperqsat import formula as F
from hyperqsat.unroll import (
    FALSE, TRUE, ApStep, Encoder, LoopSel, NotNNFError, UnassignedVariable, conj, disj,
    iff, lit, loop_constraint, neg, substitute, unroll_body, variables,
)


def assignment_for(env_traces, k, l):
    out = {LoopSel(j): j == l for j in range(k)}
    for var, t in env_traces.items():
        for a in APS:
            for j in range(k):
                out[ApStep(var, a, j)] = a in t.letter(j)
    return out


def test_constant_folding_and_sharing():
    x, y = lit("x"), lit("y")
    assert conj(x, TRUE) is x and conj(x, FALSE) is FALSE
    assert disj(x, TRUE) is TRUE and disj(FALSE, FALSE) is FALSE
    assert conj(x, conj(y, x)).args == (x, y)
    assert neg(neg(x)) is x and lit("x") is x


def test_iff_truth_table():
    x, y = lit("x"), lit("y")
    for a, b in itertools.product((False, True), repeat=2):
        assert substitute(iff(x, y), {"x": a, "y": b}) == (a == b)


def test_substitute_vectorized_and_unassigned():
    p = disj(conj(lit("x"), lit("y", False)), lit("z"))
    xs = np.array([0, 0, 1, 1, 1], bool)
    ys = np.array([0, 1, 0, 1, 1], bool)
    zs = np.array([0, 0, 0, 0, 1], bool)
    assert list(substitute(p, {"x": xs, "y": ys, "z": zs})) == [False, False, True, False, True]
    with pytest.raises(UnassignedVariable):
        substitute(p, {"x": True})


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_loop_constraint_exactly_one(k):
    c = loop_constraint(k)
    for bits in itertools.product((False, True), repeat=k):
        asg = {LoopSel(j): b for j, b in enumerate(bits)}
        assert substitute(c, asg) == (sum(bits) == 1)
    with pytest.raises(ValueError):
        loop_constraint(0)


def test_loop_constraint_k1_is_single_literal():
    assert loop_constraint(1) is lit(LoopSel(0))


def test_rejects_non_nnf():
    with pytest.raises(NotNNFError):
        unroll_body(F.parse("exists p. G a_p").body, 2)
    with pytest.raises(NotNNFError):
        unroll_body(F.parse("exists p. ~X a_p").body, 2)


def test_path_wraps_to_loop():
    enc = Encoder(4)
    assert enc.path(0, 2) == [0, 1, 2, 3]
    assert enc.path(3, 1) == [3, 1, 2]
    assert enc.path(2, 2) == [2, 3]


def test_next_at_end_goes_to_loop():
    enc = Encoder(3)
    body = F.nnf(F.parse("exists p. X a_p").body)
    assert enc.enc(body, 2, 1) is lit(ApStep("p", "a", 1))
    assert enc.enc(body, 0, 1) is lit(ApStep("p", "a", 1))


@settings(max_examples=250, deadline=None)
@given(bodies, st.integers(1, 3), st.data())
def test_unrolling_is_exact(body, k, data):
    # for every lasso of shape (l, k - l) the unrolled body agrees with the
    # direct semantics at position 0
    l = data.draw(st.integers(0, k - 1))
    traces = all_traces(l, k - l, APS)
    env = {v: data.draw(st.sampled_from(traces)) for v in VARS}
    prop = unroll_body(F.nnf(body), k)
    assert substitute(prop, assignment_for(env, k, l)) == naive_holds(body, env)


@settings(max_examples=100, deadline=None)
@given(bodies, st.integers(1, 3))
def test_memo_shared_encoder_matches_fresh(body, k):
    body = F.nnf(body)
    shared = Encoder(k)
    for l in range(k):
        for i in range(k):
            for env in ({}, {"p": "@t0", "q": "@t1"}):
                assert repr(shared.enc(body, i, l, env)) == repr(Encoder(k).enc(body, i, l, env))


def test_memo_key_ignores_unrelated_bindings():
    body = F.nnf(F.parse("exists p q. F a_p").body)
    enc = Encoder(2)
    one = enc.enc(body, 0, 0, {"p": "@t0", "q": "@t0"})
    two = enc.enc(body, 0, 0, {"p": "@t0", "q": "@t1"})
    assert one is two
    assert set(variables(one)) == {ApStep("@t0", "a", 0), ApStep("@t0", "a", 1)}


def test_exists_a_and_next_not_a_needs_two_steps():
    body = F.nnf(F.parse("exists p. a_p & X ~a_p").body)
    for k in (1, 2):
        prop = unroll_body(body, k)
        sat = any(substitute(prop, dict(zip(variables(prop), bits)))
                  for bits in itertools.product((False, True), repeat=len(variables(prop))))
        assert sat == (k == 2)
