"""Hypothesis strategies for formulas and small models."""

from helpers import all_traces
from hypothesis import strategies as st

from hyperqsat import formula as F
from hyperqsat.formula import Formula, Model, Quant, QuantGroup

VARS = ("p", "q", "r")
APS = ("a", "b")

leaf = st.one_of(
    st.builds(F.Atom, st.sampled_from(APS), st.sampled_from(VARS)),
    st.sampled_from([F.TRUE, F.FALSE]),
)
bodies = st.recursive(
    leaf,
    lambda sub: st.one_of(
        st.builds(lambda c, x: c(x), st.sampled_from(F.UNARY), sub),
        st.builds(lambda c, x, y: c(x, y), st.sampled_from(F.BINARY), sub, sub),
    ),
    max_leaves=8,
)


@st.composite
def formulas(draw):
    body = draw(bodies)
    quants = draw(st.lists(st.sampled_from(list(Quant)), min_size=3, max_size=3))
    split = draw(st.integers(1, 3))
    groups = [QuantGroup(quants[0], VARS[:split])]
    if split < 3:
        groups.append(QuantGroup(quants[1], VARS[split:]))
    return Formula(tuple(groups), body)


@st.composite
def models(draw, max_traces=3):
    p = draw(st.integers(0, 2))
    q = draw(st.integers(1, 2))
    traces = all_traces(p, q, APS)
    picks = draw(st.lists(st.integers(0, len(traces) - 1), min_size=1, max_size=max_traces))
    return Model(tuple(traces[i] for i in picks))
