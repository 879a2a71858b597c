from fractions import Fraction

from mdpdec.core import FiniteMdp
from mdpdec.mec import check_sup_decisive_finite, end_components, mec_decomposition
from mdpdec.zoo import make_three_state

from corpus import corpus


def is_end_component(m, states, acts):
    if not states or not any(acts.values()):
        return False
    for s in states:
        for a in acts[s]:
            if any(t not in states for t, _ in m.transitions[s][a]):
                return False
    # strongly connected under the kept actions
    for start in states:
        seen, todo = {start}, [start]
        while todo:
            s = todo.pop()
            for a in acts[s]:
                for t, _ in m.transitions[s][a]:
                    if t not in seen:
                        seen.add(t)
                        todo.append(t)
        if seen != set(states):
            return False
    return True


def test_three_state_mecs():
    m = make_three_state()
    mecs = mec_decomposition(m)
    assert [set(c.states) for c in mecs] == [{"s0"}, {"Goal"}, {"bad"}]
    assert mecs[0].actions == {"s0": ["alpha"]}
    assert mecs[1].trivial


def test_two_cycle_with_exit():
    half = Fraction(1, 2)
    m = FiniteMdp(
        ["a", "b", "g"],
        {"a": {"x": [("b", 1)], "y": [("g", 1)]}, "b": {"x": [("a", half), ("b", half)]}},
        "a", "g",
    )
    comps = end_components(m)
    assert len(comps) == 1
    states, acts = comps[0]
    assert states == {"a", "b"}
    assert acts == {"a": ["x"], "b": ["x"]}
    report = check_sup_decisive_finite(m)
    assert not report
    assert "exits via y" in report.diagnosis


def test_corpus_components_are_end_components_and_disjoint():
    for m in corpus(200):
        comps = end_components(m)
        seen = set()
        for states, acts in comps:
            assert is_end_component(m, states, acts)
            assert not (seen & states)
            seen |= states


def test_three_state_not_sup_decisive():
    report = check_sup_decisive_finite(make_three_state())
    assert not report
    assert "s0" in report.diagnosis
