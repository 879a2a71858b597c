import json
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mdpdec.core import AvoidStatus, Opt
from mdpdec.errors import InapplicableRule, SchemaError
from mdpdec.lcs import (
    LcsSystem,
    LoseAllWithProb,
    PerMessageIID,
    Rule,
    apply_rule,
    applicable,
    bounded_demo,
    embed_lcs,
    lcs_from_dict,
    lcs_step,
    lcs_to_dict,
    read_lcs,
    unbounded_demo,
)

HALF = Fraction(1, 2)


def two_letter():
    rules = (Rule("q", "send", "b", "q"), Rule("q", "receive", "a", "q"), Rule("q", "nop", None, "p"))
    return LcsSystem(("q", "p"), ("a", "b"), rules, "q")


def test_send_then_iid_loss_quarters():
    sys = two_letter()
    out = dict(lcs_step(sys, PerMessageIID(HALF), ("q", ("a",)), sys.rules[0]))
    q = Fraction(1, 4)
    assert out == {("q", ("a", "b")): q, ("q", ("a",)): q, ("q", ("b",)): q, ("q", ()): q}


def test_receive_and_nop():
    sys = two_letter()
    assert apply_rule(("q", ("a", "b")), sys.rules[1]) == ("q", ("b",))
    assert apply_rule(("q", ("a",)), sys.rules[2]) == ("p", ("a",))
    with pytest.raises(InapplicableRule):
        apply_rule(("q", ("b",)), sys.rules[1])
    with pytest.raises(InapplicableRule):
        apply_rule(("q", ()), sys.rules[1])
    with pytest.raises(InapplicableRule):
        apply_rule(("p", ()), sys.rules[0])
    assert [r.label for r in applicable(sys, ("q", ("b",)))] == ["send(b)->q", "nop->p"]


@given(st.lists(st.sampled_from("ab"), max_size=7), st.integers(1, 9))
def test_iid_loss_is_a_distribution_over_subwords(word, k):
    word = tuple(word)
    lam = Fraction(k, 10)
    out = PerMessageIID(lam).apply(word)
    assert sum(p for _, p in out) == 1
    for u, p in out:
        assert p > 0
        it = iter(word)
        assert all(c in it for c in u)
    keep_all = dict(out)[word]
    assert keep_all >= (1 - lam) ** len(word)


def test_lose_all_model():
    loss = LoseAllWithProb()
    assert dict(loss.apply(("a", "b"))) == {("a", "b"): Fraction(3, 4), (): Fraction(1, 4)}
    assert loss.apply(()) == [((), 1)]


def test_iid_parameter_range():
    with pytest.raises(ValueError):
        PerMessageIID(Fraction(1))


def test_system_validation():
    with pytest.raises(SchemaError):
        LcsSystem(("q",), ("a",), (Rule("q", "send", "z", "q"),), "q")
    with pytest.raises(SchemaError):
        LcsSystem(("q",), ("a",), (Rule("q", "jump", "a", "q"),), "q")
    with pytest.raises(SchemaError):
        LcsSystem(("q",), ("a",), (Rule("q", "send", "a", "x"),), "q")
    with pytest.raises(SchemaError):
        LcsSystem(("q",), ("a",), (), "x")
    with pytest.raises(SchemaError):
        LcsSystem(("q",), ("a",), (Rule("q", "send", "a", "q"),) * 2, "q")


def test_embedding_try_and_restart():
    m = embed_lcs(bounded_demo(2), PerMessageIID(HALF))
    s = m.intern(("q1", ("a", "a")))
    assert [a.name for a in m.enabled(s)] == ["send(a)->q2", "receive(a)->q0", "try", "restart"]
    assert m.successors(s, "try").as_dict() == {"Goal": Fraction(3, 4), "bad": Fraction(1, 4)}
    assert m.successors(s, "restart").as_dict() == {("q0", ()): 1}
    empty = m.initial
    assert m.successors(empty, "try").as_dict() == {"bad": 1}
    assert m.name(s) == "(q1,aa)"
    assert m.name(empty) == "(q0,ε)"


def test_embedding_avoid_oracle():
    m = embed_lcs(bounded_demo(2))
    assert m.avoid_status(m.initial, Opt.SUP) is AvoidStatus.NO
    assert m.avoid_status(m.initial, Opt.INF) is AvoidStatus.YES
    assert m.avoid_status(m.intern("bad"), Opt.SUP) is AvoidStatus.YES
    mute = LcsSystem(("q",), ("a",), (Rule("q", "nop", None, "q"),), "q")
    e = embed_lcs(mute)
    assert e.avoid_status(e.initial, Opt.SUP) is AvoidStatus.YES


def test_bounded_demo_channel_is_bounded():
    m = embed_lcs(bounded_demo(3))
    seen = {m.initial_key}
    todo = [m.initial_key]
    while todo:
        k = todo.pop()
        if not isinstance(k, tuple):
            continue
        assert len(k[1]) <= 3
        ref = m.intern(k)
        for a in m.enabled(ref):
            for t, _ in m.successors(ref, a):
                if t.key not in seen:
                    seen.add(t.key)
                    todo.append(t.key)
    assert len(seen) < 100


def test_unbounded_demo_grows():
    m = embed_lcs(unbounded_demo())
    s = m.initial
    for _ in range(5):
        dist = m.successors(s, "send(a)->q0")
        s = max(dist.states(), key=lambda t: len(t.key[1]))
    assert s.key == ("q0", ("a",) * 5)


def test_json_round_trip(tmp_path):
    sys = two_letter()
    path = tmp_path / "lcs.json"
    path.write_text(json.dumps(lcs_to_dict(sys)))
    assert read_lcs(path) == sys
    with pytest.raises(SchemaError):
        lcs_from_dict({"control_states": ["q"], "alphabet": [], "initial": "q", "rules": [], "x": 0})
    with pytest.raises(SchemaError):
        lcs_from_dict({"control_states": ["q"], "alphabet": [], "initial": "q", "rules": [{"op": "nop"}]})
