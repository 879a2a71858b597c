from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdpdec.core import (
    AvoidStatus,
    Distribution,
    FiniteMdp,
    Opt,
    PurePositionalScheduler,
    StateRef,
    TerminalReason,
    avoid_status,
    enabled,
    simulate,
    successors,
    validate_distribution,
)
from mdpdec.errors import DisabledAction, ProbabilityError, SchedulerGap, UnknownState
from mdpdec.zoo import WalkParams, make_ml, make_random_walk, make_three_state

HALF = Fraction(1, 2)


def names(dist):
    return {s.key: p for s, p in dist}


def test_walk_actions_and_successors():
    w = make_random_walk(WalkParams(Fraction(1, 3), HALF))
    s0 = w.initial
    assert [a.name for a in enabled(w, s0)] == ["alpha", "beta"]
    assert names(successors(w, s0, "alpha")) == {"Goal": Fraction(2, 3), ("s", 1): Fraction(1, 3)}
    s1 = w.lookup(("s", 1))
    assert names(successors(w, s1, "beta")) == {"Goal": HALF, "bad": HALF}
    assert names(successors(w, s1, "alpha")) == {("s", 2): Fraction(1, 3), ("s", 0): Fraction(2, 3)}


def test_goal_is_absorbing():
    w = make_random_walk()
    goal = w.intern("Goal")
    assert enabled(w, goal) == []
    assert w.is_goal(goal)


def test_three_state_actions():
    m = make_three_state()
    assert [a.name for a in m.enabled(m.initial)] == ["alpha", "beta"]
    assert names(m.successors(m.initial, "alpha")) == {"s0": 1}


def test_disabled_action_and_unknown_state():
    m = make_three_state()
    with pytest.raises(DisabledAction):
        m.successors(m.initial, "gamma")
    with pytest.raises(UnknownState):
        m.enabled(StateRef(99, "nowhere"))
    w = make_random_walk()
    with pytest.raises(UnknownState):
        w.lookup(("s", 5))


def test_avoid_status_examples():
    w = make_random_walk()
    assert avoid_status(w, w.intern("bad"), Opt.INF) is AvoidStatus.YES
    ml = make_ml()
    s0 = ml.initial
    assert avoid_status(ml, s0, Opt.INF) is AvoidStatus.YES
    assert avoid_status(ml, s0, Opt.SUP) is AvoidStatus.NO
    assert avoid_status(ml, ml.intern("Goal"), Opt.INF) is AvoidStatus.NO


def test_validate_distribution_examples():
    assert validate_distribution([("Goal", HALF), ("bad", HALF)])
    assert validate_distribution([("s", 1)])
    assert not validate_distribution([("s", 0.3), ("t", 0.3)])
    assert not validate_distribution([])
    assert not validate_distribution([("s", HALF), ("s", HALF)])
    assert not validate_distribution([("s", Fraction(3, 2)), ("t", Fraction(-1, 2))])
    assert validate_distribution([("s", 0.1), ("t", 0.2), ("u", 0.7)])
    assert not validate_distribution([("s", Fraction(1, 3)), ("t", Fraction(1, 3))])


@given(st.lists(st.integers(1, 50), min_size=1, max_size=6))
def test_normalized_rationals_validate(weights):
    total = sum(weights)
    assert validate_distribution([(i, Fraction(w, total)) for i, w in enumerate(weights)])


def test_invalid_model_distribution_raises():
    m = FiniteMdp(["a", "g"], {"a": {"x": [("g", Fraction(9, 10))]}}, "a", "g")
    with pytest.raises(ProbabilityError):
        m.successors(m.initial, "x")


def test_interning_is_stable():
    w = make_random_walk()
    a = w.intern(("s", 3))
    b = w.intern(("s", 3))
    assert a is b
    assert a.canonical_key == repr(("s", 3)).encode()


def test_purity_of_repeated_queries():
    w = make_random_walk()
    first = w.successors(w.initial, "alpha")
    assert all(w.successors(w.initial, "alpha") == first for _ in range(1000))


def test_distribution_helpers():
    m = make_three_state()
    d = m.successors(m.initial, "beta")
    assert isinstance(d, Distribution)
    assert d.total() == 1
    assert d.prob(m.intern("Goal")) == HALF
    assert d.prob(m.intern("s0")) == 0
    assert d.as_dict() == {"Goal": HALF, "bad": HALF}


def test_simulate_three_state_beta_resolves_in_one_step():
    m = make_three_state()
    path = simulate(m, PurePositionalScheduler.constant("beta"), 10, rng_seed=5)
    assert len(path) == 2
    assert path.terminal_reason in (TerminalReason.HIT_GOAL, TerminalReason.HIT_AVOID)


def test_simulate_horizon_zero():
    m = make_three_state()
    path = simulate(m, PurePositionalScheduler.constant("beta"), 0, rng_seed=1)
    assert [s.key for s in path.states] == ["s0"]
    assert path.terminal_reason is TerminalReason.HORIZON_EXHAUSTED


def test_simulate_is_reproducible():
    w = make_random_walk(WalkParams(Fraction(2, 3), HALF))
    sched = PurePositionalScheduler.constant("alpha")
    a = simulate(w, sched, 500, rng_seed=11)
    b = simulate(w, sched, 500, rng_seed=11)
    assert a == b


def test_simulate_walk_subcritical_hits_goal():
    # up-probability 1/3: the walk returns to the goal almost surely
    w = make_random_walk(WalkParams(Fraction(1, 3), HALF))
    sched = PurePositionalScheduler.constant("alpha")
    hits = sum(
        simulate(w, sched, 10**6, rng_seed=seed).terminal_reason is TerminalReason.HIT_GOAL
        for seed in range(30)
    )
    assert hits == 30


def test_scheduler_gap():
    m = make_three_state()
    with pytest.raises(SchedulerGap):
        simulate(m, PurePositionalScheduler({}), 5, rng_seed=0)
    with pytest.raises(SchedulerGap):
        simulate(m, PurePositionalScheduler({"s0": "gamma"}), 5, rng_seed=0)


def test_scheduler_by_name():
    m = make_three_state()
    sched = PurePositionalScheduler({"s0": "beta"})
    assert sched.action_for(m, m.initial).name == "beta"


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_seeded_paths_match(seed):
    w = make_random_walk()
    sched = PurePositionalScheduler.constant("alpha")
    assert simulate(w, sched, 50, seed) == simulate(w, sched, 50, seed)


def test_opt_helpers():
    assert Opt.parse("inf") is Opt.INF
    assert Opt.parse(Opt.SUP) is Opt.SUP
    assert Opt.INF.pick([3, 1, 2]) == 1
    assert Opt.SUP.pick([3, 1, 2]) == 3
    with pytest.raises(ValueError):
        Opt.parse("median")
