import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdpdec.core import FiniteMdp, Opt
from mdpdec.errors import IterationBudgetExceeded, MissingValue
from mdpdec.exact import chain_reach_exact
from mdpdec.solver import (
    BoundedObjective,
    ValueVector,
    bellman_backup,
    bounded_reach,
    interval_iteration,
    prob1_exists,
    qualitative_sets,
    solve_reach_finite,
)
from mdpdec.transform import Explorer, collapse
from mdpdec.zoo import WalkParams, make_random_walk, make_three_state

from corpus import brute_values, corpus, random_mdp

CORPUS = corpus(200)
R = BoundedObjective.REACH_WITHIN
RS = BoundedObjective.REACH_OR_SURVIVE
S = BoundedObjective.SURVIVE


def three_arena(n, opt=Opt.SUP):
    return Explorer(collapse(make_three_state(), opt)).arena(n)


def test_bounded_three_state():
    assert bounded_reach(three_arena(0), Opt.SUP, R) == 0
    assert bounded_reach(three_arena(0), Opt.SUP, RS) == 1
    for n in (1, 5, 40):
        assert bounded_reach(three_arena(n), Opt.SUP, R) == 0.5
        assert bounded_reach(three_arena(n), Opt.SUP, RS) == 1
        assert bounded_reach(three_arena(n), Opt.SUP, R, exact=True) == Fraction(1, 2)


def test_bounded_decisions_are_layer_indexed():
    res = bounded_reach(three_arena(3), Opt.SUP, R, decisions=True)
    assert res.value == 0.5
    assert len(res.decisions) == 3
    # waiting is optimal while steps remain; the last step must gamble
    assert res.decisions[0] == {"s0": "alpha"}
    assert res.decisions[2] == {"s0": "beta"}


@pytest.mark.parametrize("opt", list(Opt))
def test_bounded_monotone_in_horizon(opt):
    view = collapse(make_random_walk(WalkParams(Fraction(2, 3), Fraction(1, 2))), opt)
    ex = Explorer(view)
    lows = [bounded_reach(ex.arena(n), opt, R) for n in range(1, 30)]
    ups = [bounded_reach(ex.arena(n), opt, RS) for n in range(1, 30)]
    assert all(a <= b + 1e-15 for a, b in zip(lows, lows[1:]))
    assert all(a >= b - 1e-15 for a, b in zip(ups, ups[1:]))
    assert all(lo <= up for lo, up in zip(lows, ups))


@pytest.mark.parametrize("seed", range(0, 200, 7))
def test_bounded_float_matches_exact(seed):
    m = CORPUS[seed]
    for opt in Opt:
        if m.initial_key in m.avoid_set(opt):
            continue
        arena = Explorer(collapse(m, opt)).arena(6)
        for obj in BoundedObjective:
            f = bounded_reach(arena, opt, obj)
            e = bounded_reach(arena, opt, obj, exact=True)
            assert f == pytest.approx(float(e), abs=1e-12)


@pytest.mark.parametrize("seed", range(0, 120, 3))
def test_survive_splits_reach_or_survive_on_chains(seed):
    # one action per state: the three events are disjoint unions
    m = random_mdp(seed, max_actions=1)
    if m.initial_key in m.avoid_set(Opt.SUP):
        return
    arena = Explorer(collapse(m, Opt.SUP)).arena(8)
    r, s, rs = (bounded_reach(arena, Opt.SUP, o, exact=True) for o in (R, S, RS))
    assert r + s == rs


def test_bellman_backup_example():
    m = make_three_state()
    v = ValueVector({"s0": 0, "Goal": 0, "bad": 0})
    out = bellman_backup(m, v, Opt.SUP)
    assert out.values == {"s0": 0, "Goal": 1, "bad": 0}
    assert out.iteration_index == 1
    out = bellman_backup(m, out, Opt.SUP)
    assert out["s0"] == Fraction(1, 2)
    with pytest.raises(MissingValue):
        bellman_backup(m, ValueVector({"s0": 0}), Opt.SUP)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 199), st.sampled_from(list(Opt)), st.integers(0, 2**32))
def test_bellman_backup_is_monotone(seed, opt, vseed):
    m = CORPUS[seed]
    rng = random.Random(vseed)
    v = {s: Fraction(rng.randint(0, 8), 8) for s in m.states}
    w = {s: min(Fraction(1), x + Fraction(rng.randint(0, 8), 8)) for s, x in v.items()}
    bv = bellman_backup(m, ValueVector(v), opt)
    bw = bellman_backup(m, ValueVector(w), opt)
    assert all(bv[s] <= bw[s] for s in m.states)


@pytest.mark.parametrize("opt", list(Opt))
def test_qualitative_sets_match_brute_force(opt):
    for m in CORPUS[:80]:
        vals = brute_values(m, opt)
        if vals is None:
            continue
        zero, one = qualitative_sets(m, opt)
        assert zero == {s for s, v in vals.items() if v == 0}
        assert one == {s for s, v in vals.items() if v == 1}


def test_prob1_exists_example():
    # s0 --a--> s1 (1/2) | goal (1/2); s1 --b--> s0; s1 --c--> bad
    m = FiniteMdp(
        ["s0", "s1", "goal", "bad"],
        {"s0": {"a": [("s1", Fraction(1, 2)), ("goal", Fraction(1, 2))]},
         "s1": {"b": [("s0", 1)], "c": [("bad", 1)]}},
        "s0", "goal",
    )
    assert prob1_exists(m, {"goal"}) == {"s0", "s1", "goal"}


@pytest.mark.parametrize("opt", list(Opt))
def test_interval_iteration_brackets_exact_value(opt):
    for m in CORPUS:
        vals = brute_values(m, opt)
        if vals is None:
            continue
        sol = interval_iteration(m, opt, 1e-8)
        for s, lo, hi in zip(sol.keys, sol.lower, sol.upper):
            assert lo - 1e-12 <= float(vals[s]) <= hi + 1e-12
        lo, hi = sol.at(m.initial_key)
        assert hi - lo < 1e-8


def test_interval_iteration_three_state():
    assert solve_reach_finite(make_three_state(), Opt.SUP, 1e-9) == (0.5, 0.5)
    assert solve_reach_finite(make_three_state(), Opt.INF, 1e-9) == (0.0, 0.0)
    with pytest.raises(ValueError):
        interval_iteration(make_three_state(), Opt.SUP, 0)


def slow_chain(k=10):
    """Long cycle with a tiny exit: convergence needs many sweeps."""
    states = [f"c{i}" for i in range(k)] + ["goal", "bad"]
    eps = Fraction(1, 100)
    trans = {f"c{i}": {"go": [(f"c{i + 1}", 1)]} for i in range(k - 1)}
    trans[f"c{k - 1}"] = {"go": [("c0", 1 - 2 * eps), ("goal", eps), ("bad", eps)]}
    return FiniteMdp(states, trans, "c0", "goal", bad=["bad"])


def test_budget_strict_and_partial():
    m = slow_chain()
    with pytest.raises(IterationBudgetExceeded):
        interval_iteration(m, Opt.SUP, 1e-9, max_backups=1000)
    sol = interval_iteration(m, Opt.SUP, 1e-9, max_backups=1000, strict=False)
    assert not sol.converged
    lo, hi = sol.at("c0")
    assert lo <= 0.5 <= hi
    assert hi - lo > 1e-9
    full = interval_iteration(m, Opt.SUP, 1e-9)
    assert full.converged
    assert full.at("c0")[0] == pytest.approx(0.5, abs=1e-9)


def test_hints_are_respected_and_sound():
    m = slow_chain()
    exact = chain_reach_exact(m, {})
    lo_hint = {s: float(v) - 1e-6 for s, v in exact.items()}
    hi_hint = {s: float(v) + 1e-6 for s, v in exact.items()}
    sol = interval_iteration(m, Opt.SUP, 1e-9, lower_hint=lo_hint, upper_hint=hi_hint)
    cold = interval_iteration(m, Opt.SUP, 1e-9)
    assert sol.at("c0")[0] == pytest.approx(0.5, abs=1e-9)
    assert 0 <= sol.sweeps <= cold.sweeps


def test_results_are_arrays():
    sol = interval_iteration(make_three_state(), Opt.SUP, 1e-6)
    assert isinstance(sol.lower, np.ndarray)
    assert (sol.lower <= sol.upper).all()
