from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdpdec.core import FiniteMdp, Opt
from mdpdec.errors import EnumerationTooLarge
from mdpdec.exact import (
    chain_reach_exact,
    exact_oracle,
    is_bellman_fixpoint,
    is_decisive_bruteforce,
    solve_linear_exact,
)
from mdpdec.mec import check_sup_decisive_finite
from mdpdec.zoo import make_three_state

from corpus import brute_values, corpus

CORPUS = corpus(200)


def test_linear_solver_small():
    # 2x + y = 3, x + 3y = 5
    rows = [{0: Fraction(2), 1: Fraction(1)}, {0: Fraction(1), 1: Fraction(3)}]
    assert solve_linear_exact(rows, [Fraction(3), Fraction(5)]) == [Fraction(4, 5), Fraction(7, 5)]
    with pytest.raises(ZeroDivisionError):
        solve_linear_exact([{0: Fraction(1)}, {0: Fraction(2)}], [Fraction(1), Fraction(2)])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32))
def test_linear_solver_against_substitution(n, seed):
    import random

    rng = random.Random(seed)
    # diagonally dominant, hence nonsingular
    rows = []
    for i in range(n):
        r = {j: Fraction(rng.randint(-3, 3), rng.randint(1, 4)) for j in range(n) if j != i}
        r[i] = sum(abs(v) for v in r.values()) + 1
        rows.append({j: v for j, v in r.items() if v})
    x_true = [Fraction(rng.randint(-9, 9), rng.randint(1, 9)) for _ in range(n)]
    rhs = [sum(v * x_true[j] for j, v in r.items()) for r in rows]
    assert solve_linear_exact(rows, rhs) == x_true


def test_chain_reach_gamblers_ruin():
    # fair walk on 0..4 absorbed at both ends: reach 4 from i with prob i/4
    states = [0, 1, 2, 3, 4]
    half = Fraction(1, 2)
    trans = {i: {"step": [(i - 1, half), (i + 1, half)]} for i in (1, 2, 3)}
    m = FiniteMdp(states, trans, 2, 4)
    v = chain_reach_exact(m, {})
    assert v == {i: Fraction(i, 4) for i in states}


def test_three_state_oracle():
    m = make_three_state()
    sup = exact_oracle(m, Opt.SUP)
    inf = exact_oracle(m, Opt.INF)
    assert sup.value == Fraction(1, 2)
    assert sup.choice["s0"] == "beta"
    assert inf.value == 0
    assert inf.choice["s0"] == "alpha"


@pytest.mark.parametrize("opt", list(Opt))
def test_enumerate_and_certify_agree(opt):
    for m in CORPUS:
        e = exact_oracle(m, opt, method="enumerate")
        c = exact_oracle(m, opt, method="certify")
        assert e.value == c.value
        assert is_bellman_fixpoint(m, c.values, opt)
        # the witness achieves the value
        assert chain_reach_exact(m, e.choice)[m.initial_key] == e.value


@pytest.mark.parametrize("opt", list(Opt))
def test_oracle_matches_per_state_brute_force(opt):
    for m in CORPUS[:60]:
        vals = brute_values(m, opt)
        if vals is not None:
            assert exact_oracle(m, opt).value == vals[m.initial_key]


def test_enumeration_cap():
    m = CORPUS[3]
    with pytest.raises(EnumerationTooLarge):
        exact_oracle(m, Opt.SUP, max_schedulers=0, method="enumerate")
    assert exact_oracle(m, Opt.SUP, max_schedulers=0).method.startswith("certify")
    with pytest.raises(ValueError):
        exact_oracle(m, Opt.SUP, method="guess")


def test_decisive_bruteforce_three_state():
    m = make_three_state()
    ok, witness = is_decisive_bruteforce(m, Opt.SUP)
    assert not ok and witness["s0"] == "alpha"
    assert is_decisive_bruteforce(m, Opt.INF) == (True, None)


def test_sup_decisiveness_agrees_with_brute_force():
    for m in CORPUS:
        brute, _ = is_decisive_bruteforce(m, Opt.SUP)
        assert bool(check_sup_decisive_finite(m)) == brute
