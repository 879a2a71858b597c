"""Exact rational oracles for finite MDPs.

Values are computed by solving the linear system of the Markov chain
induced by a pure positional scheduler with rational Gaussian elimination.
:func:`exact_oracle` either enumerates every pure positional scheduler or,
for arenas too large to enumerate, certifies a scheduler by exact strategy
improvement until its value vector is a Bellman fixpoint.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Hashable, Iterable, Mapping
from dataclasses import dataclass, field
from fractions import Fraction

from .core import FiniteMdp, Opt, PurePositionalScheduler
from .errors import EnumerationTooLarge

DEFAULT_MAX_SCHEDULERS = 1_000_000


def _size(x: Fraction) -> int:
    return x.numerator.bit_length() + x.denominator.bit_length()


def solve_linear_exact(
    rows: list[dict[int, Fraction]], rhs: list[Fraction]
) -> list[Fraction]:
    """Solve a square sparse system ``A x = b`` over the rationals.

    ``rows[i]`` maps column index to the nonzero coefficient.  Pivots are
    chosen among candidate rows by smallest bit size to limit coefficient
    growth.  Raises ``ZeroDivisionError`` on a singular system.
    """
    n = len(rows)
    a = [{j: Fraction(v) for j, v in r.items()} for r in rows]
    b = [Fraction(v) for v in rhs]
    col_rows: dict[int, set[int]] = {}
    for i, r in enumerate(a):
        for j in r:
            col_rows.setdefault(j, set()).add(i)
    done = [False] * n
    pivot_of = [-1] * n
    for k in range(n):
        cands = [i for i in col_rows.get(k, ()) if not done[i] and a[i].get(k, 0) != 0]
        if not cands:
            raise ZeroDivisionError(f"singular system at column {k}")
        p = min(cands, key=lambda i: (_size(a[i][k]), i))
        done[p] = True
        pivot_of[k] = p
        prow = a[p]
        inv = 1 / prow[k]
        for j in list(prow):
            prow[j] *= inv
        b[p] *= inv
        for i in list(col_rows.get(k, ())):
            if i == p:
                continue
            f = a[i].get(k, 0)
            if f == 0:
                continue
            row = a[i]
            for j, v in prow.items():
                nv = row.get(j, 0) - f * v
                if nv == 0:
                    if j in row:
                        del row[j]
                        col_rows[j].discard(i)
                else:
                    if j not in row:
                        col_rows.setdefault(j, set()).add(i)
                    row[j] = nv
            b[i] -= f * b[p]
    return [b[pivot_of[k]] for k in range(n)]


def _chain_rows(m: FiniteMdp, choice: Mapping[Hashable, str], targets: set[Hashable]):
    succ = {}
    for s in m.states:
        if s in targets:
            continue
        rows = m.transitions.get(s)
        if rows:
            succ[s] = rows[choice[s]] if choice.get(s) in rows else next(iter(rows.values()))
    return succ


def chain_reach_exact(
    m: FiniteMdp, choice: Mapping[Hashable, str], targets: Iterable[Hashable] | None = None
) -> dict[Hashable, Fraction]:
    """Exact probability of reaching ``targets`` from every state under a pure positional choice.

    ``targets`` defaults to the goal.  States without a chosen action use
    their first action; absorbing states loop.
    """
    targets = {m.goal_key} if targets is None else set(targets)
    succ = _chain_rows(m, choice, targets)
    pred: dict[Hashable, set[Hashable]] = {}
    for s, row in succ.items():
        for t, p in row:
            if p:
                pred.setdefault(t, set()).add(s)
    good = set(targets)
    todo = list(targets)
    while todo:
        t = todo.pop()
        for s in pred.get(t, ()):
            if s not in good:
                good.add(s)
                todo.append(s)
    unknown = [s for s in m.states if s in good and s not in targets]
    col = {s: i for i, s in enumerate(unknown)}
    rows, rhs = [], []
    for s in unknown:
        r: dict[int, Fraction] = {col[s]: Fraction(1)}
        c = Fraction(0)
        for t, p in succ[s]:
            p = Fraction(p)
            if t in targets:
                c += p
            elif t in col:
                r[col[t]] = r.get(col[t], 0) - p
        rows.append({j: v for j, v in r.items() if v != 0})
        rhs.append(c)
    x = solve_linear_exact(rows, rhs) if rows else []
    out = {s: Fraction(0) for s in m.states}
    for s in targets:
        out[s] = Fraction(1)
    for s, v in zip(unknown, x):
        out[s] = v
    return out


def _reachable(m: FiniteMdp) -> set[Hashable]:
    seen = {m.initial_key}
    todo = [m.initial_key]
    while todo:
        s = todo.pop()
        for row in m.transitions.get(s, {}).values():
            for t, _ in row:
                if t not in seen:
                    seen.add(t)
                    todo.append(t)
    return seen


@dataclass
class ExactValue:
    value: Fraction
    witness: PurePositionalScheduler
    choice: dict[Hashable, str] = field(default_factory=dict)
    method: str = "enumerate"
    values: dict[Hashable, Fraction] | None = None


def scheduler_count(m: FiniteMdp, states: Iterable[Hashable] | None = None) -> int:
    states = m.states if states is None else states
    return math.prod(len(m.transitions.get(s, {})) or 1 for s in states)


def _decision_states(m: FiniteMdp) -> list[Hashable]:
    from .transform import can_reach

    live = _reachable(m) & can_reach(m, {m.goal_key})
    return [s for s in m.states if s in live and len(m.transitions.get(s, {})) > 1]


def _default_choice(m: FiniteMdp) -> dict[Hashable, str]:
    return {s: next(iter(rows)) for s, rows in m.transitions.items() if rows}


def exact_oracle(
    m: FiniteMdp,
    opt: Opt,
    max_schedulers: int = DEFAULT_MAX_SCHEDULERS,
    method: str = "auto",
) -> ExactValue:
    """Exact optimal reachability value at the initial state, with an optimal witness.

    ``method="enumerate"`` tries every pure positional scheduler (ties go to
    the lexicographically smallest assignment); ``"certify"`` runs exact
    strategy improvement; ``"auto"`` enumerates when the number of
    schedulers is within ``max_schedulers``.
    """
    opt = Opt.parse(opt)
    decide = _decision_states(m)
    count = scheduler_count(m, decide)
    if method == "auto":
        method = "enumerate" if count <= max_schedulers else "certify"
    if method == "certify":
        return _certify(m, opt)
    if method != "enumerate":
        raise ValueError(f"unknown method {method!r}")
    if count > max_schedulers:
        raise EnumerationTooLarge(f"{count} pure positional schedulers exceed cap {max_schedulers}")
    base = _default_choice(m)
    best_val = None
    best_choice = None
    options = [list(m.transitions[s]) for s in decide]
    for combo in itertools.product(*options):
        choice = dict(base)
        choice.update(zip(decide, combo))
        val = chain_reach_exact(m, choice)[m.initial_key]
        if best_val is None or (val > best_val if opt is Opt.SUP else val < best_val):
            best_val, best_choice = val, choice
    return ExactValue(best_val, PurePositionalScheduler(best_choice), best_choice, "enumerate")


def _q(row, v) -> Fraction:
    return sum((Fraction(p) * v[t] for t, p in row), Fraction(0))


def _certify(m: FiniteMdp, opt: Opt) -> ExactValue:
    from .solver import interval_iteration, qualitative_sets

    zero, _ = qualitative_sets(m, opt)
    hint = interval_iteration(m, opt, 1e-12)
    guess = dict(zip(hint.keys, hint.lower))
    choice: dict[Hashable, str] = {}
    for s, rows in m.transitions.items():
        if not rows:
            continue
        if opt is Opt.INF and s in zero:
            choice[s] = next(a for a, row in rows.items() if all(t in zero for t, _ in row))
            continue
        scores = {a: sum(float(p) * guess[t] for t, p in row) for a, row in rows.items()}
        choice[s] = (max if opt is Opt.SUP else min)(scores, key=scores.get)
    rounds = 0
    while True:
        rounds += 1
        v = chain_reach_exact(m, choice)
        improved = False
        for s, rows in m.transitions.items():
            if not rows or (opt is Opt.INF and s in zero):
                continue
            cur = _q(rows[choice[s]], v)
            for a, row in rows.items():
                q = _q(row, v)
                if (q > cur) if opt is Opt.SUP else (q < cur):
                    choice[s], cur = a, q
                    improved = True
        if not improved:
            return ExactValue(
                v[m.initial_key], PurePositionalScheduler(dict(choice)), dict(choice),
                f"certify({rounds})", v,
            )


def is_bellman_fixpoint(m: FiniteMdp, v: Mapping[Hashable, Fraction], opt: Opt) -> bool:
    for s, rows in m.transitions.items():
        if rows and s != m.goal_key:
            if opt.pick([_q(row, v) for row in rows.values()]) != v[s]:
                return False
    return v[m.goal_key] == 1


def is_decisive_bruteforce(
    m: FiniteMdp, opt: Opt, max_schedulers: int = DEFAULT_MAX_SCHEDULERS
) -> tuple[bool, dict[Hashable, str] | None]:
    """Check ``opt``-decisiveness from the initial state by definition.

    Every pure positional scheduler must reach the goal or ``Avoid^opt``
    with probability exactly 1.  Returns the verdict and a violating
    scheduler, if any.
    """
    opt = Opt.parse(opt)
    targets = {m.goal_key} | set(m.avoid_set(opt))
    live = _reachable(m)
    decide = [s for s in m.states if s in live and s not in targets
              and len(m.transitions.get(s, {})) > 1]
    if scheduler_count(m, decide) > max_schedulers:
        raise EnumerationTooLarge("too many schedulers for the brute-force check")
    base = _default_choice(m)
    for combo in itertools.product(*[list(m.transitions[s]) for s in decide]):
        choice = dict(base)
        choice.update(zip(decide, combo))
        if chain_reach_exact(m, choice, targets)[m.initial_key] != 1:
            return False, choice
    return True, None
