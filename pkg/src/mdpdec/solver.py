"""Numerics on finite arenas.

Step-bounded backward induction for the scheme-1 bounds, qualitative
precomputation, and interval iteration for unbounded reachability.
"""

from __future__ import annotations

import enum
from collections import deque
from collections.abc import Hashable, Mapping
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .core import FiniteMdp, Opt, Prob, StateRef
from .errors import IterationBudgetExceeded, MissingValue
from .mec import end_components
from .transform import LayeredArena, can_reach, sure_safe

DEFAULT_MAX_BACKUPS = 10_000_000


class BoundedObjective(enum.Enum):
    """Step-bounded objectives evaluated by backward induction.

    ``REACH_WITHIN``: reach the goal within n steps.
    ``REACH_OR_SURVIVE``: reach the goal or avoid ``bad`` during n steps.
    ``SURVIVE``: avoid both goal and ``bad`` during n steps.
    """

    REACH_WITHIN = "reach"
    REACH_OR_SURVIVE = "reach-or-survive"
    SURVIVE = "survive"

    def terminal(self, is_goal: bool, is_bad: bool) -> int:
        if self is BoundedObjective.REACH_WITHIN:
            return int(is_goal)
        if self is BoundedObjective.REACH_OR_SURVIVE:
            return int(not is_bad)
        return int(not (is_goal or is_bad))


@dataclass
class ValueVector:
    values: dict[Hashable, Prob]
    iteration_index: int = 0

    def __getitem__(self, key):
        return self.values[key]


def _rows_of(arena) -> Mapping[Hashable, list[tuple[str, list[tuple[Hashable, Prob]]]]]:
    if isinstance(arena, FiniteMdp):
        return {s: list(rows.items()) for s, rows in arena.transitions.items()}
    if isinstance(arena, LayeredArena):
        return {s: arena.edges(s) for s in arena.layer(max(arena.n - 1, 0)) if arena.n > 0}
    return arena


def _bad_keys(arena) -> set:
    if isinstance(arena, FiniteMdp):
        return set(arena.bad)
    if isinstance(arena, LayeredArena):
        return {arena.bad_key} if arena.bad_key is not None else set()
    return set()


def bellman_backup(arena, v: ValueVector, opt: Opt, goal: Hashable | None = None,
                   bad: set | None = None) -> ValueVector:
    """One application of the Bellman operator.

    ``arena`` is a :class:`FiniteMdp`, a :class:`LayeredArena` or a mapping
    from state keys to ``[(action, [(successor, p), ...]), ...]``.  Goal maps
    to 1, bad states to 0, every other state with actions to the optimum
    over actions of the expected value; states without actions keep their
    value.
    """
    opt = Opt.parse(opt)
    rows = _rows_of(arena)
    goal = getattr(arena, "goal_key", None) if goal is None else goal
    bad = _bad_keys(arena) if bad is None else set(bad)
    out = dict(v.values)
    for s, acts in rows.items():
        if s == goal or s in bad or not acts:
            continue
        sums = []
        for _, row in acts:
            total = 0
            for t, p in row:
                if t not in v.values:
                    raise MissingValue(f"no value for successor {t!r}")
                total += p * v.values[t]
            sums.append(total)
        out[s] = opt.pick(sums)
    if goal in out:
        out[goal] = 1
    for b in bad:
        if b in out:
            out[b] = 0
    return ValueVector(out, v.iteration_index + 1)


@dataclass
class Compiled:
    """Sparse matrix form of a finite arena: one row per (state, action) choice."""

    keys: list[Hashable]
    index: dict[Hashable, int]
    owners: np.ndarray  # state index of every choice
    starts: np.ndarray  # first choice of each state that has choices
    choosers: np.ndarray  # state indices having choices, ascending
    actions: list[str]
    matrix: csr_matrix

    @property
    def n(self) -> int:
        return len(self.keys)


def compile_rows(keys: list[Hashable], rows_of) -> Compiled:
    index = {k: i for i, k in enumerate(keys)}
    owners, actions, data, cols, indptr = [], [], [], [], [0]
    for k in keys:
        rows = rows_of(k)
        if not rows:
            continue
        i = index[k]
        for act, row in rows:
            owners.append(i)
            actions.append(act)
            for t, p in row:
                cols.append(index[t])
                data.append(float(p))
            indptr.append(len(cols))
    owners_arr = np.asarray(owners, dtype=np.int64)
    matrix = csr_matrix(
        (np.asarray(data, dtype=float), np.asarray(cols, dtype=np.int64), np.asarray(indptr)),
        shape=(len(owners), len(keys)),
    )
    if len(owners_arr):
        first = np.r_[True, owners_arr[1:] != owners_arr[:-1]]
        starts = np.flatnonzero(first)
        choosers = owners_arr[starts]
    else:
        starts = np.zeros(0, dtype=np.int64)
        choosers = np.zeros(0, dtype=np.int64)
    return Compiled(keys, index, owners_arr, starts, choosers, actions, matrix)


def compile_finite(m: FiniteMdp) -> Compiled:
    return compile_rows(m.states, lambda k: list(m.transitions.get(k, {}).items()))


def _reduce(c: Compiled, q: np.ndarray, opt: Opt) -> np.ndarray:
    if opt is Opt.SUP:
        return np.maximum.reduceat(q, c.starts)
    return np.minimum.reduceat(q, c.starts)


def _argopt(c: Compiled, q: np.ndarray, opt: Opt) -> np.ndarray:
    """Index of the first optimal choice of every chooser."""
    best = _reduce(c, q, opt)
    hit = np.isclose(q, np.repeat(best, np.diff(np.r_[c.starts, len(q)])), rtol=0, atol=1e-15)
    out = np.empty(len(c.starts), dtype=np.int64)
    ends = np.r_[c.starts[1:], len(q)]
    for j, (a, b) in enumerate(zip(c.starts, ends)):
        out[j] = a + int(np.argmax(hit[a:b]))
    return out


@dataclass
class BoundedResult:
    value: Prob
    decisions: list[dict[Hashable, str]] | None = None


def bounded_reach(
    arena: LayeredArena,
    opt: Opt,
    objective: BoundedObjective,
    exact: bool = False,
    decisions: bool = False,
) -> Prob | BoundedResult:
    """Optimal probability of a step-bounded objective from the initial state.

    Backward induction over the layers of ``arena``: values on ``L_n`` are the
    objective's terminal values, then each layer ``d`` is the clamped Bellman
    backup of layer ``d + 1``.  With ``decisions=True`` the layer-indexed
    optimal choices (a memoryful optimal scheduler for the bounded objective)
    are returned alongside the value.
    """
    opt = Opt.parse(opt)
    n = arena.n
    keys = arena.layer(n)
    goal, bad = arena.goal_key, arena.bad_key
    if exact:
        return _bounded_reach_exact(arena, opt, objective, decisions)
    term = np.array(
        [objective.terminal(k == goal, k == bad) for k in keys], dtype=float
    )
    w = term.copy()
    table: list[dict[Hashable, str]] = []
    if n > 0:
        inner = set(arena.layer(n - 1))
        c = compile_rows(keys, lambda k: arena.edges(k) if k in inner else None)
        sizes = arena.layer_sizes()
        for d in range(n - 1, -1, -1):
            if c.matrix.shape[0] == 0:
                break
            q = c.matrix @ w
            best = _reduce(c, q, opt)
            nxt = w.copy()
            nxt[c.choosers] = best
            if decisions:
                pick = _argopt(c, q, opt)
                live = c.choosers < sizes[d]
                table.append(
                    {keys[i]: c.actions[j] for i, j in zip(c.choosers[live], pick[live])}
                )
            w = nxt
        table.reverse()
    value = float(w[0])
    if decisions:
        return BoundedResult(value, table)
    return value


def _bounded_reach_exact(arena, opt, objective, decisions):
    n = arena.n
    keys = arena.layer(n)
    goal, bad = arena.goal_key, arena.bad_key
    w = {k: Fraction(objective.terminal(k == goal, k == bad)) for k in keys}
    table = []
    for d in range(n - 1, -1, -1):
        nxt = dict(w)
        picks = {}
        for s in arena.layer(d):
            rows = arena.edges(s)
            if not rows:
                continue
            sums = [sum((p * w[t] for t, p in row), Fraction(0)) for _, row in rows]
            best = opt.pick(sums)
            nxt[s] = best
            picks[s] = rows[sums.index(best)][0]
        table.append(picks)
        w = nxt
    table.reverse()
    value = w[arena.initial_key]
    if decisions:
        return BoundedResult(value, table)
    return value


def prob1_exists(m: FiniteMdp, targets: set[Hashable]) -> set[Hashable]:
    """States from which some scheduler reaches ``targets`` almost surely.

    Nested fixpoint: shrink ``u`` to the states that can reach ``targets``
    using only actions whose support stays in ``u``.  Action deaths are
    propagated by a worklist so chains of forced removals cost one round.
    """
    targets = set(targets)
    owner: list[Hashable] = []
    support: list[tuple] = []
    users: dict[Hashable, list[int]] = {}
    for s, rows in m.transitions.items():
        if s in targets:
            continue
        for row in rows.values():
            i = len(owner)
            owner.append(s)
            sup = tuple({t for t, p in row if p})
            support.append(sup)
            for t in sup:
                users.setdefault(t, []).append(i)
    alive = [True] * len(owner)
    count: dict[Hashable, int] = {}
    for s in owner:
        count[s] = count.get(s, 0) + 1
    u = set(m.states)
    gone: deque = deque()

    def drop(s):
        u.discard(s)
        gone.append(s)

    while True:
        # reachability of targets through live actions
        r = {t for t in targets if t in u}
        todo = deque(r)
        while todo:
            t = todo.popleft()
            for i in users.get(t, ()):
                s = owner[i]
                if alive[i] and s in u and s not in r:
                    r.add(s)
                    todo.append(s)
        if r == u:
            return u
        for s in list(u - r):
            drop(s)
        while gone:
            t = gone.popleft()
            for i in users.get(t, ()):
                if alive[i]:
                    alive[i] = False
                    s = owner[i]
                    count[s] -= 1
                    if count[s] == 0 and s in u:
                        drop(s)


def qualitative_sets(m: FiniteMdp, opt: Opt) -> tuple[set[Hashable], set[Hashable]]:
    """Keys with value exactly 0 and exactly 1 under ``opt``."""
    opt = Opt.parse(opt)
    goal = m.goal_key
    if opt is Opt.SUP:
        zero = set(m.states) - can_reach(m, {goal})
        one = prob1_exists(m, {goal})
    else:
        zero = sure_safe(m, {goal})
        one = set(m.states) - can_reach(m, zero)
    return zero, one


def qualitative_states(m: FiniteMdp, opt: Opt) -> tuple[set[StateRef], set[StateRef]]:
    zero, one = qualitative_sets(m, opt)
    return {m.intern(k) for k in zero}, {m.intern(k) for k in one}


@dataclass
class IntervalSolution:
    keys: list[Hashable]
    lower: np.ndarray
    upper: np.ndarray
    sweeps: int
    converged: bool = True

    def at(self, key) -> tuple[float, float]:
        i = self.keys.index(key)
        return float(self.lower[i]), float(self.upper[i])


def _quotient_mecs(m: FiniteMdp, maybe: set[Hashable]):
    """Collapse every MEC inside ``maybe`` into one representative state.

    Returns (keys, rows_of, rep) where ``rep`` maps every original key to its
    representative.  A representative keeps only the actions of its members
    that leave the component.
    """
    comps = end_components(m, [s for s in m.states if s in maybe])
    rep = {s: s for s in m.states}
    members: dict[Hashable, list[Hashable]] = {}
    for states, _ in comps:
        head = next(s for s in m.states if s in states)
        members[head] = [s for s in m.states if s in states]
        for s in states:
            rep[s] = head
    keys = [s for s in m.states if rep[s] == s]

    def rows_of(k):
        if k not in members:
            rows = m.transitions.get(k)
            if not rows:
                return None
            return [(a, _fold(row, rep)) for a, row in rows.items()]
        inside = set(members[k])
        out = []
        for s in members[k]:
            for a, row in m.transitions.get(s, {}).items():
                if any(t not in inside for t, _ in row):
                    out.append((f"{m.name_of(s)}:{a}", _fold(row, rep)))
        return out or None

    return keys, rows_of, rep


def _fold(row, rep):
    if all(rep[t] == t for t, _ in row):
        return row
    acc: dict[Hashable, Prob] = {}
    for t, p in row:
        r = rep[t]
        acc[r] = acc.get(r, 0) + p
    return list(acc.items())


def _component_order(graph: csr_matrix) -> tuple[np.ndarray, list[np.ndarray]]:
    """Strongly connected components listed so that every component precedes its predecessors."""
    ncomp, labels = connected_components(graph, directed=True, connection="strong")
    coo = graph.tocoo()
    cross = labels[coo.row] != labels[coo.col]
    src, dst = labels[coo.row[cross]], labels[coo.col[cross]]
    out_deg = np.bincount(np.unique(np.c_[src, dst], axis=0)[:, 0], minlength=ncomp) if len(src) else np.zeros(ncomp, dtype=np.int64)
    preds: list[list[int]] = [[] for _ in range(ncomp)]
    for a, b in set(zip(src.tolist(), dst.tolist())):
        preds[b].append(a)
    out_deg = out_deg.tolist()
    ready = deque(i for i in range(ncomp) if out_deg[i] == 0)
    order = []
    while ready:
        k = ready.popleft()
        order.append(k)
        for a in preds[k]:
            out_deg[a] -= 1
            if out_deg[a] == 0:
                ready.append(a)
    members = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[members], np.arange(ncomp + 1))
    groups = [members[bounds[k]:bounds[k + 1]] for k in range(ncomp)]
    return labels, [groups[k] for k in order]


def _topological_sweeps(c, lo, hi, free_state, target, opt, tol, max_backups) -> int:
    """Interval iteration one strongly connected component at a time, successors first.

    Only components reachable from ``target`` are touched.  Every component
    is iterated until its largest gap drops below ``tol``; backups do not
    widen gaps, so the target meets ``tol`` as well.  Returns the number of
    component sweeps performed.
    """
    if not free_state[target] or c.matrix.shape[0] == 0:
        return 0
    n = c.n
    nch = c.matrix.shape[0]
    owner_map = csr_matrix((np.ones(nch), (c.owners, np.arange(nch))), shape=(n, nch))
    graph = (owner_map @ c.matrix).tocsr()
    graph = graph.multiply(free_state[:, None]).tocsr()
    live = breadth_first_order(graph, target, directed=True, return_predecessors=False)
    live = np.sort(live[free_state[live]])
    sub = graph[live][:, live]
    _, comps = _component_order(sub)
    ends = np.r_[c.starts[1:], nch]
    pos = np.full(n, -1, dtype=np.int64)
    pos[c.choosers] = np.arange(len(c.choosers))
    indptr, indices, data = c.matrix.indptr, c.matrix.indices, c.matrix.data
    diag = set(np.flatnonzero(sub.diagonal()).tolist())
    better_lo, better_hi = (max, min)
    pick = max if opt is Opt.SUP else min
    sweeps = 0
    backups = 0
    for comp in comps:
        states = live[comp]
        if len(comp) == 1 and int(comp[0]) not in diag:
            s = int(states[0])
            j = pos[s]
            a_lo, a_hi = [], []
            for r in range(c.starts[j], ends[j]):
                cols = indices[indptr[r]:indptr[r + 1]]
                w = data[indptr[r]:indptr[r + 1]]
                a_lo.append(float(w @ lo[cols]))
                a_hi.append(float(w @ hi[cols]))
            lo[s] = better_lo(lo[s], pick(a_lo))
            hi[s] = better_hi(hi[s], pick(a_hi))
            sweeps += 1
            backups += 1
            continue
        j = pos[states]
        rows = np.concatenate([np.arange(c.starts[k], ends[k]) for k in j])
        counts = ends[j] - c.starts[j]
        local_starts = np.r_[0, np.cumsum(counts)[:-1]]
        mat = c.matrix[rows]
        red = np.maximum.reduceat if opt is Opt.SUP else np.minimum.reduceat
        while np.max(hi[states] - lo[states]) >= tol:
            if backups > max_backups:
                gap = float(np.max(hi[states] - lo[states]))
                raise IterationBudgetExceeded(
                    f"gap {gap:.3g} after {sweeps} sweeps ({backups} state backups)"
                )
            lo[states] = np.maximum(lo[states], red(mat @ lo, local_starts))
            hi[states] = np.minimum(hi[states], red(mat @ hi, local_starts))
            sweeps += 1
            backups += len(states)
    return sweeps


def interval_iteration(
    m: FiniteMdp,
    opt: Opt,
    tol: float,
    max_backups: int = DEFAULT_MAX_BACKUPS,
    at: Hashable | None = None,
    lower_hint: Mapping[Hashable, float] | None = None,
    upper_hint: Mapping[Hashable, float] | None = None,
    strict: bool = True,
) -> IntervalSolution:
    """Bracket the reachability values of ``m`` from below and above.

    Iterates until ``upper - lower < tol`` at state ``at`` (the initial state
    by default).  Values of all states are returned; only ``at`` is
    guaranteed to meet the tolerance.  Optional hints are known bounds on
    individual states (warm start); the caller vouches for their soundness.
    With ``strict=False`` an exhausted budget returns the current (still
    sound, but wider than ``tol``) bracket with ``converged`` unset.
    """
    opt = Opt.parse(opt)
    if tol <= 0:
        raise ValueError("tol must be positive")
    at = m.initial_key if at is None else at
    zero, one = qualitative_sets(m, opt)
    if opt is Opt.SUP:
        maybe = set(m.states) - zero - one
        keys, rows_of, rep = _quotient_mecs(m, maybe)
    else:
        keys = list(m.states)
        rep = {s: s for s in keys}

        def rows_of(k):
            rows = m.transitions.get(k)
            return list(rows.items()) if rows else None

    c = compile_rows(keys, rows_of)
    n = c.n
    is_zero = np.array([k in zero for k in keys])
    is_one = np.array([k in one for k in keys])
    lo = np.where(is_one, 1.0, 0.0)
    hi = np.where(is_zero, 0.0, 1.0)
    # choosers that are neither clamped
    free = ~(is_zero[c.choosers] | is_one[c.choosers])
    idx = c.choosers[free]
    # a quotient state whose actions all stay inside can only be a closed component
    no_exit = np.array([k not in zero and k not in one and rows_of(k) is None for k in keys])
    hi[no_exit] = 0.0
    for hint, better in ((lower_hint, np.maximum), (upper_hint, np.minimum)):
        if not hint:
            continue
        vec = lo if better is np.maximum else hi
        for k, v in hint.items():
            j = c.index.get(rep.get(k)) if k in rep else None
            if j is not None:
                vec[j] = better(vec[j], v)
    target = c.index[rep[at]]
    free_state = np.zeros(n, dtype=bool)
    free_state[idx] = True
    converged = True
    try:
        sweeps = _topological_sweeps(c, lo, hi, free_state, target, opt, tol, max_backups)
    except IterationBudgetExceeded:
        if strict:
            raise
        sweeps, converged = -1, False
    full_lo = np.array([lo[c.index[rep[s]]] for s in m.states])
    full_hi = np.array([hi[c.index[rep[s]]] for s in m.states])
    return IntervalSolution(list(m.states), full_lo, full_hi, sweeps, converged)


def solve_reach_finite(
    m: FiniteMdp, opt: Opt, tol: float = 1e-9, max_backups: int = DEFAULT_MAX_BACKUPS
) -> tuple[float, float]:
    """Certified bracket ``(lower, upper)`` of the optimal reachability value at the initial state."""
    sol = interval_iteration(m, opt, tol, max_backups)
    return sol.at(m.initial_key)
