"""Model constructions used by both approximation schemes.

* :func:`compute_avoid_finite` -- exact avoid sets of a finite MDP.
* :func:`collapse` -- merge the certified avoid set into a fresh sink ``bad^opt``.
* :func:`explore` -- breadth-first layers of the collapsed model.
* :func:`slice` -- restrict to the states reachable within ``n`` steps,
  redirecting leaving mass to a fresh sink ``s_bot^n``.
"""

from __future__ import annotations

import os
from collections import deque
from collections.abc import Hashable
from dataclasses import dataclass, field
from fractions import Fraction

from .core import AvoidStatus, FiniteMdp, Model, Opt, Prob, Sink, StateRef
from .errors import BranchingExplosion, TrivialZero

DEFAULT_STATE_CAP = 5_000_000


def default_state_cap() -> int:
    env = os.environ.get("MDPDEC_STATE_CAP")
    return int(env) if env else DEFAULT_STATE_CAP


def _predecessors(m: FiniteMdp) -> dict[Hashable, set[Hashable]]:
    pred: dict[Hashable, set[Hashable]] = {s: set() for s in m.states}
    for src, rows in m.transitions.items():
        for row in rows.values():
            for dst, p in row:
                if p > 0:
                    pred[dst].add(src)
    return pred


def can_reach(m: FiniteMdp, targets: set[Hashable]) -> set[Hashable]:
    """States with a path (any actions) into ``targets``."""
    pred = _predecessors(m)
    seen = set(targets)
    todo = deque(targets)
    while todo:
        t = todo.popleft()
        for s in pred[t]:
            if s not in seen:
                seen.add(s)
                todo.append(s)
    return seen


def sure_safe(m: FiniteMdp, unsafe: set[Hashable]) -> set[Hashable]:
    """Greatest set of states outside ``unsafe`` where some scheduler stays forever.

    A state without enabled actions stays put, so it is safe unless unsafe.
    """
    x = set(s for s in m.states if s not in unsafe)
    good = {s: len(rows) for s, rows in m.transitions.items() if rows}
    users: dict[Hashable, list[tuple[Hashable, str]]] = {}
    for s, rows in m.transitions.items():
        for a, row in rows.items():
            for t in {t for t, p in row if p}:
                users.setdefault(t, []).append((s, a))
    dead: set[tuple[Hashable, str]] = set()
    todo = deque(s for s in m.states if s not in x)
    while todo:
        t = todo.popleft()
        for s, a in users.get(t, ()):
            if (s, a) in dead:
                continue
            dead.add((s, a))
            good[s] -= 1
            if good[s] == 0 and s in x:
                x.discard(s)
                todo.append(s)
    return x


def compute_avoid_finite(m: FiniteMdp, opt: Opt) -> set[StateRef]:
    """``Avoid^opt(Goal)`` of a finite MDP.

    For ``sup`` these are the states without any path to the goal; for
    ``inf`` the states from which some pure positional scheduler surely
    avoids the goal.
    """
    opt = Opt.parse(opt)
    goal = m.goal_key
    if opt is Opt.SUP:
        reach = can_reach(m, {goal})
        keys = [s for s in m.states if s not in reach]
    else:
        safe = sure_safe(m, {goal})
        keys = [s for s in m.states if s in safe]
    return {m.intern(k) for k in keys}


class CollapsedView(Model):
    """``M^opt``: the base model with its certified avoid set merged into ``bad^opt``.

    Built lazily -- every transition query consults ``avoid_status`` of the
    successors.  States whose status is unknown are kept as regular states
    and recorded in :attr:`unknown_states`; the upper bounds computed on such
    a view are then not certified.
    """

    def __init__(self, base: Model, opt: Opt) -> None:
        super().__init__()
        self.base = base
        self.opt = Opt.parse(opt)
        self.bad_key = Sink(f"bad^{self.opt.value}")
        self.unknown_states: set[Hashable] = set()
        self.finite = base.finite
        self.finitely_action_branching = base.finitely_action_branching
        init = base.initial
        status = base.avoid_status(init, self.opt)
        if status is AvoidStatus.YES:
            raise TrivialZero(
                f"initial state {base.name(init)!r} is in Avoid^{self.opt.value}: the value is 0"
            )
        if status is AvoidStatus.UNKNOWN:
            self.unknown_states.add(init.key)

    @property
    def bad_ref(self) -> StateRef:
        return self.intern(self.bad_key)

    @property
    def degraded(self) -> bool:
        return bool(self.unknown_states)

    @property
    def initial_key(self):
        return self.base.initial_key

    @property
    def goal_key(self):
        return self.base.goal_key

    def actions_key(self, key):
        if key == self.bad_key:
            return []
        return [a.name for a in self.base.enabled(self.base.intern(key))]

    def transition_key(self, key, action):
        dist = self.base.successors(self.base.intern(key), action)
        out: list[tuple[Hashable, Prob]] = []
        to_bad: Prob = 0
        for t, p in dist:
            status = self.base.avoid_status(t, self.opt)
            if status is AvoidStatus.YES:
                to_bad += p
                continue
            if status is AvoidStatus.UNKNOWN:
                self.unknown_states.add(t.key)
            out.append((t.key, p))
        if to_bad:
            out.append((self.bad_key, to_bad))
        return out

    def avoid_key(self, key, opt):
        if key == self.bad_key:
            return AvoidStatus.YES
        if key in self.unknown_states:
            return AvoidStatus.UNKNOWN
        return AvoidStatus.NO

    def name_of(self, key) -> str:
        if isinstance(key, Sink):
            return key.label
        return self.base.name_of(key)


def collapse(model: Model, opt: Opt) -> CollapsedView:
    return CollapsedView(model, opt)


def collapse_finite(m: FiniteMdp, opt: Opt) -> FiniteMdp:
    """Explicit ``M^opt`` over every state of a finite MDP (reachable or not)."""
    opt = Opt.parse(opt)
    avoid = m.avoid_set(opt)
    bad = Sink(f"bad^{opt.value}")
    if m.initial_key in avoid:
        raise TrivialZero("initial state is in the avoid set: the value is 0")
    states = [s for s in m.states if s not in avoid] + [bad]
    trans = {}
    for src in states[:-1]:
        rows = m.transitions.get(src)
        if not rows:
            continue
        trans[src] = {}
        for act, row in rows.items():
            kept = [(t, p) for t, p in row if t not in avoid]
            lost = sum((p for t, p in row if t in avoid), Fraction(0))
            if lost:
                kept.append((bad, lost))
            trans[src][act] = kept
    names = {s: m.name_of(s) for s in m.states}
    names[bad] = bad.label
    return FiniteMdp(states, trans, m.initial_key, m.goal_key, bad=[bad], names=names)


@dataclass
class _Exploration:
    """Breadth-first frontier shared by all arenas of one collapsed view."""

    view: Model
    state_cap: int
    order: list[Hashable] = field(default_factory=list)
    depth: dict[Hashable, int] = field(default_factory=dict)
    edges: dict[Hashable, list[tuple[str, list[tuple[Hashable, Prob]]]]] = field(
        default_factory=dict
    )
    layer_end: list[int] = field(default_factory=list)
    expanded: int = 0

    def __post_init__(self):
        init = self.view.initial_key
        self.view.intern(init)
        self.order.append(init)
        self.depth[init] = 0
        self.layer_end.append(1)

    def expand_below(self, n: int) -> None:
        """Cache the distributions of every state at depth < n (hence discover layer n)."""
        while len(self.layer_end) <= n:
            d = len(self.layer_end) - 1
            stop = self.layer_end[d]
            while self.expanded < stop:
                key = self.order[self.expanded]
                self.expanded += 1
                ref = self.view.intern(key)
                rows = []
                for lab in self.view.enabled(ref):
                    dist = self.view.successors(ref, lab)
                    row = [(t.key, p) for t, p in dist]
                    rows.append((lab.name, row))
                    for t, _ in row:
                        if t not in self.depth:
                            self.depth[t] = d + 1
                            self.order.append(t)
                self.edges[key] = rows
            if len(self.order) > self.state_cap:
                raise BranchingExplosion(
                    f"layer {d + 1} holds {len(self.order)} states (cap {self.state_cap})"
                )
            self.layer_end.append(len(self.order))


@dataclass(frozen=True)
class LayeredArena:
    """States reachable within ``n`` steps of a collapsed view, by layer.

    ``layer(d)`` is the set ``L_d`` of states at BFS distance ``<= d``; the
    distributions of every state in ``L_{n-1}`` are cached in ``edges``.
    """

    view: Model
    n: int
    _exp: _Exploration

    @property
    def depth(self) -> int:
        return self.n

    def layer(self, d: int) -> list[Hashable]:
        if not 0 <= d <= self.n:
            raise IndexError(d)
        return self._exp.order[: self._exp.layer_end[d]]

    @property
    def layers(self) -> list[list[Hashable]]:
        return [self.layer(d) for d in range(self.n + 1)]

    @property
    def states(self) -> list[Hashable]:
        return self.layer(self.n)

    def layer_sizes(self) -> list[int]:
        return self._exp.layer_end[: self.n + 1]

    def edges(self, key: Hashable) -> list[tuple[str, list[tuple[Hashable, Prob]]]]:
        return self._exp.edges[key]

    def has_edges(self, key: Hashable) -> bool:
        return key in self._exp.edges

    def distance(self, key: Hashable) -> int:
        return self._exp.depth[key]

    @property
    def initial_key(self):
        return self.view.initial_key

    @property
    def goal_key(self):
        return self.view.goal_key

    @property
    def bad_key(self):
        return getattr(self.view, "bad_key", None)

    @property
    def states_explored(self) -> int:
        return len(self._exp.order)


class Explorer:
    """Incremental breadth-first exploration of a (collapsed) view."""

    def __init__(self, view: Model, state_cap: int | None = None) -> None:
        self.view = view
        self._exp = _Exploration(view, state_cap or default_state_cap())

    def arena(self, n: int) -> LayeredArena:
        if n < 0:
            raise ValueError("depth must be nonnegative")
        self._exp.expand_below(n)
        return LayeredArena(self.view, n, self._exp)

    def slice(self, n: int) -> SlicedMdp:
        if n < 0:
            raise ValueError("depth must be nonnegative")
        self._exp.expand_below(n + 1)
        return slice(LayeredArena(self.view, n, self._exp))


def explore(view: Model, n: int, state_cap: int | None = None) -> LayeredArena:
    """Breadth-first layers ``L_0 .. L_n`` of ``view`` (FIFO, model successor order)."""
    return Explorer(view, state_cap).arena(n)


@dataclass(frozen=True)
class SlicedMdp:
    """``M_n^opt`` as an explicit finite MDP plus redirect bookkeeping."""

    mdp: FiniteMdp
    bottom: Sink
    depth: int
    redirects: tuple[tuple[Hashable, str, Prob], ...]
    degraded: bool = False

    @property
    def states(self):
        return self.mdp.states

    def bottom_reachable(self) -> bool:
        return bool(self.redirects)


def slice(arena: LayeredArena) -> SlicedMdp:
    """Finite MDP over ``L_n`` plus ``s_bot^n``.

    Each action of a state in ``L_n`` keeps its in-slice successors and sends
    the leaving mass to ``s_bot^n`` (a Dirac when every successor leaves).
    """
    n = arena.n
    exp = arena._exp
    if len(exp.layer_end) < n + 2:
        exp.expand_below(n + 1)
    members = arena.layer(n)
    inside = set(members)
    bottom = Sink(f"s_bot^{n}")
    view = arena.view
    trans: dict[Hashable, dict[str, list[tuple[Hashable, Prob]]]] = {}
    redirects = []
    for key in members:
        rows = exp.edges.get(key)
        if not rows:
            continue
        trans[key] = {}
        for act, row in rows:
            kept = [(t, p) for t, p in row if t in inside]
            gone = [p for t, p in row if t not in inside]
            if gone:
                mass = sum(gone[1:], gone[0])
                kept.append((bottom, mass))
                redirects.append((key, act, mass))
            trans[key][act] = kept
    names = {k: view.name_of(k) for k in members}
    names[bottom] = bottom.label
    bad = [k for k in members if isinstance(k, Sink)]
    extra = [] if arena.goal_key in inside else [arena.goal_key]
    names.update({k: view.name_of(k) for k in extra})
    mdp = FiniteMdp(members + extra + [bottom], trans, arena.initial_key, arena.goal_key, bad=bad, names=names)
    return SlicedMdp(mdp, bottom, n, tuple(redirects), bool(getattr(view, "degraded", False)))
