"""Core domain types and the lazily queried MDP abstraction.

Models expose their states through hashable *keys*.  The :class:`Model` base
class interns keys into :class:`StateRef` objects on first discovery, caches
successor distributions so that repeated queries are pure, and enforces the
structural invariants (goal is absorbing, distributions are valid).
"""

from __future__ import annotations

import abc
import enum
import threading
from collections.abc import Callable, Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from .errors import (
    DisabledAction,
    ProbabilityError,
    SchedulerGap,
    UnknownState,
)

Prob = Union[Fraction, float]

FLOAT_SUM_TOL = 1e-12


class Opt(enum.Enum):
    INF = "inf"
    SUP = "sup"

    def pick(self, values):
        return min(values) if self is Opt.INF else max(values)

    @classmethod
    def parse(cls, text: str | Opt) -> Opt:
        if isinstance(text, Opt):
            return text
        try:
            return cls(text.lower())
        except ValueError:
            raise ValueError(f"opt must be 'inf' or 'sup', got {text!r}") from None


class AvoidStatus(enum.Enum):
    YES = "yes"
    NO = "no"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Sink:
    """Fresh absorbing state introduced by a model transformation."""

    label: str

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True, eq=False)
class StateRef:
    """Interned handle of a model state.

    Equality and hashing go through ``key`` only, so two refs are equal iff
    they denote the same model state.
    """

    id: int
    key: Hashable

    def __eq__(self, other):
        if not isinstance(other, StateRef):
            return NotImplemented
        return self.key == other.key

    def __hash__(self):
        return hash(self.key)

    @property
    def canonical_key(self) -> bytes:
        return repr(self.key).encode("utf-8")


@dataclass(frozen=True)
class ActionLabel:
    name: str
    index: int

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Distribution:
    """Finite-support successor distribution, in model order."""

    support: tuple[tuple[StateRef, Prob], ...]

    def __iter__(self):
        return iter(self.support)

    def __len__(self) -> int:
        return len(self.support)

    def states(self) -> list[StateRef]:
        return [s for s, _ in self.support]

    def prob(self, state: StateRef) -> Prob:
        for s, p in self.support:
            if s == state:
                return p
        return 0

    def total(self) -> Prob:
        return sum((p for _, p in self.support), Fraction(0))

    def as_dict(self) -> dict[Hashable, Prob]:
        return {s.key: p for s, p in self.support}


def is_exact(p) -> bool:
    return isinstance(p, (int, Fraction)) and not isinstance(p, bool)


def validate_distribution(d: Distribution | Iterable[tuple[object, Prob]]) -> bool:
    """True iff ``d`` has distinct support, positive entries and sums to 1.

    The sum must be exactly 1 when every entry is rational, and within
    ``1e-12`` otherwise.
    """
    pairs = list(d)
    if not pairs:
        return False
    seen = set()
    exact = True
    for s, p in pairs:
        if s in seen:
            return False
        seen.add(s)
        if not (0 < p <= 1):
            return False
        exact = exact and is_exact(p)
    total = sum(p for _, p in pairs)
    if exact:
        return total == 1
    return abs(float(total) - 1.0) <= FLOAT_SUM_TOL


class Model(abc.ABC):
    """A denumerable MDP queried lazily.

    Subclasses implement the ``*_key`` hooks over hashable state keys; the
    public API speaks :class:`StateRef` and :class:`ActionLabel`.
    """

    finitely_action_branching: bool = True
    finite: bool = False

    def __init__(self) -> None:
        self._refs: dict[Hashable, StateRef] = {}
        self._lock = threading.Lock()
        self._dist_cache: dict[tuple[Hashable, str], Distribution] = {}
        self._enabled_cache: dict[Hashable, list[ActionLabel]] = {}

    # -- hooks -------------------------------------------------------------
    @property
    @abc.abstractmethod
    def initial_key(self) -> Hashable: ...

    @property
    @abc.abstractmethod
    def goal_key(self) -> Hashable: ...

    @abc.abstractmethod
    def actions_key(self, key: Hashable) -> Sequence[str]:
        """Enabled action names at ``key`` (goal excluded by the caller)."""

    @abc.abstractmethod
    def transition_key(self, key: Hashable, action: str) -> Iterable[tuple[Hashable, Prob]]:
        """Successor keys and probabilities of ``(key, action)``."""

    def avoid_key(self, key: Hashable, opt: Opt) -> AvoidStatus:
        return AvoidStatus.UNKNOWN

    def name_of(self, key: Hashable) -> str:
        if isinstance(key, str):
            return key
        if isinstance(key, tuple):
            return "".join(str(k) for k in key)
        return str(key)

    # -- interning ---------------------------------------------------------
    def intern(self, key: Hashable) -> StateRef:
        ref = self._refs.get(key)
        if ref is not None:
            return ref
        with self._lock:
            ref = self._refs.get(key)
            if ref is None:
                ref = StateRef(len(self._refs), key)
                self._refs[key] = ref
            return ref

    def lookup(self, key: Hashable) -> StateRef:
        try:
            return self._refs[key]
        except KeyError:
            raise UnknownState(f"state {self.name_of(key)!r} was never discovered") from None

    def _check(self, s: StateRef) -> Hashable:
        if self._refs.get(s.key) is None:
            raise UnknownState(f"state {self.name_of(s.key)!r} was never discovered")
        return s.key

    @property
    def num_discovered(self) -> int:
        return len(self._refs)

    # -- public queries ----------------------------------------------------
    @property
    def initial(self) -> StateRef:
        return self.intern(self.initial_key)

    def is_goal(self, s: StateRef) -> bool:
        return self._check(s) == self.goal_key

    def enabled(self, s: StateRef) -> list[ActionLabel]:
        key = self._check(s)
        labels = self._enabled_cache.get(key)
        if labels is None:
            names = [] if key == self.goal_key else list(self.actions_key(key))
            labels = [ActionLabel(n, i) for i, n in enumerate(names)]
            self._enabled_cache[key] = labels
        return labels

    def successors(self, s: StateRef, a: ActionLabel | str) -> Distribution:
        key = self._check(s)
        name = a.name if isinstance(a, ActionLabel) else a
        cached = self._dist_cache.get((key, name))
        if cached is not None:
            return cached
        if name not in {lab.name for lab in self.enabled(s)}:
            raise DisabledAction(f"action {name!r} is not enabled at {self.name_of(key)!r}")
        pairs = [(self.intern(k), p) for k, p in self.transition_key(key, name)]
        dist = Distribution(tuple(pairs))
        if not validate_distribution(dist):
            raise ProbabilityError(
                f"invalid distribution at ({self.name_of(key)}, {name}): {pairs!r}"
            )
        self._dist_cache[(key, name)] = dist
        return dist

    def avoid_status(self, s: StateRef, opt: Opt) -> AvoidStatus:
        key = self._check(s)
        if key == self.goal_key:
            return AvoidStatus.NO
        status = self.avoid_key(key, opt)
        if status is AvoidStatus.UNKNOWN and self.finite:
            raise AssertionError("finite models must answer avoid queries")
        return status

    def name(self, s: StateRef) -> str:
        return self.name_of(s.key)

    @property
    def metadata(self) -> dict[str, bool]:
        return {
            "finitely_action_branching": self.finitely_action_branching,
            "finite": self.finite,
        }


def enabled(model: Model, s: StateRef) -> list[ActionLabel]:
    return model.enabled(s)


def successors(model: Model, s: StateRef, a: ActionLabel | str) -> Distribution:
    return model.successors(s, a)


def avoid_status(model: Model, s: StateRef, opt: Opt) -> AvoidStatus:
    return model.avoid_status(s, opt)


class FiniteMdp(Model):
    """Explicit finite MDP.

    ``transitions`` maps each state key to an ordered mapping from action name
    to a list of ``(successor key, probability)``; states without an entry
    are absorbing.  Avoid statuses are computed exactly on demand.
    """

    finite = True

    def __init__(
        self,
        states: Sequence[Hashable],
        transitions: Mapping[Hashable, Mapping[str, Sequence[tuple[Hashable, Prob]]]],
        initial: Hashable,
        goal: Hashable,
        bad: Iterable[Hashable] = (),
        names: Mapping[Hashable, str] | None = None,
    ) -> None:
        super().__init__()
        self.states = list(states)
        declared = set(self.states)
        if len(declared) != len(self.states):
            raise ValueError("duplicate state keys")
        for key in (initial, goal):
            if key not in declared:
                raise UnknownState(f"undeclared state {key!r}")
        self.transitions: dict[Hashable, dict[str, list[tuple[Hashable, Prob]]]] = {}
        for src, rows in transitions.items():
            if src not in declared:
                raise UnknownState(f"undeclared state {src!r}")
            if not rows:
                continue
            self.transitions[src] = {}
            for act, row in rows.items():
                for dst, _ in row:
                    if dst not in declared:
                        raise UnknownState(f"undeclared successor {dst!r} of {src!r}")
                self.transitions[src][act] = list(row)
        if goal in self.transitions:
            raise ValueError("the goal state must be absorbing")
        self._initial = initial
        self._goal = goal
        self.bad = frozenset(bad)
        self._names = dict(names or {})
        self._avoid: dict[Opt, frozenset] = {}
        for key in self.states:
            self.intern(key)

    @property
    def initial_key(self):
        return self._initial

    @property
    def goal_key(self):
        return self._goal

    def actions_key(self, key):
        return list(self.transitions.get(key, {}))

    def transition_key(self, key, action):
        return self.transitions[key][action]

    def name_of(self, key) -> str:
        if key in self._names:
            return self._names[key]
        return super().name_of(key)

    def avoid_set(self, opt: Opt) -> frozenset:
        opt = Opt.parse(opt)
        if opt not in self._avoid:
            from .transform import compute_avoid_finite

            self._avoid[opt] = frozenset(s.key for s in compute_avoid_finite(self, opt))
        return self._avoid[opt]

    def avoid_key(self, key, opt):
        return AvoidStatus.YES if key in self.avoid_set(opt) else AvoidStatus.NO

    def refs(self) -> list[StateRef]:
        return [self.intern(k) for k in self.states]

    def state_actions(self, key) -> list[str]:
        return list(self.transitions.get(key, {}))

    def num_choices(self) -> int:
        return sum(len(rows) for rows in self.transitions.values())

    def with_goal(self, goal: Hashable, merged: Iterable[Hashable] = ()) -> FiniteMdp:
        """Copy whose target is ``goal`` with every state of ``merged`` folded into it."""
        merged = set(merged) - {goal}
        keep = [s for s in self.states if s not in merged]
        trans = {}
        for src, rows in self.transitions.items():
            if src in merged or src == goal:
                continue
            trans[src] = {}
            for act, row in rows.items():
                acc: dict[Hashable, Prob] = {}
                for dst, p in row:
                    dst = goal if dst in merged else dst
                    acc[dst] = acc.get(dst, 0) + p
                trans[src][act] = list(acc.items())
        init = goal if self._initial in merged else self._initial
        return FiniteMdp(keep, trans, init, goal, bad=self.bad - merged, names=self._names)

    def with_initial(self, initial: Hashable) -> FiniteMdp:
        return FiniteMdp(self.states, self.transitions, initial, self._goal, self.bad, self._names)

    def __repr__(self) -> str:
        return (
            f"FiniteMdp(states={len(self.states)}, choices={self.num_choices()}, "
            f"initial={self.name_of(self._initial)!r}, goal={self.name_of(self._goal)!r})"
        )


class PurePositionalScheduler:
    """Maps states to action names; either a mapping over keys/names or a function of the key."""

    def __init__(self, choice: Mapping[Hashable, str] | Callable[[Hashable], str | None]):
        self._choice = choice

    @classmethod
    def constant(cls, action: str) -> PurePositionalScheduler:
        return cls(lambda key: action)

    def action_for(self, model: Model, s: StateRef) -> ActionLabel:
        if callable(self._choice):
            name = self._choice(s.key)
        else:
            name = self._choice.get(s.key, self._choice.get(model.name(s)))
        labels = model.enabled(s)
        for lab in labels:
            if lab.name == name:
                return lab
        if name is None:
            raise SchedulerGap(f"scheduler undefined at {model.name(s)!r}")
        raise SchedulerGap(f"scheduler picks disabled action {name!r} at {model.name(s)!r}")

    def as_dict(self, model: Model, states: Iterable[StateRef]) -> dict[str, str]:
        return {model.name(s): self.action_for(model, s).name for s in states if model.enabled(s)}


class TerminalReason(enum.Enum):
    HIT_GOAL = "HitGoal"
    HIT_AVOID = "HitAvoid"
    HORIZON_EXHAUSTED = "HorizonExhausted"


@dataclass(frozen=True)
class SamplePath:
    states: tuple[StateRef, ...]
    terminal_reason: TerminalReason

    def __len__(self) -> int:
        return len(self.states)


def _terminal(model: Model, s: StateRef, opt: Opt) -> TerminalReason | None:
    if model.is_goal(s):
        return TerminalReason.HIT_GOAL
    if model.avoid_status(s, opt) is AvoidStatus.YES:
        return TerminalReason.HIT_AVOID
    return None


def simulate(
    model: Model,
    sched: PurePositionalScheduler,
    horizon: int,
    rng_seed: int,
    opt: Opt = Opt.SUP,
) -> SamplePath:
    """Sample one path of the chain induced by ``sched``.

    Stops on the goal, on a state certified to be in the ``opt`` avoid set,
    or after ``horizon`` steps.  A non-goal state with no enabled action is
    treated as a self-loop.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    rng = np.random.default_rng(rng_seed)
    s = model.initial
    path = [s]
    for _ in range(horizon):
        reason = _terminal(model, s, opt)
        if reason is not None:
            return SamplePath(tuple(path), reason)
        if not model.enabled(s):
            path.append(s)
            continue
        dist = model.successors(s, sched.action_for(model, s))
        u = rng.random()
        acc = 0.0
        nxt = dist.support[-1][0]
        for t, p in dist:
            acc += float(p)
            if u < acc:
                nxt = t
                break
        s = nxt
        path.append(s)
    reason = _terminal(model, s, opt)
    return SamplePath(tuple(path), reason or TerminalReason.HORIZON_EXHAUSTED)
