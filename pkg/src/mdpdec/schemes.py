"""The two approximation loops and the Monte-Carlo decisiveness estimator.

Scheme 1 unfolds the collapsed model to depth ``n`` and brackets the value
between "reach the goal within n steps" and "reach the goal or survive n
steps".  Scheme 2 solves the sliced finite MDP ``M_n`` twice: once with the
goal as target and once with the out-of-slice sink merged into the goal.
Both return a :class:`SolveResult` whose point value is the lower bound.
"""

from __future__ import annotations

import csv
import enum
import math
import time
from collections.abc import Iterator
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist

import numpy as np

from .core import AvoidStatus, Model, Opt, PurePositionalScheduler
from .errors import TrivialZero
from .solver import BoundedObjective, bounded_reach, interval_iteration
from .transform import Explorer, collapse

DEFAULT_MAX_N = 10_000
# state backups allowed per inner solve before its partial bracket is used as is
DEFAULT_INNER_BUDGET = 1_000_000


class Status(enum.Enum):
    CONVERGED = "Converged"
    BUDGET_EXHAUSTED = "BudgetExhausted"
    TRIVIAL_ZERO = "TrivialZero"
    UPPER_NOT_CERTIFIED = "UpperNotCertified"


@dataclass(frozen=True)
class TraceRow:
    n: int
    lower: float
    upper: float
    states_explored: int
    elapsed_millis: float


@dataclass
class BoundsTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def is_monotone(self) -> bool:
        pairs = zip(self.rows, self.rows[1:])
        return all(a.lower <= b.lower and a.upper >= b.upper for a, b in pairs) and all(
            r.lower <= r.upper for r in self.rows
        )

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "lower", "upper", "states_explored", "elapsed_millis"])
            for r in self.rows:
                w.writerow([r.n, f"{r.lower:.12g}", f"{r.upper:.12g}", r.states_explored,
                            f"{r.elapsed_millis:.3f}"])


@dataclass
class SolveResult:
    value_interval: tuple[float, float]
    status: Status
    trace: BoundsTrace
    scheme: int
    opt: Opt
    diagnosis: str = ""

    @property
    def value(self) -> float:
        return self.value_interval[0]

    @property
    def lower(self) -> float:
        return self.value_interval[0]

    @property
    def upper(self) -> float:
        return self.value_interval[1]

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    def to_dict(self, with_timing: bool = True) -> dict:
        rows = []
        for r in self.trace:
            row = {"n": r.n, "lower": r.lower, "upper": r.upper, "states_explored": r.states_explored}
            if with_timing:
                row["elapsed_millis"] = r.elapsed_millis
            rows.append(row)
        return {
            "value": self.value,
            "value_interval": list(self.value_interval),
            "status": self.status.value,
            "scheme": self.scheme,
            "opt": self.opt.value,
            "diagnosis": self.diagnosis,
            "trace": rows,
        }


def horizons(max_n: int, geometric: bool = False) -> Iterator[int]:
    """``1, 2, 3, ...`` or ``1, 2, 4, ...``; always ends with ``max_n``."""
    if max_n < 1:
        raise ValueError("max_n must be positive")
    n = 1
    while n < max_n:
        yield n
        n = 2 * n if geometric else n + 1
    yield max_n


def _check(model: Model, eps: float) -> None:
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if not getattr(model, "finitely_action_branching", True):
        raise ValueError("the schemes need a finitely action-branching model")


def _trivial(scheme: int, opt: Opt, exc: TrivialZero) -> SolveResult:
    return SolveResult((0.0, 0.0), Status.TRIVIAL_ZERO, BoundsTrace(), scheme, opt, str(exc))


def _finish(scheme, opt, trace, lo, hi, converged, view) -> SolveResult:
    if converged:
        status = Status.UPPER_NOT_CERTIFIED if view.degraded else Status.CONVERGED
    else:
        status = Status.BUDGET_EXHAUSTED
    note = ""
    if view.degraded:
        note = f"{len(view.unknown_states)} states with unknown avoid status were kept uncollapsed"
    return SolveResult((lo, hi), status, trace, scheme, opt, note)


def approx_scheme1(
    model: Model,
    opt: Opt | str,
    eps: float,
    max_n: int = DEFAULT_MAX_N,
    geometric: bool = False,
    state_cap: int | None = None,
) -> SolveResult:
    """Bracket the value by step-bounded objectives on the unfolded collapsed model."""
    opt = Opt.parse(opt)
    _check(model, eps)
    start = time.perf_counter()
    try:
        view = collapse(model, opt)
    except TrivialZero as exc:
        return _trivial(1, opt, exc)
    explorer = Explorer(view, state_cap)
    trace = BoundsTrace()
    lo, hi = 0.0, 1.0
    converged = False
    for n in horizons(max_n, geometric):
        arena = explorer.arena(n)
        lo = max(lo, bounded_reach(arena, opt, BoundedObjective.REACH_WITHIN))
        hi = min(hi, bounded_reach(arena, opt, BoundedObjective.REACH_OR_SURVIVE))
        trace.append(TraceRow(n, lo, hi, arena.states_explored,
                              (time.perf_counter() - start) * 1000))
        if hi - lo <= eps:
            converged = True
            break
    return _finish(1, opt, trace, lo, hi, converged, view)


@dataclass(frozen=True)
class SliceBounds:
    """Certified ends of the two inner solves on one slice (before outward rounding)."""

    lower: float
    upper: float
    states: int


class SliceSolver:
    """Solves successive slices of one collapsed view, warm-starting each from the last.

    Slice values only move towards the true value as ``n`` grows: the goal
    target values increase and the merged-sink values decrease, so the
    previous brackets are sound starting points.
    """

    def __init__(self, explorer: Explorer, opt: Opt, inner_tol: float,
                 inner_budget: int = DEFAULT_INNER_BUDGET) -> None:
        self.explorer, self.opt, self.inner_tol = explorer, opt, inner_tol
        self.inner_budget = inner_budget
        self.unfinished: list[int] = []
        self._lo: dict = {}
        self._hi: dict = {}

    def bounds(self, n: int) -> SliceBounds:
        sl = self.explorer.slice(n)
        m = sl.mdp
        a = interval_iteration(m, self.opt, self.inner_tol, self.inner_budget,
                               lower_hint=self._lo, strict=False)
        self._lo = dict(zip(a.keys, a.lower.tolist()))
        up = m.with_goal(m.goal_key, {sl.bottom}) if sl.bottom_reachable() else m
        b = interval_iteration(up, self.opt, self.inner_tol, self.inner_budget,
                               upper_hint=self._hi, strict=False)
        if not (a.converged and b.converged):
            self.unfinished.append(n)
        self._hi = {k: v for k, v in zip(b.keys, b.upper.tolist()) if k != up.goal_key}
        return SliceBounds(a.at(m.initial_key)[0], b.at(up.initial_key)[1], len(m.states))


def slice_bounds(explorer: Explorer, n: int, opt: Opt, inner_tol: float) -> SliceBounds:
    """Bounds of one slice solved from scratch."""
    return SliceSolver(explorer, opt, inner_tol).bounds(n)


def approx_scheme2(
    model: Model,
    opt: Opt | str,
    eps: float,
    max_n: int = DEFAULT_MAX_N,
    inner_tol: float | None = None,
    geometric: bool = False,
    state_cap: int | None = None,
    inner_budget: int = DEFAULT_INNER_BUDGET,
) -> SolveResult:
    """Bracket the value by solving the sliced finite MDP with and without the sink as target."""
    opt = Opt.parse(opt)
    _check(model, eps)
    inner_tol = eps / 10 if inner_tol is None else inner_tol
    if inner_tol <= 0:
        raise ValueError("inner_tol must be positive")
    start = time.perf_counter()
    try:
        view = collapse(model, opt)
    except TrivialZero as exc:
        return _trivial(2, opt, exc)
    explorer = Explorer(view, state_cap)
    solver = SliceSolver(explorer, opt, inner_tol, inner_budget)
    trace = BoundsTrace()
    lo, hi = 0.0, 1.0
    converged = False
    for n in horizons(max_n, geometric):
        b = solver.bounds(n)
        lo = max(lo, b.lower - inner_tol, 0.0)
        hi = min(hi, b.upper + inner_tol, 1.0)
        trace.append(TraceRow(n, lo, hi, explorer._exp.expanded,
                              (time.perf_counter() - start) * 1000))
        if hi - lo <= eps:
            converged = True
            break
    res = _finish(2, opt, trace, lo, hi, converged, view)
    if solver.unfinished:
        note = (f"inner solves hit the backup budget at {len(solver.unfinished)} horizons "
                f"(first n = {solver.unfinished[0]}); their wider brackets were used")
        res.diagnosis = "; ".join(x for x in (res.diagnosis, note) if x)
    return res


def solve(model: Model, opt, eps: float, scheme: int = 2, **kw) -> SolveResult:
    if scheme == 1:
        kw.pop("inner_tol", None)
        return approx_scheme1(model, opt, eps, **kw)
    if scheme == 2:
        return approx_scheme2(model, opt, eps, **kw)
    raise ValueError(f"unknown scheme {scheme!r}")


@dataclass(frozen=True)
class RefinementRow:
    n: int
    p_lower: float
    q_lower: float
    q_upper: float
    p_upper: float
    ok: bool


def refinement_check(
    model: Model, opt: Opt | str, n_max: int, inner_tol: float = 1e-12, slack: float = 1e-9
) -> list[RefinementRow]:
    """All four bound sequences for ``n <= n_max``; ``ok`` when the slice bounds refine the unfolding ones."""
    opt = Opt.parse(opt)
    if n_max < 1:
        return []
    try:
        view = collapse(model, opt)
    except TrivialZero:
        return [RefinementRow(n, 0.0, 0.0, 0.0, 0.0, True) for n in range(1, n_max + 1)]
    explorer = Explorer(view)
    out = []
    for n in range(1, n_max + 1):
        arena = explorer.arena(n)
        p_lo = bounded_reach(arena, opt, BoundedObjective.REACH_WITHIN)
        p_hi = bounded_reach(arena, opt, BoundedObjective.REACH_OR_SURVIVE)
        b = slice_bounds(explorer, n, opt, inner_tol)
        ok = p_lo <= b.lower + inner_tol + slack and b.upper <= p_hi + inner_tol + slack
        out.append(RefinementRow(n, p_lo, b.lower, b.upper, p_hi, ok))
    return out


@dataclass(frozen=True)
class DecisivenessEstimate:
    estimate: float
    interval: tuple[float, float]
    trials: int
    hits_goal: int
    hits_avoid: int


def wilson_interval(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    if trials <= 0:
        raise ValueError("trials must be positive")
    z = NormalDist().inv_cdf(0.5 + level / 2)
    phat = successes / trials
    denom = 1 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


class _ChainTable:
    """Lazily grown array form of the chain induced by a pure positional scheduler.

    State ids index ``cum`` (cumulative successor probabilities, padded with
    1.0) and ``succ`` (successor ids); ``kind`` is 0 running, 1 goal, 2 avoid.
    """

    def __init__(self, model: Model, sched: PurePositionalScheduler, opt: Opt):
        self.model, self.sched, self.opt = model, sched, opt
        self.ids: dict = {}
        self.refs: list = []
        self.width = 1
        self.cum = np.ones((0, 1))
        self.succ = np.zeros((0, 1), dtype=np.int64)
        self.kind = np.zeros(0, dtype=np.int8)
        self.built = np.zeros(0, dtype=bool)

    def id_of(self, ref) -> int:
        i = self.ids.get(ref.key)
        if i is None:
            i = len(self.refs)
            self.ids[ref.key] = i
            self.refs.append(ref)
            if i >= len(self.kind):
                self._grow(max(16, 2 * len(self.kind)))
            m = self.model
            if m.is_goal(ref):
                self.kind[i] = 1
            elif m.avoid_status(ref, self.opt) is AvoidStatus.YES:
                self.kind[i] = 2
        return i

    def _grow(self, cap: int, width: int | None = None) -> None:
        width = width or self.width
        old = len(self.kind)
        cum = np.ones((cap, width))
        succ = np.zeros((cap, width), dtype=np.int64)
        cum[:old, : self.width] = self.cum
        succ[:old, : self.width] = self.succ
        # padded columns repeat the last real successor so they are never selected
        if width > self.width and old:
            succ[:old, self.width:] = self.succ[:, -1:]
        self.cum, self.succ, self.width = cum, succ, width
        self.kind = np.concatenate([self.kind, np.zeros(cap - old, dtype=np.int8)])
        self.built = np.concatenate([self.built, np.zeros(cap - old, dtype=bool)])

    def build(self, i: int) -> None:
        self.built[i] = True
        if self.kind[i]:
            return
        ref = self.refs[i]
        m = self.model
        if not m.enabled(ref):
            self.succ[i, :] = i
            return
        dist = m.successors(ref, self.sched.action_for(m, ref))
        targets = [self.id_of(t) for t, _ in dist]
        if len(targets) > self.width:
            self._grow(len(self.kind), len(targets))
        acc = np.cumsum([float(p) for _, p in dist])
        acc[-1] = 1.0
        self.cum[i, :] = 1.0
        self.cum[i, : len(acc)] = acc
        self.succ[i, :] = targets[-1]
        self.succ[i, : len(targets)] = targets


def estimate_decisiveness(
    model: Model,
    sched: PurePositionalScheduler,
    opt: Opt | str,
    trials: int,
    horizon: int,
    seed: int | None = 0,
) -> DecisivenessEstimate:
    """Monte-Carlo frequency of reaching the goal or a certified avoid state within ``horizon`` steps.

    All trials advance together: each step draws one uniform per live trial
    and looks up the successor in the array form of the induced chain.
    """
    opt = Opt.parse(opt)
    if trials <= 0 or horizon < 0:
        raise ValueError("trials must be positive and horizon nonnegative")
    rng = np.random.default_rng(seed)
    table = _ChainTable(model, sched, opt)
    start = table.id_of(model.initial)
    goal = avoid = 0
    kind = int(table.kind[start])
    cur = np.full(trials if kind == 0 else 0, start, dtype=np.int64)
    if kind == 1:
        goal = trials
    elif kind == 2:
        avoid = trials
    for _ in range(horizon):
        if cur.size == 0:
            break
        todo = cur[~table.built[cur]]
        if todo.size:
            for i in np.unique(todo):
                table.build(int(i))
        u = rng.random(cur.size)
        cum = table.cum
        col = np.zeros(cur.size, dtype=np.int64)
        for j in range(table.width - 1):
            col += u >= cum[cur, j]
        cur = table.succ[cur, col]
        k = table.kind[cur]
        done = k != 0
        if done.any():
            goal += int(np.count_nonzero(k == 1))
            avoid += int(np.count_nonzero(k == 2))
            cur = cur[~done]
    est = (goal + avoid) / trials
    return DecisivenessEstimate(est, wilson_interval(goal + avoid, trials), trials, goal, avoid)
