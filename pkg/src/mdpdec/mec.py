"""Maximal end components and the finite sup-decisiveness check."""

from __future__ import annotations

from collections.abc import Hashable, Iterable
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .core import FiniteMdp, Opt
from .errors import TrivialZero
from .transform import collapse_finite


@dataclass(frozen=True)
class Mec:
    """A maximal end component: member states and, per member, the actions staying inside.

    A state without enabled actions forms a trivial component with an empty
    action map.
    """

    states: frozenset
    actions: dict = field(hash=False, compare=False)

    @property
    def trivial(self) -> bool:
        return not any(self.actions.values())


def _sccs(nodes: list[Hashable], succ: dict[Hashable, set[Hashable]]) -> dict[Hashable, int]:
    index = {s: i for i, s in enumerate(nodes)}
    rows, cols = [], []
    for s in nodes:
        for t in succ.get(s, ()):
            if t in index:
                rows.append(index[s])
                cols.append(index[t])
    n = len(nodes)
    graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(graph, directed=True, connection="strong")
    return {s: int(labels[index[s]]) for s in nodes}


def end_components(
    m: FiniteMdp, states: Iterable[Hashable] | None = None
) -> list[tuple[frozenset, dict[Hashable, list[str]]]]:
    """Maximal end components (with at least one action) of ``m`` restricted to ``states``.

    Iterated SCC refinement: drop state-action pairs whose support leaves the
    SCC of their source until nothing changes.
    """
    live = list(m.states if states is None else states)
    live_set = set(live)
    acts: dict[Hashable, list[str]] = {}
    for s in live:
        rows = m.transitions.get(s, {})
        acts[s] = [a for a, row in rows.items() if all(t in live_set for t, _ in row)]
    while True:
        nodes = [s for s in live if acts[s]]
        node_set = set(nodes)
        succ = {
            s: {t for a in acts[s] for t, _ in m.transitions[s][a] if t in node_set} for s in nodes
        }
        comp = _sccs(nodes, succ)
        changed = False
        for s in nodes:
            keep = [
                a
                for a in acts[s]
                if all(t in node_set and comp[t] == comp[s] for t, _ in m.transitions[s][a])
            ]
            if len(keep) != len(acts[s]):
                acts[s] = keep
                changed = True
        if not changed:
            break
        live = nodes
    groups: dict[int, list[Hashable]] = {}
    for s in nodes:
        groups.setdefault(comp[s], []).append(s)
    return [(frozenset(g), {s: list(acts[s]) for s in g}) for g in groups.values()]


def mec_decomposition(m: FiniteMdp) -> list[Mec]:
    """All maximal end components of ``m``, absorbing states included as trivial ones."""
    out = [Mec(states, acts) for states, acts in end_components(m)]
    for s in m.states:
        if not m.transitions.get(s):
            out.append(Mec(frozenset([s]), {s: []}))
    order = {s: i for i, s in enumerate(m.states)}
    out.sort(key=lambda c: min(order[s] for s in c.states))
    return out


def reachable_states(m: FiniteMdp, start: Hashable | None = None) -> list[Hashable]:
    start = m.initial_key if start is None else start
    seen = {start}
    todo = [start]
    while todo:
        s = todo.pop()
        for row in m.transitions.get(s, {}).values():
            for t, _ in row:
                if t not in seen:
                    seen.add(t)
                    todo.append(t)
    return [s for s in m.states if s in seen]


@dataclass(frozen=True)
class DecisivenessReport:
    decisive: bool
    diagnosis: str
    mecs: tuple = ()

    def __bool__(self) -> bool:
        return self.decisive


def check_sup_decisive_finite(m: FiniteMdp) -> DecisivenessReport:
    """Decide sup-decisiveness from the initial state of a finite MDP.

    Works on the part of ``M^sup`` reachable from the initial state: the
    model is sup-decisive iff every end component there is terminal, i.e.
    every MEC is closed under all enabled actions and has no proper sub end
    component.
    """
    try:
        col = collapse_finite(m, Opt.SUP)
    except TrivialZero:
        return DecisivenessReport(True, "sup-decisive: initial state is in Avoid^sup")
    reach = reachable_states(col)
    name = col.name_of
    comps = end_components(col, reach)
    for states, acts in comps:
        for s in sorted(states, key=reach.index):
            for a, row in col.transitions[s].items():
                if any(t not in states for t, _ in row):
                    members = ", ".join(name(x) for x in sorted(states, key=reach.index))
                    return DecisivenessReport(
                        False,
                        f"not sup-decisive: MEC {{{members}}} exits via {a}",
                        tuple(comps),
                    )
    for states, acts in comps:
        for s in states:
            rest = [x for x in states if x != s]
            sub = end_components(col, rest)
            if sub:
                members = ", ".join(name(x) for x in sorted(states, key=reach.index))
                inner = ", ".join(name(x) for x in sorted(sub[0][0], key=reach.index))
                return DecisivenessReport(
                    False,
                    f"not sup-decisive: MEC {{{members}}} has proper sub end component {{{inner}}}",
                    tuple(comps),
                )
    return DecisivenessReport(True, "sup-decisive: every reachable end component is terminal",
                              tuple(comps))
