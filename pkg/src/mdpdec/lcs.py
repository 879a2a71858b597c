"""Lossy channel systems and their try/restart embedding.

A configuration is ``(control_state, word)`` with ``word`` a tuple of
letters.  After each rule application the channel suffers probabilistic
losses according to a :class:`LossModel`.  :func:`embed_lcs` adds two
actions to every configuration: ``try`` (goal with probability
``1 - 2^-|w|``, ``bad`` otherwise) and ``restart`` (back to the initial
configuration with an empty channel).
"""

from __future__ import annotations

import json
from collections.abc import Callable
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Union

from .core import AvoidStatus, Model, Opt, Prob
from .errors import InapplicableRule, SchemaError
from .zoo import BAD, GOAL

Config = tuple[str, tuple[str, ...]]

OPS = ("send", "receive", "nop")


@dataclass(frozen=True)
class Rule:
    source: str
    op: str
    letter: str | None
    target: str

    @property
    def label(self) -> str:
        arg = f"({self.letter})" if self.letter is not None else ""
        return f"{self.op}{arg}->{self.target}"


@dataclass(frozen=True)
class LcsSystem:
    control_states: tuple[str, ...]
    alphabet: tuple[str, ...]
    rules: tuple[Rule, ...]
    initial: str

    def __post_init__(self):
        states = set(self.control_states)
        if self.initial not in states:
            raise SchemaError(f"initial control state {self.initial!r} is not declared")
        seen = set()
        for r in self.rules:
            if r.source not in states or r.target not in states:
                raise SchemaError(f"rule {r} references an undeclared control state")
            if r.op not in OPS:
                raise SchemaError(f"unknown operation {r.op!r}")
            if r.op == "nop":
                if r.letter is not None:
                    raise SchemaError("nop rules take no letter")
            elif r.letter not in self.alphabet:
                raise SchemaError(f"letter {r.letter!r} is not in the alphabet")
            if (r.source, r.label) in seen:
                raise SchemaError(f"duplicate rule {r.label} at {r.source}")
            seen.add((r.source, r.label))

    def rules_from(self, q: str) -> list[Rule]:
        return [r for r in self.rules if r.source == q]

    def dead_ends(self) -> list[str]:
        return [q for q in self.control_states if not self.rules_from(q)]


@dataclass(frozen=True)
class PerMessageIID:
    """Each letter of the channel is lost independently with probability ``lam``."""

    lam: Prob

    def __post_init__(self):
        if not 0 < self.lam < 1:
            raise ValueError("loss probability must lie in (0, 1)")

    def apply(self, word: tuple[str, ...]) -> list[tuple[tuple[str, ...], Prob]]:
        acc: dict[tuple[str, ...], Prob] = {(): Fraction(1) if isinstance(self.lam, Fraction) else 1.0}
        for letter in word:
            nxt: dict[tuple[str, ...], Prob] = {}
            for u, p in acc.items():
                kept = u + (letter,)
                nxt[kept] = nxt.get(kept, 0) + p * (1 - self.lam)
                nxt[u] = nxt.get(u, 0) + p * self.lam
            acc = nxt
        return list(acc.items())


def half_power(n: int) -> Fraction:
    return Fraction(1, 2**n)


@dataclass(frozen=True)
class LoseAllWithProb:
    """The whole channel is emptied with probability ``f(|w|)``."""

    f: Callable[[int], Prob] = half_power

    def apply(self, word: tuple[str, ...]) -> list[tuple[tuple[str, ...], Prob]]:
        if not word:
            return [((), Fraction(1))]
        lose = self.f(len(word))
        out = []
        if lose < 1:
            out.append((word, 1 - lose))
        if lose > 0:
            out.append(((), lose))
        return out


LossModel = Union[PerMessageIID, LoseAllWithProb]


def apply_rule(config: Config, rule: Rule) -> Config:
    q, w = config
    if rule.source != q:
        raise InapplicableRule(f"rule {rule.label} starts at {rule.source}, not {q}")
    if rule.op == "send":
        return rule.target, w + (rule.letter,)
    if rule.op == "receive":
        if not w or w[0] != rule.letter:
            raise InapplicableRule(f"cannot receive {rule.letter!r} from channel {''.join(w)!r}")
        return rule.target, w[1:]
    return rule.target, w


def applicable(sys: LcsSystem, config: Config) -> list[Rule]:
    q, w = config
    return [
        r
        for r in sys.rules_from(q)
        if r.op != "receive" or (w and w[0] == r.letter)
    ]


def lcs_step(sys: LcsSystem, loss: LossModel, config: Config, rule: Rule) -> list[tuple[Config, Prob]]:
    """Apply ``rule`` at ``config`` then the loss model: a finite distribution over configurations."""
    q, w = apply_rule(config, rule)
    return [((q, u), p) for u, p in loss.apply(w)]


def word_name(w: tuple[str, ...]) -> str:
    return "".join(w) if w else "ε"


class LcsEmbedding(Model):
    """The try/restart MDP built on top of the configuration graph of an LCS."""

    def __init__(self, sys: LcsSystem, loss: LossModel) -> None:
        super().__init__()
        self.sys = sys
        self.loss = loss
        self._rules = {q: {r.label: r for r in sys.rules_from(q)} for q in sys.control_states}
        self._sends_from = self._nop_reach_send()

    def _nop_reach_send(self) -> set[str]:
        """Control states from which a send is enabled after nop rules only."""
        good = {r.source for r in self.sys.rules if r.op == "send"}
        changed = True
        while changed:
            changed = False
            for r in self.sys.rules:
                if r.op == "nop" and r.target in good and r.source not in good:
                    good.add(r.source)
                    changed = True
        return good

    @property
    def initial_key(self) -> Config:
        return (self.sys.initial, ())

    goal_key = GOAL

    def actions_key(self, key):
        if key == BAD:
            return []
        return [r.label for r in applicable(self.sys, key)] + ["try", "restart"]

    def transition_key(self, key, action):
        q, w = key
        if action == "try":
            p_bad = Fraction(1, 2 ** len(w))
            out = []
            if p_bad < 1:
                out.append((GOAL, 1 - p_bad))
            out.append((BAD, p_bad))
            return out
        if action == "restart":
            return [(self.initial_key, Fraction(1))]
        return lcs_step(self.sys, self.loss, key, self._rules[q][action])

    def avoid_key(self, key, opt):
        if key == BAD or Opt.parse(opt) is Opt.INF:
            return AvoidStatus.YES
        q, w = key
        if w or self.sys.initial in self._sends_from or q in self._sends_from:
            return AvoidStatus.NO
        return AvoidStatus.YES

    def name_of(self, key) -> str:
        if isinstance(key, tuple) and len(key) == 2 and isinstance(key[1], tuple):
            return f"({key[0]},{word_name(key[1])})"
        return super().name_of(key)


def embed_lcs(sys: LcsSystem, loss: LossModel | None = None) -> LcsEmbedding:
    return LcsEmbedding(sys, loss or PerMessageIID(Fraction(1, 10)))


def bounded_demo(length: int = 4) -> LcsSystem:
    """Counter-like system whose channel never holds more than ``length`` letters."""
    qs = tuple(f"q{i}" for i in range(length + 1))
    rules = [Rule(qs[i], "send", "a", qs[i + 1]) for i in range(length)]
    rules += [Rule(qs[i], "receive", "a", qs[i - 1]) for i in range(1, length + 1)]
    return LcsSystem(qs, ("a",), tuple(rules), qs[0])


def unbounded_demo() -> LcsSystem:
    """A single control state with a send self-loop: the channel can grow forever."""
    rules = (Rule("q0", "send", "a", "q0"), Rule("q0", "receive", "a", "q0"))
    return LcsSystem(("q0",), ("a",), rules, "q0")


def lcs_from_dict(doc: dict) -> LcsSystem:
    allowed = {"control_states", "alphabet", "rules", "initial"}
    if set(doc) - allowed:
        raise SchemaError(f"unknown keys: {sorted(set(doc) - allowed)}")
    try:
        rules = tuple(
            Rule(r["from"], r["op"], r.get("letter"), r["to"]) for r in doc["rules"]
        )
        return LcsSystem(
            tuple(doc["control_states"]), tuple(doc["alphabet"]), rules, doc["initial"]
        )
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed LCS document: {exc}") from None


def lcs_to_dict(sys: LcsSystem) -> dict:
    return {
        "control_states": list(sys.control_states),
        "alphabet": list(sys.alphabet),
        "initial": sys.initial,
        "rules": [
            {"from": r.source, "op": r.op, **({"letter": r.letter} if r.letter else {}), "to": r.target}
            for r in sys.rules
        ],
    }


def read_lcs(path: str | Path) -> LcsSystem:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        from .errors import ParseError

        raise ParseError(f"malformed JSON: {exc}") from None
    return lcs_from_dict(doc)
