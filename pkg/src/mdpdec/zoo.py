"""Built-in example MDP families with closed-form avoid oracles."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from fractions import Fraction

from .core import AvoidStatus, FiniteMdp, Model, Opt, Prob

GOAL = "Goal"
BAD = "bad"


def _check_open_unit(name: str, x: Prob) -> None:
    if not 0 < x < 1:
        raise ValueError(f"{name} must lie in (0, 1), got {x}")


@dataclass(frozen=True)
class WalkParams:
    p: Prob = Fraction(1, 3)
    q: Prob = Fraction(1, 2)

    def __post_init__(self):
        _check_open_unit("p", self.p)
        _check_open_unit("q", self.q)


class RandomWalk(Model):
    """Random walk on ``s_0, s_1, ...``.

    ``alpha`` moves up with probability ``p`` and down otherwise (from
    ``s_0`` "down" means the goal); ``beta`` ends the game: goal with
    probability ``q``, ``bad`` otherwise.
    """

    def __init__(self, params: WalkParams | None = None) -> None:
        super().__init__()
        self.params = params or WalkParams()

    initial_key = ("s", 0)
    goal_key = GOAL

    def actions_key(self, key):
        return [] if key == BAD else ["alpha", "beta"]

    def transition_key(self, key, action):
        p, q = self.params.p, self.params.q
        i = key[1]
        if action == "beta":
            return [(GOAL, q), (BAD, 1 - q)]
        if i == 0:
            return [(GOAL, 1 - p), (("s", 1), p)]
        return [(("s", i + 1), p), (("s", i - 1), 1 - p)]

    def avoid_key(self, key, opt):
        return AvoidStatus.YES if key == BAD else AvoidStatus.NO


def make_random_walk(params: WalkParams | None = None) -> RandomWalk:
    return RandomWalk(params)


class LeftModel(Model):
    """Inf-decisive but not sup-decisive: ``alpha`` loops ``s_i -> s_{i+1} | r -> s_0``."""

    initial_key = ("s", 0)
    goal_key = GOAL

    def actions_key(self, key):
        if key == BAD:
            return []
        if key == "r":
            return ["alpha"]
        return ["alpha", "beta"]

    def transition_key(self, key, action):
        if key == "r":
            return [(("s", 0), Fraction(1))]
        if action == "beta":
            return [(GOAL, Fraction(1, 2)), (BAD, Fraction(1, 2))]
        return [(("s", key[1] + 1), Fraction(1, 2)), ("r", Fraction(1, 2))]

    def avoid_key(self, key, opt):
        if key == BAD or Opt.parse(opt) is Opt.INF:
            return AvoidStatus.YES
        return AvoidStatus.NO


def make_ml() -> LeftModel:
    return LeftModel()


def default_eps(i: int) -> Fraction:
    return Fraction(1, (i + 2) ** 2)


@dataclass(frozen=True)
class MrParams:
    eps: Callable[[int], Prob] = default_eps

    def check(self, upto: int = 1000) -> float:
        """Validate ``eps`` on the first ``upto`` indices; return the truncated product of ``1 - eps_i``."""
        prod = 1.0
        for i in range(upto):
            e = self.eps(i)
            _check_open_unit(f"eps_{i}", e)
            prod *= 1.0 - float(e)
        if prod <= 0:
            raise ValueError("the product of (1 - eps_i) must stay positive")
        return prod


class RightModel(Model):
    """Neither inf- nor sup-decisive: ``alpha`` at ``s_i`` reaches the goal only with ``eps_i``."""

    def __init__(self, params: MrParams | None = None) -> None:
        super().__init__()
        self.params = params or MrParams()
        self.params.check(50)

    initial_key = ("s", 0)
    goal_key = GOAL

    def actions_key(self, key):
        return [] if key == BAD else ["alpha", "beta"]

    def transition_key(self, key, action):
        if action == "beta":
            return [(GOAL, Fraction(1, 2)), (BAD, Fraction(1, 2))]
        e = self.params.eps(key[1])
        return [(("s", key[1] + 1), 1 - e), (GOAL, e)]

    def avoid_key(self, key, opt):
        return AvoidStatus.YES if key == BAD else AvoidStatus.NO


def make_mr(params: MrParams | None = None) -> RightModel:
    return RightModel(params)


def survival_product(params: MrParams | None = None, terms: int = 1_000_000) -> float:
    """Truncated ``prod_i (1 - eps_i)`` (for the default schedule the limit is 1/2)."""
    params = params or MrParams()
    prod = 1.0
    for i in range(terms):
        prod *= 1.0 - float(params.eps(i))
    return prod


def make_three_state() -> FiniteMdp:
    """``s0`` loops on ``alpha``; ``beta`` reaches the goal or ``bad`` with 1/2 each."""
    half = Fraction(1, 2)
    return FiniteMdp(
        ["s0", GOAL, BAD],
        {"s0": {"alpha": [("s0", Fraction(1))], "beta": [(GOAL, half), (BAD, half)]}},
        "s0",
        GOAL,
        bad=[BAD],
    )
