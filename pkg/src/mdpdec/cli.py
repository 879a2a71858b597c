"""Command-line front end: ``mdpdec <command> ...``.

Exit codes: 0 on success (including ``Converged``, ``TrivialZero`` and
informational commands), 3 when a scheme stops with ``BudgetExhausted``,
1 on errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .core import Model, Opt, PurePositionalScheduler, simulate
from .errors import MdpError, ScenarioUnknown
from .exact import exact_oracle
from .io import read_finite_model
from .lcs import LoseAllWithProb, PerMessageIID, bounded_demo, embed_lcs, read_lcs, unbounded_demo
from .mec import check_sup_decisive_finite, mec_decomposition
from .schemes import (
    SliceSolver,
    SolveResult,
    Status,
    approx_scheme1,
    approx_scheme2,
    estimate_decisiveness,
)
from .solver import solve_reach_finite
from .transform import Explorer, collapse
from .zoo import MrParams, WalkParams, make_ml, make_mr, make_random_walk, make_three_state

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3

COMMANDS = ("solve", "solve-finite", "avoid", "check", "mec", "simulate", "repro")
BUILTINS = ("walk", "ml", "mr", "three-state", "lcs-embed")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    model_path: str | None = None
    builtin: str | None = None
    params: tuple[tuple[str, str], ...] = ()
    opt: Opt = Opt.SUP
    scheme: int = 2
    epsilon: float = 1e-3
    max_horizon: int = 100_000
    geometric: bool = False
    inner_tol: float | None = None
    numeric: str = "exact"
    tol: float = 1e-9
    exact: bool = False
    trace_path: str | None = None
    output_format: str = "json"
    seed: int = 0
    action: str | None = None
    scheduler_path: str | None = None
    horizon: int = 1000
    trials: int | None = None
    scenario: str | None = None
    run_all: bool = False

    def param(self, key: str, default=None):
        for k, v in self.params:
            if k == key:
                return v
        return default


def _epsilon(text: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 < x < 1:
        raise argparse.ArgumentTypeError(f"epsilon must lie in (0, 1), got {text}")
    return x


def _positive_float(text: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if x <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return x


def _positive_int(text: str) -> int:
    try:
        x = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if x <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return x


def _param(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key.strip(), value.strip()


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_model(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", dest="model_path", help="finite model JSON file")
    p.add_argument("--builtin", choices=BUILTINS)
    p.add_argument("--param", dest="params", action="append", type=_param, default=[],
                   metavar="KEY=VALUE")
    p.add_argument("--numeric", choices=("exact", "float"), default="exact")
    p.add_argument("--format", dest="output_format", choices=("json", "text"), default="json")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mdpdec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("solve", help="bracket the optimal reachability value")
    _add_model(p)
    p.add_argument("--opt", type=Opt.parse, default=Opt.SUP)
    p.add_argument("--scheme", type=int, choices=(1, 2), default=2)
    p.add_argument("--epsilon", type=_epsilon, default=1e-3)
    p.add_argument("--max-horizon", dest="max_horizon", type=_positive_int, default=100_000)
    p.add_argument("--geometric", action="store_true")
    p.add_argument("--inner-tol", dest="inner_tol", type=_positive_float)
    p.add_argument("--trace", dest="trace_path")

    p = sub.add_parser("solve-finite", help="solve a finite model directly")
    _add_model(p)
    p.add_argument("--opt", type=Opt.parse, default=Opt.SUP)
    p.add_argument("--tol", type=_positive_float, default=1e-9)
    p.add_argument("--exact", action="store_true", help="exact rational value and witness")

    p = sub.add_parser("avoid", help="print the avoid set of a finite model")
    _add_model(p)
    p.add_argument("--opt", type=Opt.parse, default=Opt.SUP)

    p = sub.add_parser("check", help="sup-decisiveness diagnosis of a finite model")
    _add_model(p)

    p = sub.add_parser("mec", help="maximal end components of a finite model")
    _add_model(p)

    p = sub.add_parser("simulate", help="sample paths under a pure positional scheduler")
    _add_model(p)
    p.add_argument("--opt", type=Opt.parse, default=Opt.SUP)
    p.add_argument("--action", help="play this action everywhere")
    p.add_argument("--scheduler", dest="scheduler_path", help="JSON object state name -> action")
    p.add_argument("--horizon", type=int, default=1000)
    p.add_argument("--trials", type=_positive_int,
                   help="estimate decisiveness over this many paths instead of printing one")

    p = sub.add_parser("repro", help="rerun the shipped example scenarios")
    p.add_argument("scenario", nargs="?")
    p.add_argument("--all", dest="run_all", action="store_true")
    p.add_argument("--format", dest="output_format", choices=("json", "text"), default="text")
    return parser


_FINITE_ONLY = {"solve-finite", "avoid", "check", "mec"}


def parse_args(argv: Sequence[str]) -> RunConfig:
    ns = build_parser().parse_args(list(argv))
    values = {k: v for k, v in vars(ns).items() if v is not None}
    if "params" in values:
        values["params"] = tuple(values["params"])
    cfg = RunConfig(**values)
    if cfg.command == "repro":
        if bool(cfg.scenario) == cfg.run_all:
            raise UsageError("repro: give exactly one scenario name or --all")
        return cfg
    if (cfg.model_path is None) == (cfg.builtin is None):
        raise UsageError(f"{cfg.command}: give exactly one of --model or --builtin")
    if cfg.command in _FINITE_ONLY and cfg.builtin not in (None, "three-state"):
        raise UsageError(f"{cfg.command}: needs a finite model (--model or --builtin three-state)")
    if cfg.command == "simulate" and (cfg.action is None) == (cfg.scheduler_path is None):
        raise UsageError("simulate: give exactly one of --action or --scheduler")
    if cfg.command == "simulate" and cfg.horizon < 0:
        raise UsageError("simulate: horizon must be nonnegative")
    _check_params(cfg)
    return cfg


_KNOWN_PARAMS = {
    "walk": {"p", "q"},
    "mr": {"eps-schedule"},
    "ml": set(),
    "three-state": set(),
    "lcs-embed": {"lambda", "loss", "lcs-file", "lcs", "L"},
}


def _check_params(cfg: RunConfig) -> None:
    if cfg.builtin is None:
        if cfg.params:
            raise UsageError("--param only applies to --builtin models")
        return
    allowed = _KNOWN_PARAMS[cfg.builtin]
    for k, _ in cfg.params:
        if k not in allowed:
            raise UsageError(f"unknown parameter {k!r} for {cfg.builtin} (allowed: {sorted(allowed)})")


def _fraction(text: str, what: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"{what}: expected a rational like 1/3, got {text!r}") from None


def _eps_schedule(text: str) -> Callable[[int], Fraction]:
    if text == "inverse-square":
        return lambda i: Fraction(1, (i + 2) ** 2)
    kind, _, arg = text.partition(":")
    if kind == "power" and arg.isdigit() and int(arg) >= 2:
        k = int(arg)
        return lambda i: Fraction(1, (i + 2) ** k)
    raise UsageError(f"eps-schedule must be inverse-square or power:K with K >= 2, got {text!r}")


def build_model(cfg: RunConfig) -> Model:
    if cfg.model_path is not None:
        return read_finite_model(cfg.model_path, exact=cfg.numeric == "exact")
    name = cfg.builtin
    if name == "walk":
        p = _fraction(cfg.param("p", "1/3"), "p")
        q = _fraction(cfg.param("q", "1/2"), "q")
        try:
            return make_random_walk(WalkParams(p, q))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if name == "ml":
        return make_ml()
    if name == "mr":
        return make_mr(MrParams(_eps_schedule(cfg.param("eps-schedule", "inverse-square"))))
    if name == "three-state":
        return make_three_state()
    if cfg.param("lcs-file"):
        system = read_lcs(cfg.param("lcs-file"))
    elif cfg.param("lcs", "bounded") == "unbounded":
        system = unbounded_demo()
    else:
        length = cfg.param("L", "4")
        if not length.isdigit():
            raise UsageError(f"L must be a nonnegative integer, got {length!r}")
        system = bounded_demo(int(length))
    loss_kind = cfg.param("loss", "iid")
    if loss_kind == "all":
        loss = LoseAllWithProb()
    elif loss_kind == "iid":
        try:
            loss = PerMessageIID(_fraction(cfg.param("lambda", "1/10"), "lambda"))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    else:
        raise UsageError(f"loss must be iid or all, got {loss_kind!r}")
    return embed_lcs(system, loss)


@dataclass
class Outcome:
    code: int
    payload: dict
    text: str = ""
    result: SolveResult | None = field(default=None, repr=False)


def _solve(cfg: RunConfig, model: Model) -> Outcome:
    if cfg.scheme == 1:
        res = approx_scheme1(model, cfg.opt, cfg.epsilon, cfg.max_horizon, cfg.geometric)
    else:
        res = approx_scheme2(model, cfg.opt, cfg.epsilon, cfg.max_horizon, cfg.inner_tol,
                             cfg.geometric)
    if cfg.trace_path:
        res.trace.write_csv(cfg.trace_path)
    code = EXIT_BUDGET if res.status is Status.BUDGET_EXHAUSTED else EXIT_OK
    last = res.trace.rows[-1].n if res.trace.rows else 0
    text = (f"{res.status.value}: value {res.value:.12g} in [{res.lower:.12g}, {res.upper:.12g}] "
            f"(scheme {res.scheme}, {res.opt.value}, n = {last})")
    if res.diagnosis:
        text += f"\n{res.diagnosis}"
    return Outcome(code, res.to_dict(), text, res)


def _finite(model: Model):
    from .core import FiniteMdp

    if not isinstance(model, FiniteMdp):
        raise UsageError("this command needs a finite model")
    return model


def _solve_finite(cfg: RunConfig, model: Model) -> Outcome:
    m = _finite(model)
    if cfg.exact:
        ev = exact_oracle(m, cfg.opt)
        witness = {m.name_of(s): a for s, a in ev.choice.items()}
        payload = {"value": str(ev.value), "value_float": float(ev.value), "method": ev.method,
                   "witness": witness}
        return Outcome(EXIT_OK, payload, f"value {ev.value} ({ev.method})")
    lo, hi = solve_reach_finite(m, cfg.opt, cfg.tol)
    return Outcome(EXIT_OK, {"lower": lo, "upper": hi}, f"value in [{lo:.12g}, {hi:.12g}]")


def _avoid(cfg: RunConfig, model: Model) -> Outcome:
    m = _finite(model)
    keys = m.avoid_set(cfg.opt)
    names = [m.name_of(s) for s in m.states if s in keys]
    return Outcome(EXIT_OK, {"avoid": names}, json.dumps(names, ensure_ascii=False))


def _check(cfg: RunConfig, model: Model) -> Outcome:
    rep = check_sup_decisive_finite(_finite(model))
    return Outcome(EXIT_OK, {"sup_decisive": rep.decisive, "diagnosis": rep.diagnosis},
                   rep.diagnosis)


def _mec(cfg: RunConfig, model: Model) -> Outcome:
    m = _finite(model)
    comps = [
        {"states": [m.name_of(s) for s in m.states if s in c.states],
         "actions": {m.name_of(s): list(a) for s, a in c.actions.items()}}
        for c in mec_decomposition(m)
    ]
    return Outcome(EXIT_OK, {"mecs": comps}, json.dumps(comps, ensure_ascii=False))


def _scheduler(cfg: RunConfig) -> PurePositionalScheduler:
    if cfg.action is not None:
        return PurePositionalScheduler.constant(cfg.action)
    try:
        mapping = json.loads(Path(cfg.scheduler_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read scheduler file: {exc}") from None
    if not isinstance(mapping, dict):
        raise UsageError("scheduler file must hold a JSON object")
    return PurePositionalScheduler(mapping)


def _simulate(cfg: RunConfig, model: Model) -> Outcome:
    sched = _scheduler(cfg)
    if cfg.trials:
        est = estimate_decisiveness(model, sched, cfg.opt, cfg.trials, cfg.horizon, cfg.seed)
        payload = {"estimate": est.estimate, "wilson_95": list(est.interval), "trials": est.trials,
                   "hit_goal": est.hits_goal, "hit_avoid": est.hits_avoid}
        text = (f"estimate {est.estimate:.6f}, 95% interval "
                f"[{est.interval[0]:.6f}, {est.interval[1]:.6f}] over {est.trials} paths")
        return Outcome(EXIT_OK, payload, text)
    path = simulate(model, sched, cfg.horizon, cfg.seed, cfg.opt)
    names = [model.name(s) for s in path.states]
    payload = {"path": names, "terminal_reason": path.terminal_reason.value}
    return Outcome(EXIT_OK, payload, f"{' -> '.join(names)} [{path.terminal_reason.value}]")


_HANDLERS = {
    "solve": _solve,
    "solve-finite": _solve_finite,
    "avoid": _avoid,
    "check": _check,
    "mec": _mec,
    "simulate": _simulate,
}


def execute(cfg: RunConfig) -> Outcome:
    """Run one non-repro command and return its exit code and JSON payload."""
    return _HANDLERS[cfg.command](cfg, build_model(cfg))


# ---------------------------------------------------------------- repro


@dataclass(frozen=True)
class Scenario:
    """One shipped example: where it comes from, what to run, what to expect."""

    name: str
    anchor: str
    expectation: str
    check: Callable[[], tuple[bool, str]]


def _cfg(**kw) -> RunConfig:
    return RunConfig(command=kw.pop("command", "solve"), **kw)


def _rows_all(res: SolveResult, pred) -> bool:
    return bool(res.trace.rows) and all(pred(r) for r in res.trace.rows)


def _three_state_stuck():
    out = execute(_cfg(builtin="three-state", opt=Opt.SUP, scheme=1, epsilon=0.4, max_horizon=100))
    res = out.result
    ok = (res.status is Status.BUDGET_EXHAUSTED and len(res.trace) == 100
          and _rows_all(res, lambda r: abs(r.lower - 0.5) <= 1e-12 and abs(r.upper - 1) <= 1e-12))
    return ok, f"{res.status.value}, last interval [{res.lower}, {res.upper}]"


def _three_state_scheme2():
    res = execute(_cfg(builtin="three-state", opt=Opt.SUP, scheme=2, epsilon=1e-3)).result
    ok = res.status is Status.CONVERGED and abs(res.value - 0.5) <= 1e-3
    return ok, f"{res.status.value}, value {res.value:.9f}"


def _three_state_check():
    out = execute(_cfg(command="check", builtin="three-state"))
    want = "not sup-decisive: MEC {s0} exits via beta"
    return out.payload["diagnosis"] == want, out.payload["diagnosis"]


def _mr_stuck():
    out = execute(_cfg(builtin="mr", opt=Opt.SUP, scheme=2, epsilon=0.1, max_horizon=200))
    res = out.result
    ok = out.code == EXIT_BUDGET and _rows_all(res, lambda r: abs(r.upper - 1) <= 1e-9)
    return ok, f"{res.status.value}, lower {res.lower:.6f}, upper {res.upper}"


def _walk_decisive():
    base = dict(builtin="walk", params=(("p", "1/3"), ("q", "1/2")), opt=Opt.INF, epsilon=1e-3)
    r1 = execute(_cfg(scheme=1, **base)).result
    r2 = execute(_cfg(scheme=2, **base)).result
    ok = (r1.status is Status.CONVERGED and r2.status is Status.CONVERGED
          and abs(r1.value - r2.value) <= 2e-3)
    return ok, f"scheme 1 {r1.value:.6f}, scheme 2 {r2.value:.6f}"


def _walk_gap():
    base = dict(builtin="walk", params=(("p", "2/3"), ("q", "3/4")), opt=Opt.INF, epsilon=1e-2)
    r1 = execute(_cfg(scheme=1, max_horizon=1000, **base)).result
    r2 = execute(_cfg(scheme=2, max_horizon=60, **base)).result
    ok = all(r.status is Status.BUDGET_EXHAUSTED and r.gap >= 0.2 for r in (r1, r2))
    return ok, f"gaps {r1.gap:.4f} (scheme 1, n=1000) and {r2.gap:.4f} (scheme 2, n=60)"


def _ml_inf_trivial():
    res = execute(_cfg(builtin="ml", opt=Opt.INF, scheme=2, epsilon=1e-3)).result
    ok = res.status is Status.TRIVIAL_ZERO and res.value_interval == (0.0, 0.0)
    return ok, res.status.value


def _ml_sup_stuck():
    res = execute(_cfg(builtin="ml", opt=Opt.SUP, scheme=1, epsilon=0.1, max_horizon=200)).result
    ok = res.status is Status.BUDGET_EXHAUSTED and abs(res.upper - 1) <= 1e-9
    return ok, f"{res.status.value}, interval [{res.lower:.6f}, {res.upper:.6f}]"


def _walk_mc():
    out = execute(_cfg(command="simulate", builtin="walk", params=(("p", "2/3"), ("q", "1/2")),
                       opt=Opt.INF, action="alpha", trials=20_000, horizon=10_000, seed=7))
    lo, hi = out.payload["wilson_95"]
    return lo <= 0.5 <= hi, out.text


def _mr_mc():
    out = execute(_cfg(command="simulate", builtin="mr", opt=Opt.SUP, action="alpha",
                       trials=20_000, horizon=2_000, seed=7))
    est = out.payload["estimate"]
    return abs(est - 0.5) <= 0.02, out.text


def _lcs_bounded():
    model = build_model(_cfg(builtin="lcs-embed", params=(("lcs", "bounded"), ("L", "4"))))
    solver = SliceSolver(Explorer(collapse(model, Opt.SUP)), Opt.SUP, 1e-10)
    worst = max(solver.bounds(n).lower for n in range(1, 201))
    return worst <= 1 - 2**-4 + 1e-9, f"largest lower bound over 200 slices {worst:.12f}"


def _lcs_unbounded():
    res = execute(_cfg(builtin="lcs-embed", params=(("lcs", "unbounded"),), opt=Opt.SUP,
                       scheme=2, epsilon=1e-3, max_horizon=200)).result
    return res.lower > 0.9, f"{res.status.value}, lower {res.lower:.6f}"


SCENARIOS: dict[str, Scenario] = {
    s.name: s
    for s in [
        Scenario("three-state-scheme1-stuck", "three-state example (unfolding scheme)",
                 "BudgetExhausted, [1/2, 1] at all 100 rows", _three_state_stuck),
        Scenario("three-state-scheme2", "three-state example (slicing scheme)",
                 "Converged to 1/2 within 1e-3", _three_state_scheme2),
        Scenario("three-state-not-sup-decisive", "three-state example (decisiveness)",
                 "diagnosis names the exit via beta", _three_state_check),
        Scenario("mr-sup-stuck", "M^R, eps_i = 1/(i+2)^2",
                 "BudgetExhausted, upper bound 1 on every row", _mr_stuck),
        Scenario("walk-inf-decisive", "random walk, p = 1/3, q = 1/2",
                 "both schemes converge and agree within 2e-3", _walk_decisive),
        Scenario("walk-inf-persistent-gap", "random walk, p = 2/3, q = 3/4",
                 "both schemes stop with a gap of at least 0.2", _walk_gap),
        Scenario("ml-inf-trivial", "M^L, inf", "TrivialZero", _ml_inf_trivial),
        Scenario("ml-sup-stuck", "M^L, sup",
                 "BudgetExhausted with upper bound 1", _ml_sup_stuck),
        Scenario("walk-montecarlo", "random walk, p = 2/3, always alpha",
                 "Wilson interval contains 1/2", _walk_mc),
        Scenario("mr-montecarlo", "M^R, always alpha",
                 "estimate within 0.02 of 1/2", _mr_mc),
        Scenario("lcs-bounded-cap", "try/restart embedding, bounded channel",
                 "lower bounds never exceed 1 - 2^-4", _lcs_bounded),
        Scenario("lcs-unbounded-exceeds", "try/restart embedding, unbounded channel",
                 "lower bound exceeds 0.9", _lcs_unbounded),
    ]
}


def repro(name: str) -> dict:
    if name not in SCENARIOS:
        raise ScenarioUnknown(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}")
    sc = SCENARIOS[name]
    try:
        ok, detail = sc.check()
    except MdpError as exc:
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return {"scenario": name, "anchor": sc.anchor, "expected": sc.expectation,
            "passed": bool(ok), "detail": detail}


def repro_all(workers: int | None = None) -> list[dict]:
    names = list(SCENARIOS)
    workers = workers or min(len(names), os.cpu_count() or 1)
    if workers <= 1:
        return [repro(n) for n in names]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(repro, names))


def _run_repro(cfg: RunConfig) -> Outcome:
    reports = repro_all() if cfg.run_all else [repro(cfg.scenario)]
    lines = [
        f"{'PASS' if r['passed'] else 'FAIL'} {r['scenario']} [{r['anchor']}]: {r['detail']}"
        for r in reports
    ]
    code = EXIT_OK if all(r["passed"] for r in reports) else EXIT_ERROR
    return Outcome(code, {"scenarios": reports}, "\n".join(lines))


def run(cfg: RunConfig, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        outcome = _run_repro(cfg) if cfg.command == "repro" else execute(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=err)
        return EXIT_USAGE
    except (MdpError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=err)
        return EXIT_ERROR
    if cfg.output_format == "json":
        print(json.dumps(outcome.payload, indent=2, ensure_ascii=False), file=out)
    else:
        print(outcome.text, file=out)
    return outcome.code


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
