"""Command-line entry point.

Subcommands: generate, fit, solve, eval, sweep, oracle-check, step.
Exit status is 0 on success, 1 on usage errors and 2 on data or spec errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from trialsearch import io
from trialsearch.core import STOP, Context, History, TrialSearchError, extend, untried
from trialsearch.dgp import (
    STREAM_INSTANCE,
    DgpParams,
    build_instance,
    build_toy,
    generate_observational,
    generate_subjects,
    random_latent_model,
    stream_rng,
)
from trialsearch.evaluation import (
    EvalConfig,
    build_policy,
    evaluate,
    fit_emulated_behavior,
    fit_model,
    sweep,
)
from trialsearch.model import LogisticModelConfig
from trialsearch.solvers import (
    CdpPolicy,
    GreedyPolicy,
    brute_force_optimal,
    expected_search_length,
    reachable_histories,
    solve_cdp,
    solve_ndp,
)
from trialsearch.stopping import BoundMode, StoppingConfig, gamma, rho


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# -- option plumbing -------------------------------------------------------------

DEFAULTS = {
    ("stopping", "delta"): 0.0,
    ("stopping", "epsilon"): 0.0,
    ("stopping", "alpha"): 1.0,
    ("stopping", "bound"): "exact",
    ("solver", "solver"): "cdp",
    ("solver", "lambda"): 0.35,
    ("smoothing", "estimator"): "historical",
    ("smoothing", "beta0"): 0.1,
    ("seeds", "seed"): 0,
    ("eval", "epsilon"): None,
}


def _opt(args, config: dict, section: str, name: str, attr: str | None = None):
    """Explicit flag, else config file entry, else built-in default."""
    value = getattr(args, attr or name.replace("-", "_"), None)
    if value is not None:
        return value
    sec = config.get(section, {})
    if isinstance(sec, dict) and name in sec:
        return sec[name]
    if section == "seeds" and isinstance(config.get("seeds"), int):
        return config["seeds"]
    return DEFAULTS.get((section, name))


def _stopping(args, config) -> StoppingConfig:
    return StoppingConfig(
        epsilon=float(_opt(args, config, "stopping", "epsilon")),
        delta=float(_opt(args, config, "stopping", "delta")),
        alpha=float(_opt(args, config, "stopping", "alpha")),
        bound_mode=BoundMode(_opt(args, config, "stopping", "bound")),
        average_orders=bool(getattr(args, "average_orders", False)),
    )


def _path(args, config, name, attr=None, required=True):
    value = getattr(args, attr or name, None)
    if value is None:
        value = config.get("paths", {}).get(name)
    if value is None and required:
        raise UsageError(f"missing required path --{name.replace('_', '-')}")
    return value


def _add_stopping(p):
    p.add_argument("--delta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--bound", choices=[m.value for m in BoundMode])
    p.add_argument("--average-orders", action="store_true",
                   help="average the exact statistic over all future action orders")


def _add_model_source(p):
    p.add_argument("--model", dest="model_path", help="fitted model JSON")
    p.add_argument("--toy", choices=["example1", "a6"])
    p.add_argument("--toy-epsilon", type=float, default=0.1, help="outcome gap of the a6 instance")


def _load_model(args, config):
    if args.toy:
        return build_toy(args.toy, args.toy_epsilon).model
    path = _path(args, config, "model", "model_path")
    return io.load_model(path)


def _parse_grid(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"invalid grid {text!r}") from None


# -- commands --------------------------------------------------------------------


def cmd_generate(args, config):
    dgp = config.get("dgp", {})
    seed = int(_opt(args, config, "seeds", "seed"))
    params = DgpParams(
        k=args.k or dgp.get("k", 5),
        n_y=args.ny or dgp.get("n_y", 3),
        d=args.d or dgp.get("d", 3),
        v=args.v or dgp.get("v", 1),
        w_x=args.wx if args.wx is not None else dgp.get("w_x", 1.0),
        p_stop=args.pstop if args.pstop is not None else dgp.get("p_stop", 0.1),
        seed=seed,
    )
    out = Path(_path(args, config, "out"))
    out.mkdir(parents=True, exist_ok=True)
    inst = build_instance(params)
    n_train = args.n_train if args.n_train is not None else dgp.get("n_train", 1000)
    n_test = args.n_test if args.n_test is not None else dgp.get("n_test", 1000)
    train = generate_observational(inst, n_train)
    test = generate_subjects(inst, n_test)
    io.save_spec(out / "spec.json", inst.spec)
    io.save_instance(out / "instance.json", inst)
    io.write_trajectories(out / "train.csv", train)
    io.write_panels(out / "test_panel.csv", inst.spec, test)
    print(f"wrote {n_train} trajectories and {n_test} panels to {out}")
    return 0


def cmd_fit(args, config):
    spec = io.load_spec(_path(args, config, "spec"))
    data = io.read_trajectories(_path(args, config, "in", "inp"), spec)
    estimator = _opt(args, config, "smoothing", "estimator")
    logistic = LogisticModelConfig(
        learning_rate=args.lr, epochs=args.epochs, l2_penalty=args.l2,
        seed=int(_opt(args, config, "seeds", "seed")))
    model = fit_model(data, estimator, float(_opt(args, config, "smoothing", "beta0")), logistic)
    io.save_model(_path(args, config, "out"), model)
    print(f"fitted {estimator} model on {len(data)} trajectories")
    return 0


def cmd_solve(args, config):
    model = _load_model(args, config)
    cfg = _stopping(args, config)
    solver = _opt(args, config, "solver", "solver")
    lam = float(_opt(args, config, "solver", "lambda", "lam"))
    contexts = model.contexts() if hasattr(model, "contexts") else model.spec.contexts()
    policy = build_policy(solver, model, lam if solver == "ndp" else cfg.delta, cfg, contexts)
    if isinstance(policy, CdpPolicy):
        print(f"expected search length: {policy.expected_search_length():.10g}")
    elif args.toy:
        ctx = contexts[0]
        print(f"expected search length: {expected_search_length(policy, model, ctx):.10g}")
    for ctx in contexts:
        a = policy.decide(History(ctx))
        print(f"context {ctx.coords}: first action {'STOP' if a == STOP else a}")
    if args.out:
        io.save_policy(args.out, policy)
    return 0


def _eval_rows(policy, subjects, cfg, solver, estimator, parameter, value, seed, spec):
    metrics = evaluate(policy, subjects, cfg, spec)
    return {"solver": solver, "estimator": estimator, "parameter": parameter, "value": value,
            "seed": seed, "metrics": metrics}


def cmd_eval(args, config):
    seed = int(_opt(args, config, "seeds", "seed"))
    eps = _opt(args, config, "eval", "epsilon", "eval_epsilon")
    if args.behavior:
        spec = io.load_spec(_path(args, config, "spec"))
        policy = fit_emulated_behavior(io.read_trajectories(args.behavior, spec), seed)
        solver, value, parameter = "behavior", "", ""
    else:
        policy = io.load_policy(_path(args, config, "policy"))
        spec = policy.spec
        solver = policy.kind
        if solver == "ndp":
            parameter, value = "lambda", policy.lam
        else:
            parameter, value = "delta", policy.stopping.delta
    subjects = io.read_panels(_path(args, config, "panel"), spec)
    cfg = EvalConfig(float(eps or 0.0), args.max_steps, seed)
    row = _eval_rows(policy, subjects, cfg, solver, args.estimator_label, parameter, value, seed, spec)
    m = row["metrics"]
    print(f"efficacy {m.efficacy:.4f} (se {m.efficacy_se:.4f}); "
          f"mean search time {m.mean_search_time:.4f}; worst {m.worst_search_time}")
    io.write_results(_path(args, config, "out"), [row])
    if args.curve_out:
        io.write_curves(args.curve_out, [row])
    return 0


def cmd_sweep(args, config):
    seed = int(_opt(args, config, "seeds", "seed"))
    solver = _opt(args, config, "solver", "solver")
    if args.grid:
        grid = _parse_grid(args.grid)
    else:
        lo = 0.0 if args.grid_min is None else args.grid_min
        hi = (0.5 if solver == "ndp" else 1.0) if args.grid_max is None else args.grid_max
        grid = list(np.linspace(lo, hi, args.grid_points))
        if solver == "ndp":
            grid = [g if g > 0 else 1e-4 for g in grid]
    if not grid:
        raise UsageError("empty grid")
    if args.toy:
        toy = build_toy(args.toy, args.toy_epsilon)
        model, spec = toy.model, toy.spec
        subjects, weights = toy.exact_subjects()
        estimator = "true"
    else:
        spec = io.load_spec(_path(args, config, "spec"))
        estimator = _opt(args, config, "smoothing", "estimator")
        if args.model_path:
            model = io.load_model(args.model_path)
            estimator = getattr(model, "kind", estimator)
        else:
            train = io.read_trajectories(_path(args, config, "in", "inp"), spec)
            model = fit_model(train, estimator, float(_opt(args, config, "smoothing", "beta0")))
        subjects = io.read_panels(_path(args, config, "panel"), spec)
        weights = None
    eps = _opt(args, config, "eval", "epsilon", "eval_epsilon")
    stopping = _stopping(args, config)
    cfg = EvalConfig(float(eps if eps is not None else stopping.epsilon), args.max_steps, seed)
    result = sweep(solver, grid, model, subjects, cfg, stopping, weights=weights)
    rows = []
    for r in result.rows:
        rows.append({"solver": solver, "estimator": estimator, "parameter": result.parameter,
                     "value": r.value, "seed": seed, "metrics": r.metrics})
        firsts = ", ".join(f"{c.coords}:{'STOP' if a == STOP else a}" for c, a in r.first_actions.items())
        print(f"{result.parameter}={r.value:.6g} efficacy={r.metrics.efficacy:.4f} "
              f"time={r.metrics.mean_search_time:.4f} first=[{firsts}]")
    io.write_results(_path(args, config, "out"), rows)
    if args.curve_out:
        io.write_curves(args.curve_out, rows)
    return 0


def oracle_check(n_instances: int, k: int, n_y: int, seed: int, max_contexts: int = 2,
                 deltas=(0.0, 0.2, 0.5)) -> list[dict]:
    """Compare CDP against the brute-force oracle on random latent-class models."""
    reports = []
    for i in range(n_instances):
        rng = stream_rng(seed, STREAM_INSTANCE, i)
        n_ctx = int(rng.integers(1, max_contexts + 1))
        kk = int(rng.integers(1, k + 1))
        model = random_latent_model(rng, kk, n_y, n_ctx, n_latent=int(rng.integers(1, 4)),
                                    deterministic=bool(rng.integers(2)))
        delta = float(deltas[int(rng.integers(len(deltas)))])
        cfg = StoppingConfig(0.0, delta)
        policy = solve_cdp(model, cfg)
        cdp_len, oracle_len, feasible = 0.0, 0.0, True
        for ctx in model.contexts():
            w = model.context_weights[ctx]
            cdp_len += w * -policy.value(History(ctx))
            oracle_len += w * brute_force_optimal(model, cfg, context=ctx)[0]
            feasible &= all(gamma(model, h, cfg) for h in reachable_histories(policy, model, ctx)
                            if policy.decide(h) == STOP)
        reports.append({"instance": i, "k": kk, "contexts": n_ctx, "delta": delta,
                        "cdp": cdp_len, "oracle": oracle_len, "feasible": feasible,
                        "match": abs(cdp_len - oracle_len) <= 1e-9 and feasible})
    return reports


def cmd_oracle_check(args, config):
    seed = int(_opt(args, config, "seeds", "seed"))
    reports = oracle_check(args.instances, args.k, args.ny, seed, args.contexts)
    for r in reports:
        if not r["match"]:
            print(f"instance {r['instance']}: cdp {r['cdp']:.12g} oracle {r['oracle']:.12g} "
                  f"feasible {r['feasible']}", file=sys.stderr)
    n_ok = sum(r["match"] for r in reports)
    print(f"{n_ok}/{len(reports)} matches")
    return 0 if n_ok == len(reports) else 2


def cmd_step(args, config, stdin=None, stdout=None):
    stdin = stdin or sys.stdin
    out = stdout or sys.stdout
    model = _load_model(args, config)
    spec = model.spec
    cfg = _stopping(args, config)
    solver = _opt(args, config, "solver", "solver")
    lam = float(_opt(args, config, "solver", "lambda", "lam"))
    coords = tuple(int(c) for c in args.context.split(",")) if args.context else (0,) * len(spec.context_dims)
    ctx = Context(coords)
    spec.validate_context(ctx)
    policy = build_policy(solver, model, lam if solver == "ndp" else cfg.delta, cfg, [ctx])
    h = History(ctx)
    print(f"solver {solver}; stopping threshold delta/alpha = {cfg.threshold:.6g} "
          f"(delta={cfg.delta}, alpha={cfg.alpha}, epsilon={cfg.epsilon})", file=out)
    while True:
        rhos = {m.value: rho(model, h, cfg.epsilon, m) for m in BoundMode}
        print("rho " + " ".join(f"{k}={v:.6f}" for k, v in rhos.items()), file=out)
        a = policy.decide(h)
        if a == STOP or not untried(h, spec.k):
            print(f"STOP (stop permitted: {gamma(model, h, cfg)})", file=out)
            return 0
        print(f"recommend action {a}; enter outcome index (0..{spec.n_outcomes - 1}), "
              f"'<action> <outcome>' for another action, or q", file=out)
        out.flush()
        line = stdin.readline()
        if not line or line.strip().lower() in ("q", "quit", "exit"):
            print("quit", file=out)
            return 0
        parts = line.split()
        try:
            if len(parts) == 1:
                act, y = a, int(parts[0])
            elif len(parts) == 2:
                act, y = int(parts[0]), int(parts[1])
            else:
                raise ValueError
            spec.validate_trial(act, y)
            h = extend(h, act, y)
        except (ValueError, TrialSearchError) as exc:
            print(f"invalid input {line.strip()!r}: {exc}", file=out)


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="trialsearch", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON config; explicit flags take precedence")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("generate", help="synthetic training trajectories and test panels")
    g.add_argument("--seed", type=int)
    g.add_argument("--k", type=int)
    g.add_argument("--ny", type=int)
    g.add_argument("--d", type=int)
    g.add_argument("--v", type=int)
    g.add_argument("--wx", type=float)
    g.add_argument("--pstop", type=float)
    g.add_argument("--n-train", type=int)
    g.add_argument("--n-test", type=int)
    g.add_argument("--out", help="output directory")

    f = sub.add_parser("fit", help="fit an outcome model")
    f.add_argument("--spec")
    f.add_argument("--in", dest="inp")
    f.add_argument("--estimator", choices=["tabular", "historical", "logistic"])
    f.add_argument("--beta0", type=float)
    f.add_argument("--lr", type=float, default=0.5)
    f.add_argument("--epochs", type=int, default=500)
    f.add_argument("--l2", type=float, default=1e-4)
    f.add_argument("--seed", type=int)
    f.add_argument("--out")

    s = sub.add_parser("solve", help="solve a policy")
    _add_model_source(s)
    _add_stopping(s)
    s.add_argument("--solver", choices=["cdp", "greedy", "ndp"])
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")

    e = sub.add_parser("eval", help="evaluate a policy on complete panels")
    e.add_argument("--policy")
    e.add_argument("--behavior", metavar="TRAIN_CSV", help="evaluate the emulated behavior policy")
    e.add_argument("--spec")
    e.add_argument("--panel")
    e.add_argument("--epsilon", dest="eval_epsilon", type=float)
    e.add_argument("--max-steps", type=int)
    e.add_argument("--estimator", dest="estimator_label", default="")
    e.add_argument("--seed", type=int)
    e.add_argument("--out")
    e.add_argument("--curve-out")

    w = sub.add_parser("sweep", help="sweep delta or lambda")
    _add_model_source(w)
    _add_stopping(w)
    w.add_argument("--solver", choices=["cdp", "greedy", "ndp"])
    w.add_argument("--estimator", choices=["tabular", "historical", "logistic"])
    w.add_argument("--beta0", type=float)
    w.add_argument("--spec")
    w.add_argument("--in", dest="inp")
    w.add_argument("--panel")
    w.add_argument("--grid", help="comma-separated parameter values")
    w.add_argument("--grid-min", type=float)
    w.add_argument("--grid-max", type=float)
    w.add_argument("--grid-points", type=int, default=10)
    w.add_argument("--eval-epsilon", type=float)
    w.add_argument("--max-steps", type=int)
    w.add_argument("--seed", type=int)
    w.add_argument("--out")
    w.add_argument("--curve-out")

    o = sub.add_parser("oracle-check", help="compare CDP with brute-force enumeration")
    o.add_argument("--instances", type=int, default=50)
    o.add_argument("--k", type=int, default=3)
    o.add_argument("--ny", type=int, default=2)
    o.add_argument("--contexts", type=int, default=2)
    o.add_argument("--seed", type=int)

    st = sub.add_parser("step", help="interactive stepping session")
    _add_model_source(st)
    _add_stopping(st)
    st.add_argument("--solver", choices=["cdp", "greedy", "ndp"])
    st.add_argument("--lambda", dest="lam", type=float)
    st.add_argument("--context", help="comma-separated context coordinates")
    return p


COMMANDS = {
    "generate": cmd_generate,
    "fit": cmd_fit,
    "solve": cmd_solve,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "oracle-check": cmd_oracle_check,
    "step": cmd_step,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise UsageError("a command is required")
        config = io.load_config(args.config) if args.config else {}
        return COMMANDS[args.command](args, config)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (TrialSearchError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
