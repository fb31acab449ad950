"""Command-line driver: generate instances, analyze parameter rules, run
asynchronous simulations, and produce the rate-vs-error and convergence
comparison sweeps as plot-ready CSV.

Settings resolve in order: built-in default < config file (--config, a flat
JSON object keyed by flag name) < ABQP_SEED environment variable (seed
only) < explicit command-line flag. Exit codes: 0 success, 2 invalid
input, 3 internal invariant violation (a failed envelope check under valid
stepsizes).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import bounds, qp as qpmod, sim
from .generate import generate
from .qp import Regularization
from .rates import compute_rates, select_regularization_for_rate

FIG1_INITIAL_RATES = (0.99, 0.95, 0.85, 0.70, 0.50, 0.30, 0.01)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INVARIANT = 3


class InputError(Exception):
    """Bad configuration, flags, or input files (exit code 2)."""


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise InputError("config must be a JSON object of flag values")
    return cfg


def _setting(args, cfg: dict, name: str, default=None):
    """Flag wins over config; config wins over the default."""
    val = getattr(args, name, None)
    if val is not None:
        return val
    return cfg.get(name, default)


def _resolve_seed(args, cfg: dict, default: int = 0) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("ABQP_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"ABQP_SEED is not an integer: {env!r}") from None
    return int(cfg.get("seed", default))


def _parse_delay(text: str):
    if text == "zero":
        return sim.ZeroDelay()
    kind, _, arg = text.partition(":")
    try:
        if kind == "fixed":
            return sim.FixedDelay(int(arg))
        if kind == "geometric":
            return sim.GeometricDelay(float(arg))
    except ValueError as exc:
        raise InputError(f"bad delay spec {text!r}: {exc}") from None
    raise InputError(f"unknown delay spec {text!r}; use zero, fixed:K, or geometric:P")


def _load_qp(path):
    try:
        problem = qpmod.load(path)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot load QP from {path}: {exc}") from None
    report = qpmod.validate(problem)
    if not report.ok:
        raise InputError(f"invalid QP in {path}: " + "; ".join(report.failures))
    return problem


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _print_block_table(rows: list[dict], columns: list[str], limit: int = 12) -> None:
    header = "  ".join(f"{c:>14s}" for c in ["block"] + columns)
    print(header)
    shown = rows if len(rows) <= limit else rows[: limit - 2]
    for row in shown:
        cells = [f"{row['block']:>14d}"] + [f"{row[c]:>14.6g}" for c in columns]
        print("  ".join(cells))
    if len(rows) > limit:
        print(f"{'...':>14s}  ({len(rows) - len(shown)} more blocks)")
        row = rows[-1]
        cells = [f"{row['block']:>14d}"] + [f"{row[c]:>14.6g}" for c in columns]
        print("  ".join(cells))


# --- subcommands -------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = _load_config(args.config)
    blocks = int(_setting(args, cfg, "blocks", 100))
    block_size = int(_setting(args, cfg, "block_size", 1))
    q_target = float(_setting(args, cfg, "q_target", 0.5))
    eig_lo = float(_setting(args, cfg, "eig_lo", 1.0))
    eig_hi = float(_setting(args, cfg, "eig_hi", 10.0))
    constraints = _setting(args, cfg, "constraints", "unconstrained")
    box_margin = float(_setting(args, cfg, "box_margin", 1.0))
    seed = _resolve_seed(args, cfg)
    out = _setting(args, cfg, "out")
    if out is None:
        raise InputError("generate needs --out for the QP file")

    problem = generate(
        num_blocks=blocks,
        block_sizes=block_size,
        q_target=q_target,
        eig_range=(eig_lo, eig_hi),
        seed=seed,
        constraints=constraints,
        box_margin=box_margin,
    )
    qpmod.save(problem, out)

    from .blocks import dominance_gaps

    gaps = dominance_gaps(problem.Q)
    rates = compute_rates(problem)
    rows = [
        {
            "block": i,
            "gap": float(gaps[i]),
            "gamma_opt": rates.gamma_opt[i],
            "rate": rates.block_rates[i],
        }
        for i in range(problem.partition.num_blocks)
    ]
    print(f"wrote {out}: {blocks} blocks, n={problem.partition.n}, seed={seed}")
    _print_block_table(rows, ["gap", "gamma_opt", "rate"])
    print(f"network rate q = {rates.network_rate:.6f} (target {q_target})")
    if args.report is not None:
        _write_json(
            args.report,
            {
                "seed": seed,
                "q_target": q_target,
                "network_rate": rates.network_rate,
                "gaps": [float(g) for g in gaps],
                "block_rates": list(rates.block_rates),
                "gamma_opt": list(rates.gamma_opt),
                "gamma_bound": list(rates.gamma_bound),
            },
        )
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _load_config(args.config)
    problem = _load_qp(args.qp)
    from .blocks import dominance_gaps

    gaps = dominance_gaps(problem.Q)
    rates = compute_rates(problem)
    N = problem.partition.num_blocks

    result: dict = {
        "network_rate": rates.network_rate,
        "blocks": [
            {
                "block": i,
                "gap": float(gaps[i]),
                "gamma_bound": rates.gamma_bound[i],
                "gamma_opt": rates.gamma_opt[i],
                "rate": rates.block_rates[i],
            }
            for i in range(N)
        ],
    }
    columns = ["gap", "gamma_bound", "gamma_opt", "rate"]

    q_star = _setting(args, cfg, "q_star")
    if q_star is not None:
        q_star = float(q_star)
        try:
            reg, reg_rates = select_regularization_for_rate(problem, q_star)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        result["rate_target"] = q_star
        result["regularized_rate"] = reg_rates.network_rate
        result["implied_cost_error"] = bounds.implied_cost_error(problem, reg)
        for i in range(N):
            result["blocks"][i]["alpha_for_rate"] = reg.alphas[i]
            result["blocks"][i]["gamma_for_rate"] = reg_rates.gamma[i]
        columns += ["alpha_for_rate", "gamma_for_rate"]

    epsilon = _setting(args, cfg, "epsilon")
    if epsilon is not None:
        epsilon = float(epsilon)
        try:
            caps = [bounds.cost_error_alpha_cap(epsilon, float(g)) for g in gaps]
        except ValueError as exc:
            raise InputError(str(exc)) from None
        result["epsilon"] = epsilon
        for i in range(N):
            result["blocks"][i]["alpha_cap_cost"] = caps[i]
        columns.append("alpha_cap_cost")

    eta = _setting(args, cfg, "eta")
    if eta is not None:
        eta = float(eta)
        try:
            caps = [bounds.solution_error_alpha_cap(eta, float(g)) for g in gaps]
        except ValueError as exc:
            raise InputError(str(exc)) from None
        result["eta"] = eta
        for i in range(N):
            result["blocks"][i]["alpha_cap_solution"] = caps[i]
        columns.append("alpha_cap_solution")

    _print_block_table(result["blocks"], columns)
    print(f"network rate q = {rates.network_rate:.6f}")
    if q_star is not None:
        print(
            f"rate target {q_star}: regularized rate {result['regularized_rate']:.6f}, "
            f"implied relative cost error {result['implied_cost_error']:.6f}"
        )
    if args.json is not None:
        _write_json(args.json, result)
    return EXIT_OK


def _regularization_from_args(args, cfg, problem):
    q_star = _setting(args, cfg, "q_star")
    alphas = _setting(args, cfg, "alphas")
    if q_star is not None and alphas is not None:
        raise InputError("give either --q-star or --alphas, not both")
    if q_star is not None:
        reg, reg_rates = select_regularization_for_rate(problem, float(q_star))
        return reg, reg_rates
    if alphas is not None:
        if isinstance(alphas, str):
            values = tuple(float(a) for a in alphas.split(","))
        else:
            values = tuple(float(a) for a in alphas)
        if len(values) != problem.partition.num_blocks:
            raise InputError(
                f"need {problem.partition.num_blocks} alphas, got {len(values)}"
            )
        reg = Regularization(values)
        return reg, compute_rates(problem, reg)
    return None, compute_rates(problem)


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    problem = _load_qp(args.qp)
    try:
        reg, rates = _regularization_from_args(args, cfg, problem)
        model = sim.AsynchronyModel(
            p_update=float(_setting(args, cfg, "p_update", 1.0)),
            p_transmit=float(_setting(args, cfg, "p_transmit", 1.0)),
            delay=_parse_delay(_setting(args, cfg, "delay", "zero")),
            seed=_resolve_seed(args, cfg),
            max_ticks=int(_setting(args, cfg, "ticks", 1000)),
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None
    record_every = int(_setting(args, cfg, "record_every", 1))

    from .blocks import BlockVector

    x0 = BlockVector(np.zeros(problem.partition.n), problem.partition)
    trace = sim.run(problem, reg, rates, model, x0, record_every=record_every)
    trace.write_csv(args.trace)

    ok, first = sim.verify_contraction_envelope(trace)
    violations = sim.envelope_violation_count(trace)
    summary = {
        "final_max_error": float(trace.max_errors[-1]),
        "final_objective": float(trace.objectives[-1]),
        "cycles_completed": int(trace.cycles[-1]),
        "envelope_violations": violations,
        "rate": trace.rate,
        "initial_distance": trace.initial_distance,
        "stepsizes_valid": trace.metadata["stepsizes_valid"],
        "model": model.to_json(),
        "alphas": trace.metadata["alphas"],
        "gammas": trace.metadata["gammas"],
    }
    if args.summary is not None:
        _write_json(args.summary, summary)
    print(
        f"wrote {args.trace}: {model.max_ticks} ticks, "
        f"{summary['cycles_completed']} cycles, "
        f"final error {summary['final_max_error']:.3e}, "
        f"envelope violations {violations}"
    )
    if not ok and trace.metadata["stepsizes_valid"]:
        print(
            f"envelope violated at tick {first['tick']} agent {first['agent']}: "
            f"error {first['error']:.6e} > envelope {first['envelope']:.6e}",
            file=sys.stderr,
        )
        return EXIT_INVARIANT
    return EXIT_OK


def _fig1_epsilon(problem, q_initial: float, reduction: float) -> float:
    """Certified relative cost error after regularizing to cut the rate by
    ``reduction`` (a fraction of q_initial). Endpoints are the limits of
    the rule: no regularization at 0, full regularization at 1."""
    if reduction <= 0.0:
        return 0.0
    if reduction >= 1.0:
        return 1.0
    reg, _ = select_regularization_for_rate(problem, q_initial * (1.0 - reduction))
    return bounds.implied_cost_error(problem, reg)


def cmd_sweep_fig1(args) -> int:
    cfg = _load_config(args.config)
    blocks = int(_setting(args, cfg, "blocks", 100))
    block_size = int(_setting(args, cfg, "block_size", 1))
    eig_lo = float(_setting(args, cfg, "eig_lo", 1.0))
    eig_hi = float(_setting(args, cfg, "eig_hi", 10.0))
    steps = int(_setting(args, cfg, "reduction_steps", 101))
    seed = _resolve_seed(args, cfg)
    out = _setting(args, cfg, "out")
    if out is None:
        raise InputError("sweep-fig1 needs --out for the CSV file")
    q_initials = _setting(args, cfg, "q_initials")
    if q_initials is None:
        q_initials = FIG1_INITIAL_RATES
    elif isinstance(q_initials, str):
        q_initials = tuple(float(v) for v in q_initials.split(","))

    lines = ["q_initial,reduction_percent,implied_epsilon"]
    for idx, q_init in enumerate(q_initials):
        problem = generate(
            num_blocks=blocks,
            block_sizes=block_size,
            q_target=q_init,
            eig_range=(eig_lo, eig_hi),
            seed=seed + idx,
        )
        for reduction in np.linspace(0.0, 1.0, steps):
            eps = _fig1_epsilon(problem, q_init, float(reduction))
            lines.append(f"{q_init!r},{float(100.0 * reduction)!r},{eps!r}")
    Path(out).write_text("\n".join(lines) + "\n")
    print(f"wrote {out}: {len(q_initials)} initial rates x {steps} reductions")
    return EXIT_OK


def cmd_compare_fig2(args) -> int:
    cfg = _load_config(args.config)
    blocks = int(_setting(args, cfg, "blocks", 100))
    q_initial = float(_setting(args, cfg, "q_initial", 0.85))
    reductions = _setting(args, cfg, "reductions", "5,15,45")
    if isinstance(reductions, str):
        reductions = tuple(float(v) for v in reductions.split(","))
    ticks = int(_setting(args, cfg, "ticks", 15000))
    p_update = float(_setting(args, cfg, "p_update", 0.10))
    p_transmit = float(_setting(args, cfg, "p_transmit", 0.01))
    record_every = int(_setting(args, cfg, "record_every", 10))
    seed = _resolve_seed(args, cfg)
    outdir = Path(_setting(args, cfg, "outdir", "fig2"))
    outdir.mkdir(parents=True, exist_ok=True)

    problem = generate(
        num_blocks=blocks, block_sizes=1, q_target=q_initial, seed=seed,
        coupling="uniform",
    )
    x_hat = qpmod.exact_unconstrained_minimizer(problem)
    model = sim.AsynchronyModel(
        p_update=p_update, p_transmit=p_transmit, seed=seed, max_ticks=ticks
    )
    from .blocks import BlockVector

    # start offset along the uniform family's slowest mode (all ones), so
    # the runs demonstrate the rate rather than the fast transient
    x0 = BlockVector(x_hat.data + 1.0, problem.partition)

    runs = [("unregularized", None)]
    for red in reductions:
        runs.append((f"reduce{int(red):02d}", red))

    summary: dict = {
        "q_initial": q_initial,
        "model": model.to_json(),
        "runs": {},
    }
    unreg_curve = None
    for name, red in runs:
        if red is None:
            reg, rates = None, compute_rates(problem)
            target = x_hat
        else:
            reg, rates = select_regularization_for_rate(
                problem, q_initial * (1.0 - red / 100.0)
            )
            target = qpmod.exact_unconstrained_minimizer(problem, reg)
        trace = sim.run(
            problem, reg, rates, model, x0,
            record_every=record_every, target=target, reference=x_hat,
        )
        trace.write_csv(outdir / f"trace_{name}.csv")
        entry = {
            "rate": trace.rate,
            "cycles_completed": int(trace.cycles[-1]),
            "final_error_to_target": float(trace.max_errors[-1]),
            "final_error_to_unregularized": float(trace.ref_errors[-1]),
            "envelope_violations": sim.envelope_violation_count(trace),
        }
        if red is None:
            unreg_curve = trace.ref_net_errors
        else:
            entry["reduction_percent"] = red
            entry["state_error_bound"] = bounds.absolute_state_error_bound(problem, reg)
            plateau = float(trace.ref_net_errors[-1])
            settle = trace.ref_net_errors <= plateau * 1.05
            entry["turn_off_tick"] = int(trace.ticks[int(np.argmax(settle))])
            dips = trace.ref_net_errors < unreg_curve
            entry["dip_tick"] = (
                int(trace.ticks[int(np.argmax(dips))]) if dips.any() else None
            )
        summary["runs"][name] = entry
        print(
            f"{name}: rate {entry['rate']:.4f}, "
            f"final error to unregularized target "
            f"{entry['final_error_to_unregularized']:.3e}"
        )
    _write_json(outdir / "summary.json", summary)
    print(f"wrote {outdir}/summary.json")
    if any(e["envelope_violations"] for e in summary["runs"].values()):
        return EXIT_INVARIANT
    return EXIT_OK


# --- entry point --------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abqp",
        description="Asynchronous block quadratic programming toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a random dominant QP")
    g.add_argument("--config")
    g.add_argument("--blocks", type=int)
    g.add_argument("--block-size", dest="block_size", type=int)
    g.add_argument("--q-target", dest="q_target", type=float)
    g.add_argument("--eig-lo", dest="eig_lo", type=float)
    g.add_argument("--eig-hi", dest="eig_hi", type=float)
    g.add_argument("--constraints", choices=["unconstrained", "box"])
    g.add_argument("--box-margin", dest="box_margin", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--out")
    g.add_argument("--report")
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("analyze", help="per-block stepsize and regularization report")
    a.add_argument("qp")
    a.add_argument("--config")
    a.add_argument("--q-star", dest="q_star", type=float)
    a.add_argument("--epsilon", type=float)
    a.add_argument("--eta", type=float)
    a.add_argument("--json")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="run the asynchronous simulator")
    s.add_argument("qp")
    s.add_argument("--config")
    s.add_argument("--ticks", type=int)
    s.add_argument("--p-update", dest="p_update", type=float)
    s.add_argument("--p-transmit", dest="p_transmit", type=float)
    s.add_argument("--delay", help="zero, fixed:K, or geometric:P")
    s.add_argument("--record-every", dest="record_every", type=int)
    s.add_argument("--q-star", dest="q_star", type=float)
    s.add_argument("--alphas", help="comma-separated per-block weights")
    s.add_argument("--seed", type=int)
    s.add_argument("--trace", required=True)
    s.add_argument("--summary")
    s.set_defaults(func=cmd_simulate)

    f1 = sub.add_parser("sweep-fig1", help="rate-reduction vs certified error sweep")
    f1.add_argument("--config")
    f1.add_argument("--blocks", type=int)
    f1.add_argument("--block-size", dest="block_size", type=int)
    f1.add_argument("--eig-lo", dest="eig_lo", type=float)
    f1.add_argument("--eig-hi", dest="eig_hi", type=float)
    f1.add_argument("--q-initials", dest="q_initials")
    f1.add_argument("--reduction-steps", dest="reduction_steps", type=int)
    f1.add_argument("--seed", type=int)
    f1.add_argument("--out")
    f1.set_defaults(func=cmd_sweep_fig1)

    f2 = sub.add_parser("compare-fig2", help="four-run regularization comparison")
    f2.add_argument("--config")
    f2.add_argument("--blocks", type=int)
    f2.add_argument("--q-initial", dest="q_initial", type=float)
    f2.add_argument("--reductions")
    f2.add_argument("--ticks", type=int)
    f2.add_argument("--p-update", dest="p_update", type=float)
    f2.add_argument("--p-transmit", dest="p_transmit", type=float)
    f2.add_argument("--record-every", dest="record_every", type=int)
    f2.add_argument("--seed", type=int)
    f2.add_argument("--outdir")
    f2.set_defaults(func=cmd_compare_fig2)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
