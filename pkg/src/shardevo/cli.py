"""Command-line front end.

    shard-evo simulate    integrate the replicator ODE, write trajectory CSV
    shard-evo payoffs     per-chain payoff series along a trajectory CSV
    shard-evo equilibria  enumerate + classify all equilibria
    shard-evo sweep       stable equilibrium across a price-scale grid
    shard-evo agents      stochastic agent runs vs the ODE
    shard-evo epoch-model protocol-level epoch time / reward / cost table

Config files are JSON with either a "game" block (alpha, tau, cost) or an
"elastico" block (per-chain protocol parameters + N). Exit codes: 1 config
parse error, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
import tempfile

import numpy as np

from . import agents as agents_mod
from . import dynamics, elastico, equilibrium, plots, stability
from .ecosystem import ConfigError, CostCurve, EcosystemConfig, StateError

EXIT_PARSE = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class CliError(Exception):
    def __init__(self, code, msg):
        super().__init__(msg)
        self.code = code


def atomic_write(path: str, text: str):
    """Write via temp file + rename; no partial output on failure."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".shard-evo-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cost_from_spec(spec) -> CostCurve:
    if spec is None or spec == "log1p" or spec.get("kind") == "log1p":
        return CostCurve.log1p()
    kind = spec.get("kind")
    if kind == "tabulated":
        return CostCurve.tabulated(spec["x"], spec["h"])
    raise CliError(EXIT_VALIDATION, f"unknown cost curve kind {kind!r}")


def _elastico_from_block(block) -> elastico.ElasticoParams:
    g = block.get("g", {})
    gm = elastico.GModel(kind=g.get("kind", "quadratic"),
                         a=float(g.get("a", 103.0)), b=float(g.get("b", 0.0)))
    return elastico.ElasticoParams(
        n=int(block["n"]), c=int(block["c"]), s=int(block["s"]),
        T=float(block["T"]), sigma_cost=float(block["sigma"]),
        mu=float(block["mu"]), r=float(block["r"]),
        tau_tilde=float(block["tau_tilde"]), g_model=gm)


def load_config(path: str):
    """Parse a run config into (EcosystemConfig, raw dict)."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise CliError(EXIT_PARSE, f"cannot parse config {path}: {e}")
    has_game = "game" in raw
    has_el = "elastico" in raw
    if has_game == has_el:
        raise CliError(EXIT_VALIDATION,
                       "config needs exactly one of 'game' or 'elastico'")
    try:
        if has_game:
            g = raw["game"]
            cfg = EcosystemConfig(alpha=tuple(g["alpha"]), tau=float(g["tau"]),
                                  cost=_cost_from_spec(g.get("cost")))
        else:
            block = raw["elastico"]
            chains = [_elastico_from_block(b) for b in block["chains"]]
            derived = elastico.derive_game_inputs(
                chains, float(block["N"]), strict=bool(block.get("strict", True)))
            cfg = derived.config
    except (KeyError, TypeError, ValueError) as e:
        raise CliError(EXIT_VALIDATION, f"invalid config: {e}")
    return cfg, raw


def _integrator_spec(args, raw):
    block = raw.get("integrator", {})
    return dynamics.IntegratorSpec(
        method=block.get("method", "rk4"),
        t_end=float(args.t_end if args.t_end is not None
                    else block.get("t_end", 1000.0)),
        step=float(block.get("step", 0.01)),
        rel_tol=float(block.get("rel_tol", 1e-8)),
        abs_tol=float(block.get("abs_tol", 1e-10)),
        renormalize=bool(block.get("renormalize", True)),
        record_every=int(block.get("record_every", 1)))


def _parse_x0(text, M):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise CliError(EXIT_VALIDATION, f"cannot parse x0 {text!r}")
    if len(vals) != M:
        raise CliError(EXIT_VALIDATION, f"x0 has {len(vals)} components, need {M}")
    return np.asarray(vals)


def cmd_simulate(args):
    cfg, raw = load_config(args.config)
    x0 = _parse_x0(args.x0, cfg.M)
    spec = _integrator_spec(args, raw)
    try:
        traj = dynamics.integrate(cfg, x0, spec)
    except StateError as e:
        raise CliError(EXIT_VALIDATION, str(e))
    except dynamics.NumericalError as e:
        raise CliError(EXIT_NUMERICAL, str(e))
    atomic_write(args.output, traj.to_csv())
    if args.svg:
        plots.plot_trajectory(traj.times, traj.states, args.svg)
    return 0


def cmd_payoffs(args):
    cfg, _ = load_config(args.config)
    try:
        with open(args.trajectory, encoding="utf-8") as fh:
            traj = dynamics.Trajectory.from_csv(fh.read())
    except OSError as e:
        raise CliError(EXIT_PARSE, f"cannot read trajectory: {e}")
    except ValueError as e:
        raise CliError(EXIT_VALIDATION, f"bad trajectory CSV: {e}")
    if traj.M != cfg.M:
        raise CliError(EXIT_VALIDATION,
                       f"trajectory has {traj.M} chains, config has {cfg.M}")
    trace = dynamics.payoff_trace(cfg, traj)
    lines = ["t," + ",".join(f"u{i+1}" for i in range(cfg.M))]
    for t, row in zip(traj.times, trace):
        lines.append(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row))
    atomic_write(args.output, "\n".join(lines) + "\n")
    if args.svg:
        plots.plot_payoffs(traj.times, trace, args.svg)
    return 0


def cmd_equilibria(args):
    cfg, _ = load_config(args.config)
    try:
        results, wstar = stability.stable_equilibria(cfg)
    except ValueError as e:
        raise CliError(EXIT_VALIDATION, str(e))
    except stability.EigenConvergenceError as e:
        raise CliError(EXIT_NUMERICAL, str(e))
    results.sort(key=lambda rv: rv[0].working_set.indices)
    cand_csv = equilibrium.candidates_to_csv([c for c, _ in results], cfg.M)
    verd_csv = stability.verdicts_to_csv(results, cfg.M)
    atomic_write(args.output, cand_csv)
    verd_path = args.verdicts or os.path.splitext(args.output)[0] + "_verdicts.csv"
    atomic_write(verd_path, verd_csv)
    stable = [c for c, v in results
              if v.classification is stability.Classification.STABLE]
    print(f"w_star = {wstar}")
    for c in stable:
        print(f"stable: W={c.working_set.indices} x="
              + "[" + ", ".join(f"{v:.4f}" for v in c.state) + "]")
    return 0


def cmd_sweep(args):
    cfg, _ = load_config(args.config)
    try:
        grid = [float(v) for v in args.grid.split(",")]
    except ValueError:
        raise CliError(EXIT_VALIDATION, f"cannot parse grid {args.grid!r}")
    if not grid or any(grid[i] >= grid[i + 1] for i in range(len(grid) - 1)):
        raise CliError(EXIT_VALIDATION, "grid must be non-empty and increasing")
    rows = []
    for kappa in grid:
        scaled = EcosystemConfig(
            alpha=tuple(a * kappa for a in cfg.alpha), tau=cfg.tau, cost=cfg.cost)
        try:
            results, _ = stability.stable_equilibria(scaled)
        except ValueError as e:
            raise CliError(EXIT_VALIDATION, str(e))
        stable = [c for c, v in results
                  if v.classification is stability.Classification.STABLE]
        if stable:
            rows.append((kappa, stable[0].state, stable[0].common_payoff, True))
        else:
            rows.append((kappa, np.full(cfg.M, np.nan), np.nan, False))
    lines = ["kappa," + ",".join(f"x{i+1}" for i in range(cfg.M))
             + ",b_bar,stable_found"]
    for kappa, x, b, ok in rows:
        lines.append(f"{kappa:.17g}," + ",".join(f"{v:.17g}" for v in x)
                     + f",{b:.17g},{int(ok)}")
    atomic_write(args.output, "\n".join(lines) + "\n")
    if args.svg:
        found = [(k, x) for k, x, _, ok in rows if ok]
        if found:
            plots.plot_sweep([k for k, _ in found],
                             np.asarray([x for _, x in found]), args.svg)
    return 0


def cmd_agents(args):
    cfg, raw = load_config(args.config)
    x0 = _parse_x0(args.x0, cfg.M)
    seed = args.seed if args.seed is not None else secrets.randbits(63)
    spec = agents_mod.AgentSimSpec(
        N=args.agents, horizon=args.horizon, seed=seed,
        revision_rate=args.revision_rate, sample_every=args.sample_every,
        imitation_scale=args.imitation_scale)
    ode_spec = dynamics.IntegratorSpec(
        method="rk4", step=0.01,
        t_end=max(args.horizon * spec.time_scale, 0.01), record_every=10)
    try:
        ode = dynamics.integrate(cfg, x0, ode_spec)
        emp = agents_mod.simulate_agents(cfg, x0, spec)
        report = agents_mod.compare_to_ode(emp, ode, spec.time_scale)
    except StateError as e:
        raise CliError(EXIT_VALIDATION, str(e))
    except (agents_mod.ScaleError, dynamics.NumericalError) as e:
        raise CliError(EXIT_NUMERICAL, str(e))
    atomic_write(args.output, emp.to_csv())
    ode_path = os.path.splitext(args.output)[0] + "_ode.csv"
    atomic_write(ode_path, ode.to_csv())
    dev_path = os.path.splitext(args.output)[0] + "_deviation.csv"
    lines = [f"# seed={seed} sup_norm={report.sup_norm:.17g}", "t,deviation"]
    for t, d in zip(report.times, report.deviations):
        lines.append(f"{t:.17g},{d:.17g}")
    atomic_write(dev_path, "\n".join(lines) + "\n")
    print(f"seed={seed} sup_norm={report.sup_norm:.6g}")
    return 0


def cmd_epoch_model(args):
    gm = elastico.GModel(kind=args.g_kind, a=args.g_a, b=args.g_b)
    try:
        p = elastico.ElasticoParams(
            n=args.n, c=args.c, s=args.s, T=args.T, sigma_cost=args.sigma,
            mu=args.mu, r=args.r, tau_tilde=args.tau_tilde, g_model=gm)
        if args.method == "monte-carlo":
            f, se = elastico.expected_puzzles_per_processor(
                p.committees, p.c, p.n, "monte-carlo",
                trials=args.trials, seed=args.seed or 0)
            f_str = f"{f:.17g} (stderr {se:.3g})"
        else:
            f = elastico.expected_puzzles_per_processor(
                p.committees, p.c, p.n, "asymptotic")
            f_str = f"{f:.17g}"
        et = p.T * (f if isinstance(f, float) else f) + p.g_model.value(p.c)
        reward = p.mu * p.r * et / p.n
        cost = p.sigma_cost * f
    except (ConfigError, ValueError) as e:
        raise CliError(EXIT_VALIDATION, str(e))
    print(f"puzzles_per_processor f(n) = {f_str}")
    print(f"epoch_time  = {et:.17g} s")
    print(f"epoch_reward = {reward:.17g}")
    print(f"epoch_cost   = {cost:.17g}")
    if args.derive_game:
        derived = elastico.derive_game_inputs([p], float(args.N or p.n),
                                              strict=False)
        cfg = derived.config
        out = {"game": {"alpha": list(cfg.alpha), "tau": cfg.tau,
                        "cost": {"kind": "tabulated",
                                 "x": list(cfg.cost.xs),
                                 "h": list(cfg.cost.hs)}}}
        atomic_write(args.derive_game, json.dumps(out, indent=2) + "\n")
        print(f"derived game config written to {args.derive_game}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="shard-evo",
                                 description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate the replicator ODE")
    p.add_argument("config")
    p.add_argument("--x0", required=True, help="comma-separated initial state")
    p.add_argument("--t-end", type=float, dest="t_end", default=None)
    p.add_argument("--output", "-o", default="out/trajectory.csv")
    p.add_argument("--svg", default=None, help="also render a line chart here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("payoffs", help="payoff series along a trajectory")
    p.add_argument("config")
    p.add_argument("trajectory")
    p.add_argument("--output", "-o", default="out/payoffs.csv")
    p.add_argument("--svg", default=None)
    p.set_defaults(func=cmd_payoffs)

    p = sub.add_parser("equilibria", help="enumerate and classify equilibria")
    p.add_argument("config")
    p.add_argument("--output", "-o", default="out/equilibria.csv")
    p.add_argument("--verdicts", default=None)
    p.set_defaults(func=cmd_equilibria)

    p = sub.add_parser("sweep", help="stable equilibrium across a price scale")
    p.add_argument("config")
    p.add_argument("--grid", required=True, help="comma-separated scale factors")
    p.add_argument("--output", "-o", default="out/sweep.csv")
    p.add_argument("--svg", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("agents", help="stochastic agent simulation vs ODE")
    p.add_argument("config")
    p.add_argument("--x0", required=True)
    p.add_argument("--agents", "-N", type=int, default=10_000)
    p.add_argument("--horizon", type=float, default=100.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--revision-rate", type=float, default=1.0)
    p.add_argument("--sample-every", type=float, default=0.1)
    p.add_argument("--imitation-scale", type=float, default=10.0)
    p.add_argument("--output", "-o", default="out/agents.csv")
    p.set_defaults(func=cmd_agents)

    p = sub.add_parser("epoch-model", help="protocol-level epoch quantities")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--c", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--tau-tilde", type=float, required=True)
    p.add_argument("--g-kind", default="quadratic", choices=["quadratic", "constant"])
    p.add_argument("--g-a", type=float, default=103.0)
    p.add_argument("--g-b", type=float, default=0.0)
    p.add_argument("--method", default="asymptotic",
                   choices=["asymptotic", "monte-carlo"])
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--N", type=float, default=None)
    p.add_argument("--derive-game", default=None,
                   help="write the derived game config JSON here")
    p.set_defaults(func=cmd_epoch_model)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"shard-evo: {e}", file=sys.stderr)
        return e.code
    except ConfigError as e:
        print(f"shard-evo: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
