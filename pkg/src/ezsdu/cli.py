"""Command-line front end.

Every subcommand writes CSV whose ``#`` header lines echo the full resolved
configuration as ``# key=value``; derived quantities follow as
``# @key=value``.  Errors go to standard error as ``ERROR:<code>: message``.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, closed_form, fixed_point, lattice, montecarlo
from .config import KEYS, PRESETS, RunConfig, build_config, parse_lines
from .errors import ConfigError, EZSDUError
from .params import derive_market, derive_preferences, make_strategy

SUBCOMMANDS = ("params", "optimize", "family", "solve-lattice", "fixed-point", "classify", "mc-verify")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


class Table:
    """CSV body plus derived header entries."""

    def __init__(self, columns):
        self.columns = list(columns)
        self.rows: list[list] = []
        self.derived: list[tuple[str, object]] = []

    def add(self, *row) -> None:
        self.rows.append(list(row))

    def note(self, key: str, value) -> None:
        self.derived.append((key, value))

    def render(self, cfg: RunConfig, command: str) -> str:
        buf = io.StringIO()
        buf.write(f"# command={command}\n")
        for k, v in cfg.resolved():
            buf.write(f"# {k}={v}\n")
        for k, v in self.derived:
            buf.write(f"# @{k}={_fmt(v)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(x) for x in row])
        return buf.getvalue()


def _model(cfg: RunConfig):
    cfg.require("R", "S", "r", "mu", "sigma")
    prefs = derive_preferences(cfg.R, cfg.S)
    market = derive_market(cfg.r, cfg.mu, cfg.sigma, prefs)
    if cfg.pi is None and cfg.xi is None:
        strat = closed_form.optimal_strategy(market, prefs)
    else:
        opt = closed_form.optimal_strategy(market, prefs)
        pi = opt.pi if cfg.pi is None else cfg.pi
        xi = opt.xi if cfg.xi is None else cfg.xi
        strat = make_strategy(pi, xi, market, prefs)
    return prefs, market, strat


def cmd_params(cfg: RunConfig) -> Table:
    cfg.require("R", "S", "r", "mu", "sigma")
    prefs = derive_preferences(cfg.R, cfg.S)
    market = derive_market(cfg.r, cfg.mu, cfg.sigma, prefs)
    t = Table(["quantity", "value"])
    for k, v in (("theta", prefs.theta), ("rho", prefs.rho), ("lambda", market.lam), ("eta", market.eta)):
        t.add(k, v)
    return t


def cmd_optimize(cfg: RunConfig) -> Table:
    prefs, market, _ = _model(cfg)
    opt = closed_form.optimal_strategy(market, prefs)
    sol = closed_form.proportional_h(opt, market, prefs)
    t = Table(["quantity", "value"])
    t.add("pi_hat", opt.pi)
    t.add("xi_hat", opt.xi)
    t.add("H", opt.H)
    t.add("h_max", sol.h_value)
    t.add("V_hat", closed_form.candidate_value(cfg.x0, market, prefs))
    return t


def cmd_family(cfg: RunConfig) -> Table:
    prefs, market, strat = _model(cfg)
    if cfg.A0 is not None and cfg.T is not None:
        raise ConfigError("give either A0 or T, not both")
    if cfg.A0 is not None:
        member = closed_form.family_member(cfg.A0, strat, prefs)
    elif cfg.T is not None:
        member = closed_form.family_member_from_T(cfg.T, strat, prefs)
    else:
        member = closed_form.family_member_from_T(math.inf, strat, prefs)
    t_max = cfg.t_max
    if t_max is None:
        t_max = 2 * member.T if math.isfinite(member.T) and member.T > 0 else prefs.theta / strat.H
    grid = np.linspace(0.0, t_max, max(cfg.points, 2))
    A = np.atleast_1d(member.profile(grid))
    t = Table(["t", "A_t", "residual"])
    for s, a in zip(grid, A):
        t.add(s, a, closed_form.ode_residual(member, [s]))
    for k, v in (("pi", strat.pi), ("xi", strat.xi), ("H", strat.H), ("theta", prefs.theta),
                 ("A0", member.A0), ("T", member.T)):
        t.note(k, v)
    return t


def _stops(cfg: RunConfig, lat):
    return lattice.StoppingSpec.from_counts(lat, cfg.sigma_ups, cfg.tau_downs)


def _lattice_setup(cfg: RunConfig):
    """Shared by solve-lattice and classify: lattice, U and tail from the config."""
    prefs, market, strat = _model(cfg)
    if cfg.consumption not in ("proportional", "indicator"):
        raise ConfigError("consumption must be 'proportional' or 'indicator'")
    if cfg.tail not in ("zero", "proportional"):
        raise ConfigError("tail must be 'zero' or 'proportional'")
    horizon = cfg.horizon
    if cfg.consumption == "proportional":
        horizon = horizon or lattice.default_horizon(strat.H)
    else:
        horizon = horizon or lattice.default_horizon(cfg.gamma * prefs.theta)
    spec = lattice.LatticeSpec(cfg.steps or 200, horizon, cfg.up_prob, cfg.calibration, cfg.x0)
    lat = lattice.build_lattice(spec, market, strat, prefs)
    if cfg.consumption == "proportional":
        U = lattice.proportional_consumption(strat, lat, prefs)
        tail = lattice.TailCondition.proportional(strat)
    else:
        U = lattice.indicator_consumption(cfg.gamma, _stops(cfg, lat), lat)
        tail = lattice.TailCondition.geometric(cfg.gamma * prefs.theta)
    if cfg.tail == "zero":
        tail = lattice.TailCondition.zero()
    return prefs, strat, lat, U, tail


def cmd_solve_lattice(cfg: RunConfig) -> Table:
    prefs, strat, lat, U, tail = _lattice_setup(cfg)
    W = lattice.solve_backward(U, tail, lat, prefs)
    lower = lattice.jensen_lower_bound(U, tail, lat, prefs)
    t = Table(["step", "node", "t", "X", "U", "W", "lower_bound"])
    for i, j in lat.nodes():
        t.add(i, j, lat.times[i], lat.X[i, j], U.values[i, j], W.values[i, j], lower.values[i, j])
    t.note("W0", W.values[0, 0])
    if cfg.consumption == "proportional":
        t.note("W0_closed_form", (prefs.theta / strat.H) ** prefs.theta * (strat.xi * cfg.x0) ** prefs.one_minus_R)
    return t


def cmd_fixed_point(cfg: RunConfig) -> Table:
    prefs, market, strat = _model(cfg)
    horizon = cfg.horizon or lattice.default_horizon(strat.H)
    spec = lattice.LatticeSpec(cfg.steps or 200, horizon, cfg.up_prob, cfg.calibration, cfg.x0)
    lat = lattice.build_lattice(spec, market, strat, prefs)
    U = lattice.proportional_consumption(strat, lat, prefs)
    pert = fixed_point.PerturbationSpec(cfg.epsilon, cfg.nu, U if cfg.epsilon > 0 else None)
    res = fixed_point.picard_solve(
        U, pert, lat, prefs, tail=lattice.TailCondition.proportional(strat), tol=cfg.tol, max_iter=cfg.max_iter
    )
    t = Table(["iteration", "gap"])
    for n, g in enumerate(res.gaps, 1):
        t.add(n, g)
    c = res.certificate
    for k, v in (("k", c.k), ("K", c.K), ("A", c.A), ("B", c.B), ("verified", c.verified),
                 ("iterations", res.iterations), ("W0", res.W.values[0, 0])):
        t.note(k, v)
    return t


def read_csv_with_header(path: str):
    """Return (config dict, derived dict, header row, data rows) of an emitted CSV."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    cfg_lines, derived, body = [], {}, []
    for line in text.splitlines():
        if line.startswith("# @"):
            k, _, v = line[3:].partition("=")
            derived[k] = v
        elif line.startswith("# command="):
            continue
        elif line.startswith("#"):
            cfg_lines.append(line[1:].strip())
        elif line.strip():
            body.append(line)
    values = parse_lines(cfg_lines, path)
    rows = list(csv.reader(body))
    if not rows:
        raise ConfigError(f"{path} has no CSV body")
    return values, derived, rows[0], rows[1:]


def cmd_classify(cfg: RunConfig) -> Table:
    if cfg.input is None:
        raise ConfigError("classify needs input=<W csv>")
    values, _, header, rows = read_csv_with_header(cfg.input)
    values.pop("input", None)
    values.pop("output", None)
    src = RunConfig(**values)
    prefs, strat, lat, U, tail = _lattice_setup(src)
    try:
        col = {name: header.index(name) for name in ("step", "node", "W")}
    except ValueError as exc:
        raise ConfigError("input CSV needs step, node and W columns") from exc
    W = np.zeros(lat.shape)
    for row in rows:
        W[int(row[col["step"]]), int(row[col["node"]])] = float(row[col["W"]])
    J = fixed_point.compute_J(U, lattice.TailCondition.proportional(strat) if src.consumption == "proportional"
                              else lattice.TailCondition.geometric(src.gamma * prefs.theta), lat, prefs)
    res = analysis.residual(W, U, lat, prefs)
    proper, wit = analysis.is_proper(W, J, lat)
    crra = analysis.crra_order_check(W, J, lat)
    t = Table(["check", "passed", "value", "witness"])
    t.add("residual", res < 1e-8, res, "")
    t.add("proper", proper, len(wit), "" if proper else f"{wit[0][0]}:{wit[0][1]}")
    t.add("crra_order", crra is not None, "" if crra is None else f"{crra[0]:.17g}:{crra[1]:.17g}", "")
    return t


def cmd_mc_verify(cfg: RunConfig) -> Table:
    prefs, market, strat = _model(cfg)
    horizon = cfg.horizon or math.log(1e4) / strat.H
    n_steps = cfg.steps or max(int(round(horizon)), 1)
    batch = montecarlo.simulate(strat, market, montecarlo.SimSpec(cfg.paths, n_steps, horizon, cfg.seed, cfg.x0))
    if cfg.candidate == "proportional":
        cand = montecarlo.proportional_candidate(strat, prefs, cfg.scale)
    elif cfg.candidate == "family":
        if cfg.A0 is not None:
            member = closed_form.family_member(cfg.A0, strat, prefs)
        else:
            member = closed_form.family_member_from_T(math.inf if cfg.T is None else cfg.T, strat, prefs)
        cand = montecarlo.family_candidate(member, cfg.scale)
    else:
        raise ConfigError("candidate must be 'proportional' or 'family'")
    est, se = montecarlo.residual_estimate(cand, batch, prefs)
    t = Table(["estimate", "std_error", "z_score"])
    t.add(est, se, est / se if se > 0 else math.inf)
    return t


COMMANDS = {
    "params": cmd_params,
    "optimize": cmd_optimize,
    "family": cmd_family,
    "solve-lattice": cmd_solve_lattice,
    "fixed-point": cmd_fixed_point,
    "classify": cmd_classify,
    "mc-verify": cmd_mc_verify,
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--preset", choices=PRESETS, help="bundled parameter set")
    for key in ("R", "S", "r", "mu", "sigma", "x0", "pi", "xi", "output", "seed"):
        common.add_argument(f"--{key}", dest=key)
    p = argparse.ArgumentParser(prog="ezsdu", description="Epstein-Zin SDU laboratory (theta > 1).")
    sub = p.add_subparsers(dest="command", required=True)
    extra = {
        "params": [],
        "optimize": [],
        "family": ["A0", "T", "t_max", "points"],
        "solve-lattice": ["steps", "horizon", "tail", "consumption", "gamma", "calibration", "up_prob",
                          "sigma_ups", "tau_downs"],
        "fixed-point": ["steps", "horizon", "calibration", "epsilon", "nu", "tol", "max_iter"],
        "classify": ["input"],
        "mc-verify": ["paths", "steps", "horizon", "seed", "candidate", "scale", "A0", "T"],
    }
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, parents=[common])
        for key in extra[name]:
            if key == "seed":
                continue
            flag = "--" + key.replace("_", "-")
            sp.add_argument(flag, dest=key)
    return p


def run(argv=None, environ=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    flags = {k: v for k, v in vars(args).items() if k in KEYS and v is not None}
    try:
        cfg = build_config(args.preset, args.config, flags, environ)
        table = COMMANDS[args.command](cfg)
        text = table.render(cfg, args.command)
        if cfg.output in ("-", ""):
            sys.stdout.write(text)
        else:
            Path(cfg.output).write_text(text)
    except EZSDUError as exc:
        print(f"ERROR:{exc.code}: {exc}", file=sys.stderr)
        return exc.exit_status
    except ValueError as exc:
        print(f"ERROR:VALIDATION: {exc}", file=sys.stderr)
        return 1
    except TypeError as exc:
        print(f"ERROR:CONFIG: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
