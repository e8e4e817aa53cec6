"""Command-line interface: ``household-merton <command> [options]``.

Exit codes: 0 success, 1 failed verification, 2 bad config or parameters,
3 Riccati singularity.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import allocation, mc_verify, riccati
from .allocation import InvalidSpec, NonFinite
from .core_model import AgentSpec, MarketParams, ProblemSpec, Role, validate
from .riccati import SingularityDetected

log = logging.getLogger("household_merton")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_SINGULAR = 0, 1, 2, 3

MARKET_KEYS = {"r": "r", "sigma": "sigma", "lambda_theta": "lambda_theta",
               "sigma_theta": "sigma_theta", "theta_bar": "theta_bar", "theta0": "theta0",
               "T": "horizon_T"}
OPTIONAL_KEYS = {"x", "fixed_y", "n_paths", "n_steps", "seed", "n_grid"}
AGENT_KEY = re.compile(r"^(gamma|rho|role)\.([1-9][0-9]*)$")

# Two levels per agent slot for the CSP comparison grids
RHO_LEVELS = (0.0052, 0.3)
RHO_FAMILY_GAMMA = -3.0
GAMMA_LEVELS = (-3.0, -9.0)
GAMMA_FAMILY_RHO = 0.0052
COMPARE_LABELS = ("111", "121", "122", "112", "211", "212", "221", "222")


class ConfigError(ValueError):
    pass


def fmt(v: float) -> str:
    return "%.17g" % v


@dataclass(frozen=True)
class RunConfig:
    spec: ProblemSpec
    fixed_y: Optional[float] = None
    n_paths: int = 100_000
    n_steps: int = 252
    seed: int = 0
    n_grid: int = riccati.DEFAULT_GRID


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _number(raw: dict, key: str) -> float:
    try:
        v = float(raw[key])
    except ValueError:
        raise ConfigError(f"key {key!r}: not a number: {raw[key]!r}") from None
    return v


def _integer(raw: dict, key: str) -> int:
    v = _number(raw, key)
    if v != int(v):
        raise ConfigError(f"key {key!r}: expected an integer")
    return int(v)


def build_config(raw: dict) -> RunConfig:
    """Turn a parsed key map into a ``RunConfig``.

    Agents are numbered from 1; each needs ``gamma.N`` and ``rho.N``.
    ``role.N`` is ``consumer`` or ``terminal``; without any role keys the
    last agent is the terminal one.
    """
    agents: dict[int, dict] = {}
    for key in raw:
        m = AGENT_KEY.match(key)
        if m:
            agents.setdefault(int(m.group(2)), {})[m.group(1)] = key
        elif key not in MARKET_KEYS and key not in OPTIONAL_KEYS:
            raise ConfigError(f"unknown key {key!r}")
    missing = [k for k in MARKET_KEYS if k not in raw]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    if not agents:
        raise ConfigError("no agents: add gamma.1, rho.1, ...")
    idx = sorted(agents)
    if idx != list(range(1, len(idx) + 1)):
        raise ConfigError("agent indices must run 1..n without gaps")
    any_role = any("role" in agents[i] for i in idx)
    consumers, terminal = [], None
    for i in idx:
        for part in ("gamma", "rho"):
            if part not in agents[i]:
                raise ConfigError(f"missing required key {part}.{i}")
        if any_role:
            role_s = raw.get(f"role.{i}", "consumer").lower()
        else:
            role_s = "terminal" if i == idx[-1] else "consumer"
        if role_s not in ("consumer", "terminal"):
            raise ConfigError(f"role.{i}: expected consumer or terminal")
        agent = AgentSpec(_number(raw, f"gamma.{i}"), _number(raw, f"rho.{i}"), Role(role_s))
        if agent.role is Role.TERMINAL:
            if terminal is not None:
                raise ConfigError("more than one terminal agent")
            terminal = agent
        else:
            consumers.append(agent)
    market = MarketParams(**{field: _number(raw, key) for key, field in MARKET_KEYS.items()})
    if "x" not in raw and "fixed_y" not in raw:
        raise ConfigError("missing required key: x (or fixed_y)")
    x = _number(raw, "x") if "x" in raw else math.nan
    fixed_y = _number(raw, "fixed_y") if "fixed_y" in raw else None
    if fixed_y is not None and not fixed_y > 0:
        raise ConfigError("fixed_y must be positive")
    kw = {}
    for key in ("n_paths", "n_steps", "seed", "n_grid"):
        if key in raw:
            kw[key] = _integer(raw, key)
    spec = ProblemSpec(market, tuple(consumers), terminal, 0.0 if math.isnan(x) else x)
    return RunConfig(spec, fixed_y, **kw)


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    return build_config(parse_config_text(text))


def default_config_path() -> str:
    return os.path.join(os.path.dirname(__file__), "configs", "default.conf")


def _check(spec: ProblemSpec):
    for v in validate(spec):
        if v.severity == "warning":
            log.warning("%s", v)
    allocation.build_family(spec)


def _allocate(cfg: RunConfig, spec: ProblemSpec, use_fixed_y: bool):
    fam = allocation.build_family(spec, cfg.n_grid)
    if use_fixed_y and cfg.fixed_y is not None:
        return allocation.allocate_at_y(spec, cfg.fixed_y, family=fam)
    return allocation.allocate(spec, family=fam)


def _emit(text: str, out: Optional[str]):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _frac_header(spec: ProblemSpec):
    return [f"x{i}_frac" for i in range(1, len(spec.consumers) + 1)] + (
        ["x_terminal_frac"] if spec.terminal is not None else [])


def cmd_allocate(cfg: RunConfig, args) -> int:
    spec = cfg.spec
    use_y = args.x is None
    if args.x is not None:
        spec = spec.with_(total_wealth_x=args.x)
    for v in validate(spec):
        if v.severity == "warning":
            log.warning("%s", v)
    res = _allocate(cfg, spec, use_y)
    head = ["y"] + [f"x{i}" for i in range(1, len(spec.consumers) + 1)]
    head += ["x_terminal"] if spec.terminal is not None else []
    head += ["csp", "residual", "x"]
    row = [fmt(res.y)] + [fmt(v) for v in res.x_alloc] + [
        fmt(res.csp), fmt(res.residual), fmt(res.total_wealth_x)]
    _emit(_csv([head, row]), args.out)
    return EXIT_OK


def _apply_var(spec: ProblemSpec, var: str, value: float) -> ProblemSpec:
    if var == "x":
        return spec.with_(total_wealth_x=value)
    if var == "theta0":
        return spec.with_(market=spec.market.with_(theta0=value))
    m = re.fullmatch(r"(gamma|rho)([1-9][0-9]*)", var)
    if not m:
        raise ConfigError(f"cannot sweep {var!r}")
    field, i = m.group(1), int(m.group(2))
    agents = list(spec.agents)
    if i > len(agents):
        raise ConfigError(f"{var}: no agent {i}")
    a = agents[i - 1]
    agents[i - 1] = AgentSpec(value if field == "gamma" else a.gamma,
                              value if field == "rho" else a.rho, a.role)
    n_c = len(spec.consumers)
    return spec.with_(consumers=tuple(agents[:n_c]),
                      terminal=agents[n_c] if spec.terminal is not None else None)


def _sweep_point(job):
    cfg, var, value = job
    spec = _apply_var(cfg.spec, var, value)
    res = _allocate(cfg, spec, use_fixed_y=(var != "x"))
    return [fmt(value)] + [fmt(f) for f in res.fractions] + [fmt(res.csp), fmt(res.y)]


def cmd_sweep(cfg: RunConfig, args) -> int:
    if args.var is None or args.from_ is None or args.to is None:
        raise ConfigError("sweep needs --var, --from and --to")
    if not args.from_ < args.to:
        raise ConfigError("--from must be below --to")
    if args.steps < 2:
        raise ConfigError("--steps must be at least 2")
    if args.log_grid:
        if args.from_ <= 0:
            raise ConfigError("--log-grid needs a positive --from")
        grid = np.geomspace(args.from_, args.to, args.steps)
    else:
        grid = np.linspace(args.from_, args.to, args.steps)
    _apply_var(cfg.spec, args.var, float(grid[0]))
    jobs = [(cfg, args.var, float(v)) for v in grid]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    head = ["var"] + _frac_header(cfg.spec) + ["csp", "y"]
    _emit(_csv([head] + rows), args.out)
    return EXIT_OK


def compare_scenarios(cfg: RunConfig, family: str) -> list:
    """CSP for each two-level labelling of the three agent slots.

    Returns ``(family, label, csp)`` rows; digit ``d`` of a label picks
    level ``d`` for that agent.
    """
    spec = cfg.spec
    if len(spec.consumers) != 2 or spec.terminal is None:
        raise ConfigError("csp-compare needs two consumers and one terminal agent")
    rows = []
    for label in COMPARE_LABELS:
        lv = [int(ch) - 1 for ch in label]
        if family == "rho":
            gam = [RHO_FAMILY_GAMMA] * 3
            rho = [RHO_LEVELS[j] for j in lv]
        else:
            gam = [GAMMA_LEVELS[j] for j in lv]
            rho = [GAMMA_FAMILY_RHO] * 3
        sub = spec.with_(consumers=(AgentSpec(gam[0], rho[0]), AgentSpec(gam[1], rho[1])),
                         terminal=AgentSpec(gam[2], rho[2], Role.TERMINAL))
        rows.append((family, label, _allocate(cfg, sub, True).csp))
    return rows


def cmd_csp_compare(cfg: RunConfig, args) -> int:
    fams = ("rho", "gamma") if args.scenario == "both" else (args.scenario,)
    rows = [["family", "label", "csp"]]
    for f in fams:
        rows += [[fam, lab, fmt(v)] for fam, lab, v in compare_scenarios(cfg, f)]
    _emit(_csv(rows), args.out)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, args) -> int:
    n_paths = args.paths if args.paths is not None else cfg.n_paths
    n_steps = args.steps if args.steps is not None else cfg.n_steps
    seed = args.seed if args.seed is not None else cfg.seed
    spec = cfg.spec
    if args.x is not None:
        spec = spec.with_(total_wealth_x=args.x)
    _check(spec)
    fixed_y = cfg.fixed_y if args.x is None else None
    rows = mc_verify.run_verification(spec, n_paths, n_steps, seed, fixed_y=fixed_y)
    _emit(mc_verify.write_report(rows), args.out)
    failed = [r for r in rows if not r.passed]
    for r in failed:
        log.error("check failed: %s agent=%s z=%.3g", r.check_name, r.agent, r.z_score)
    return EXIT_VERIFY if failed else EXIT_OK


def riccati_table(cfg: RunConfig, agent_index: int) -> list:
    spec = cfg.spec
    agents = spec.agents
    if not 1 <= agent_index <= len(agents):
        raise ConfigError(f"--agent must lie in 1..{len(agents)}")
    g = agents[agent_index - 1].gamma
    m = spec.market
    co = riccati.solve_system(g, m, n_grid=cfg.n_grid)
    res = riccati.residual(co, g, m, pointwise=True)
    closed = _until_pole(lambda s: riccati.a1_closed(g, m, s), co.grid)
    printed = _until_pole(lambda s: riccati.a1_printed(g, m, s), co.grid)
    rows = [["s", "A1", "A2", "A3", "A1_closed", "residual", "A1_printed"]]
    blank = lambda v: "" if math.isnan(v) else fmt(v)  # noqa: E731
    for i, s in enumerate(co.grid):
        rows.append([fmt(s), fmt(co.A1[i]), fmt(co.A2[i]), fmt(co.A3[i]), blank(closed[i]),
                     fmt(res[i]), blank(printed[i])])
    return rows


def _until_pole(f, grid):
    """``f`` on ``grid`` with NaN from the first pole on."""
    out = np.full(grid.shape, np.nan)
    try:
        out[:] = f(grid)
    except SingularityDetected as exc:
        ok = grid < exc.blowup_time
        if ok.any():
            out[ok] = f(grid[ok])
    return out


def cmd_riccati(cfg: RunConfig, args) -> int:
    _emit(_csv(riccati_table(cfg, args.agent)), args.out)
    return EXIT_OK


COMMANDS = {"allocate": cmd_allocate, "sweep": cmd_sweep, "csp-compare": cmd_csp_compare,
            "verify": cmd_verify, "riccati": cmd_riccati}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None,
                        help="flat key = value file (default: bundled calibration)")
    common.add_argument("--out", default=None, help="write CSV here instead of stdout")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--log", default="WARNING", help="logging level")

    p = argparse.ArgumentParser(prog="household-merton",
                                description="Wealth allocation for agents sharing one portfolio.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("allocate", parents=[common], help="split the initial wealth")
    a.add_argument("--x", type=float, default=None, help="total wealth (overrides fixed_y)")

    s = sub.add_parser("sweep", parents=[common], help="allocation fractions over a grid")
    s.add_argument("--var", required=True, help="x, theta0, gammaN or rhoN")
    s.add_argument("--from", dest="from_", type=float, required=True)
    s.add_argument("--to", type=float, required=True)
    s.add_argument("--steps", type=int, default=21)
    s.add_argument("--log-grid", action="store_true", help="geometric grid")
    s.add_argument("--jobs", type=int, default=1)

    c = sub.add_parser("csp-compare", parents=[common], help="CSP over two-level scenarios")
    c.add_argument("--scenario", choices=("rho", "gamma", "both"), default="both")

    v = sub.add_parser("verify", parents=[common], help="Monte Carlo verification report")
    v.add_argument("--paths", type=int, default=None)
    v.add_argument("--steps", type=int, default=None)
    v.add_argument("--x", type=float, default=None)

    r = sub.add_parser("riccati", parents=[common], help="dump affine coefficients")
    r.add_argument("--agent", type=int, default=1)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log).upper(), logging.WARNING),
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config or default_config_path())
        if args.seed is not None:
            cfg = RunConfig(cfg.spec, cfg.fixed_y, cfg.n_paths, cfg.n_steps, args.seed, cfg.n_grid)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, InvalidSpec, NonFinite, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SingularityDetected as exc:
        print(f"singularity: {exc}", file=sys.stderr)
        return EXIT_SINGULAR


if __name__ == "__main__":
    sys.exit(main())
