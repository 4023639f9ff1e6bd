"""Command-line front end: runs, convergence studies, the steady-state check and oracle output."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import SimulationConfig, config_to_dict, load_config, validate
from .density import DensityGrid
from .evolution import RunOutcome, run
from .exceptions import AssumptionViolated, ContractivityViolated, DegenerateDensity
from .oracles import (
    asymptotic_steady_length,
    explicit_density_grid,
    explicit_length_unchecked,
    explicit_velocity,
)
from .velocity import VelocityProfile

logger = logging.getLogger("myobundle")

EXIT_CODES = {
    "completed": 0,
    "error": 1,
    "assumption_violated": 2,
    "bundle_collapsed": 3,
    "degenerate_density": 4,
    "sign_condition_lost": 5,
    "force_gate_failed": 6,
    "convergence_order_failed": 7,
}

ORDER_MIN = {"X": 1.9, "V_plus": 1.9, "V_minus": 1.9, "rho_plus": 0.9, "rho_minus": 0.9}
EXACT_FLOOR = 1e-11


@dataclass
class RunManifest:
    config: str
    out: str
    mode: Optional[str] = None
    snapshots: Optional[list] = None
    overrides: dict = field(default_factory=dict)
    command: str = "run"
    levels: Optional[int] = None

    @classmethod
    def from_args(cls, args) -> "RunManifest":
        over = {}
        for key, attr in (("n_y", "ny"), ("n_l", "nl"), ("dt", "dt"), ("t_end", "t_end")):
            if getattr(args, attr, None) is not None:
                over[key] = getattr(args, attr)
        if getattr(args, "picard", None) is not None:
            over["picard"] = args.picard == "on"
        snaps = None
        if getattr(args, "snapshots", None):
            snaps = [float(s) for s in args.snapshots.split(",") if s.strip()]
        return cls(config=args.config, out=args.out, mode=args.mode, snapshots=snaps, overrides=over,
                   command=args.command, levels=getattr(args, "levels", None))

    def load(self) -> SimulationConfig:
        """The config file with the manifest's overrides applied (overrides win)."""
        cfg = load_config(self.config)
        if self.overrides:
            cfg = cfg.with_numerics(**self.overrides)
        if self.mode is not None:
            cfg = replace(cfg, mode=self.mode)
        if self.snapshots is not None:
            cfg = replace(cfg, snapshots=tuple(self.snapshots))
        return cfg

    def echo(self, cfg: SimulationConfig, out_dir: Path) -> None:
        doc = {
            "command": self.command,
            "config_path": self.config,
            "mode": self.mode,
            "out": self.out,
            "snapshots": self.snapshots,
            "overrides": self.overrides,
            "levels": self.levels,
            "effective_config": config_to_dict(cfg),
        }
        _write_json(out_dir / "manifest.json", doc)


def _write_json(path: Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def _finite_or_none(x):
    return float(x) if x is not None and math.isfinite(x) else None


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _prepare(manifest: RunManifest):
    out_dir = Path(manifest.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = manifest.load()
    manifest.echo(cfg, out_dir)
    return cfg, out_dir


def _report_violation(exc: AssumptionViolated) -> int:
    for v in exc.violations:
        print(f"assumption violated: {v}", file=sys.stderr)
    return EXIT_CODES["assumption_violated"]


def outcome_summary(outcome: RunOutcome) -> dict:
    state = outcome.final_state
    doc = {
        "termination": outcome.termination,
        "detail": outcome.detail,
        "steps": max(len(outcome.trajectory) - 1, 0),
        "final_t": state.t if state else None,
        "final_X": state.X if state else None,
        "final_Xdot": state.Xdot if state else None,
        "final_F": state.F if state else None,
    }
    if isinstance(outcome.error, DegenerateDensity):
        doc["degenerate_y_node"] = outcome.error.y_node
        doc["degenerate_y"] = outcome.error.y
    return doc


def write_outcome(outcome: RunOutcome, out_dir: Path) -> dict:
    outcome.write_trajectory(out_dir / "trajectory.csv")
    if outcome.snapshots:
        outcome.write_snapshots(out_dir / "snapshots")
    summary = outcome_summary(outcome)
    summary["written_at"] = _timestamp()
    _write_json(out_dir / "summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def cmd_run(manifest: RunManifest) -> int:
    cfg, out_dir = _prepare(manifest)
    try:
        validate(cfg)
    except AssumptionViolated as exc:
        return _report_violation(exc)
    outcome = run(cfg)
    summary = write_outcome(outcome, out_dir)
    print(f"termination: {summary['termination']}")
    if summary["final_t"] is not None:
        print(f"t={summary['final_t']:.6g}  X={summary['final_X']:.10g}  F={summary['final_F']:.6g}")
    if outcome.detail:
        print(outcome.detail)
    return EXIT_CODES[outcome.termination]


# ---------------------------------------------------------------------------
# convergence
# ---------------------------------------------------------------------------


def fit_order(h: Sequence[float], err: Sequence[float], floor: float = EXACT_FLOOR):
    """Least-squares slope of log(err) against log(h); "exact" when every error is at roundoff."""
    err = np.asarray(err, dtype=float)
    if np.all(err <= floor):
        return "exact"
    if np.any(err <= 0):
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def order_passes(order, minimum: float) -> bool:
    return order == "exact" or (isinstance(order, float) and order >= minimum)


def level_errors(cfg: SimulationConfig, outcome: RunOutcome) -> dict:
    """Errors of one completed force free run against the explicit solution."""
    bd, p = cfg.boundary, cfg.params
    t = outcome.column("t")
    X = outcome.column("X")
    Xbar = np.array([explicit_length_unchecked(s, bd, p.X0, p.eta) for s in t])
    s = outcome.final_state
    Vp, Vm = explicit_velocity(s.t, bd, p.eta)
    errs = {
        "X": float(np.max(np.abs(X - Xbar))),
        "V_plus": float(np.max(np.abs(s.profile.V_plus - Vp))),
        "V_minus": float(np.max(np.abs(s.profile.V_minus - Vm))),
    }
    for side, g in (("plus", s.rho_plus), ("minus", s.rho_minus)):
        ex = explicit_density_grid(s.t, g.y_nodes, g.l_nodes, side, bd, p.X0, p.eta, p.s_l)
        ex[:, -1] = 0.0
        diff = g.with_values(g.values - ex)
        errs[f"rho_{side}"] = diff.l2_norm() / g.with_values(ex).l2_norm()
        errs[f"rho_{side}_Linf"] = float(np.max(np.abs(diff.values)))
    return errs


def convergence_study(cfg: SimulationConfig, levels: int = 3) -> dict:
    """Run the force free config at n_y, n_l doubled and dt halved per level and fit orders."""
    if levels < 3:
        raise ValueError("a convergence study needs at least 3 levels")
    force = cfg.boundary.force
    if cfg.mode != "force" or force is None or np.any(np.asarray(force(cfg.numerics.time_grid())) != 0.0):
        raise ValueError("convergence studies need a force-mode config with F = 0")
    num = cfg.numerics
    rows = []
    for k in range(levels):
        c = cfg.with_numerics(n_y=num.n_y * 2**k, n_l=num.n_l * 2**k, dt=num.dt / 2**k)
        outcome = run(c)
        if outcome.termination != "completed":
            raise RuntimeError(f"level {k} stopped early: {outcome.termination} ({outcome.detail})")
        rows.append({"level": k, "n_y": c.numerics.n_y, "n_l": c.numerics.n_l, "dt": c.numerics.dt,
                     **level_errors(c, outcome)})
    h = [1.0 / r["n_y"] for r in rows]
    orders = {name: fit_order(h, [r[name] for r in rows]) for name in ORDER_MIN}
    passed = {name: order_passes(orders[name], ORDER_MIN[name]) for name in ORDER_MIN}
    return {"rows": rows, "orders": orders, "passed": passed, "ok": all(passed.values())}


ERROR_COLUMNS = ("X", "V_plus", "V_minus", "rho_plus", "rho_minus", "rho_plus_Linf", "rho_minus_Linf")


def cmd_convergence(manifest: RunManifest) -> int:
    cfg, out_dir = _prepare(manifest)
    try:
        validate(cfg)
    except AssumptionViolated as exc:
        return _report_violation(exc)
    study = convergence_study(cfg, manifest.levels or 3)
    with open(out_dir / "convergence.csv", "w") as fh:
        fh.write("level,n_y,n_l,dt," + ",".join(ERROR_COLUMNS) + "\n")
        for r in study["rows"]:
            fh.write(f"{r['level']},{r['n_y']},{r['n_l']},{r['dt']:.17g},"
                     + ",".join(f"{r[c]:.6e}" for c in ERROR_COLUMNS) + "\n")
    _write_json(out_dir / "orders.json", {"orders": study["orders"], "minimum": ORDER_MIN,
                                          "passed": study["passed"], "ok": study["ok"]})
    for name, order in study["orders"].items():
        shown = order if order == "exact" else f"{order:.3f}"
        print(f"{name:10s} order {shown:>8s}  {'ok' if study['passed'][name] else 'FAIL'} (min {ORDER_MIN[name]})")
    return 0 if study["ok"] else EXIT_CODES["convergence_order_failed"]


# ---------------------------------------------------------------------------
# steady state
# ---------------------------------------------------------------------------


def steady_prediction(cfg: SimulationConfig):
    """Limit steady state for a free-mode config with constant boundary data."""
    bd, p = cfg.boundary, cfg.params
    u_l, u_r = float(bd.u0_plus(0.0)), float(bd.u1_minus(0.0))
    F = float(bd.force(0.0))
    rho_l = lambda l: bd.rho0_plus(0.0, l)  # noqa: E731
    rho_r = lambda l: bd.rho1_minus(0.0, l)  # noqa: E731
    return asymptotic_steady_length(F, p.C0, p.eta, u_l, u_r, rho_l, rho_r, cfg.bounds.L_upper)


def cmd_steady(manifest: RunManifest) -> int:
    cfg, out_dir = _prepare(manifest)
    if cfg.mode != "force":
        print("steady needs a force-mode config", file=sys.stderr)
        return EXIT_CODES["error"]
    try:
        validate(cfg)
        ss = steady_prediction(cfg)
    except AssumptionViolated as exc:
        return _report_violation(exc)
    except ContractivityViolated as exc:
        print(f"contractivity violated: {exc}", file=sys.stderr)
        return EXIT_CODES["assumption_violated"]
    outcome = run(cfg)
    summary = write_outcome(outcome, out_dir)
    t = outcome.column("t")
    X = outcome.column("X")
    X_end = float(X[-1])
    if ss.X_inf > 0:
        limit = ss.limit_trajectory(cfg.params.X0, t)
        np.savetxt(out_dir / "limit_trajectory.csv", np.column_stack([t, X, limit]), delimiter=",",
                   header="t,X,X_limit", comments="", fmt="%.17g")
    gap = abs(X_end - ss.X_inf) / ss.X_inf if ss.X_inf > 0 else None
    doc = {
        "termination": outcome.termination,
        "t_end": float(t[-1]),
        "X_end": X_end,
        "X_inf": ss.X_inf,
        "C_limit": ss.C_limit,
        "relative_gap": gap,
        "written_at": summary["written_at"],
    }
    _write_json(out_dir / "steady.json", doc)
    print(f"X(t_end)={X_end:.8g}  X_inf={ss.X_inf:.8g}  relative gap="
          + ("n/a" if gap is None else f"{gap:.3%}") + f"  termination={outcome.termination}")
    return EXIT_CODES[outcome.termination]


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------


def oracle_profile(cfg: SimulationConfig, t: float) -> VelocityProfile:
    bd, p = cfg.boundary, cfg.params
    y = np.linspace(0.0, 1.0, cfg.numerics.n_y + 1)
    Vp, Vm = explicit_velocity(t, bd, p.eta)
    zero = np.zeros_like(y)
    X = explicit_length_unchecked(t, bd, p.X0, p.eta)
    return VelocityProfile(y, zero + Vp, zero + Vm, zero, zero, zero, zero, X, p.eta, "free_force")


def oracle_grids(cfg: SimulationConfig, t: float):
    bd, p, num = cfg.boundary, cfg.params, cfg.numerics
    y = np.linspace(0.0, 1.0, num.n_y + 1)
    l = np.linspace(0.0, cfg.bounds.L_upper, num.n_l + 1)
    out = []
    for side in ("plus", "minus"):
        vals = explicit_density_grid(t, y, l, side, bd, p.X0, p.eta, p.s_l)
        vals[:, -1] = 0.0
        out.append(DensityGrid(vals, y, l, side))
    return out


def cmd_oracle(manifest: RunManifest) -> int:
    cfg, out_dir = _prepare(manifest)
    bd, p = cfg.boundary, cfg.params
    ts = cfg.numerics.time_grid()
    X = np.array([explicit_length_unchecked(s, bd, p.X0, p.eta) for s in ts])
    if np.any(X <= 0):
        k = int(np.argmax(X <= 0))
        print(f"the force free bundle collapses before t={ts[k]:.6g}", file=sys.stderr)
        ts, X = ts[:k], X[:k]
    Xdot = np.array([bd.u0_plus(s) + bd.u1_minus(s) - p.eta for s in ts])
    V = np.array([explicit_velocity(s, bd, p.eta) for s in ts]).reshape(-1, 2)
    np.savetxt(out_dir / "oracle_trajectory.csv", np.column_stack([ts, X, Xdot, V]), delimiter=",",
               header="t,X,Xdot,V_plus,V_minus", comments="", fmt="%.17g")
    times = [s for s in (cfg.snapshots or (float(ts[-1]),)) if s <= ts[-1] + 1e-12]
    snap_dir = out_dir / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    for k, s in enumerate(times):
        stem = f"oracle{k:03d}_t{s:.6g}"
        rp, rm = oracle_grids(cfg, s)
        rp.to_csv(snap_dir / f"{stem}_rho_plus.csv")
        rm.to_csv(snap_dir / f"{stem}_rho_minus.csv")
        oracle_profile(cfg, s).to_csv(snap_dir / f"{stem}_velocity.csv")
    print(f"wrote oracle trajectory ({len(ts)} times) and {len(times)} snapshot(s) to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

COMMANDS = {"run": cmd_run, "convergence": cmd_convergence, "steady": cmd_steady, "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="myobundle", description="Actomyosin bundle simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "simulate one config",
        "convergence": "refinement study against the force free solution",
        "steady": "compare a small-force run with the limiting steady length",
        "oracle": "write the force free explicit solution in solver formats",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--mode", choices=("force", "length"), help="override the config mode")
        p.add_argument("--ny", type=int, help="y cells")
        p.add_argument("--nl", type=int, help="l cells")
        p.add_argument("--dt", type=float, help="time step")
        p.add_argument("--t-end", type=float, dest="t_end", help="final time")
        p.add_argument("--snapshots", help="comma separated snapshot times")
        p.add_argument("--picard", choices=("on", "off"), help="inner fixed-point iteration")
        if name == "convergence":
            p.add_argument("--levels", type=int, default=3, help="refinement levels (>= 3)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    manifest = RunManifest.from_args(args)
    try:
        return COMMANDS[args.command](manifest)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["error"]


if __name__ == "__main__":
    sys.exit(main())
