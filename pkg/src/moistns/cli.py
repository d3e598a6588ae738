"""``moistns`` command-line driver.

Exit codes: 0 success, 1 bad invocation or invalid configuration,
2 solver failure (the failing time is printed), 3 a verify check failed.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import plotting
from .dynamics import initial_state
from .errors import MapDegenerate, ParseError, SolverDiverged, StateInvalid, ValidationError
from .grid import Grid
from .params import PhysParams, load_config
from .snapshot import read_timeseries, snapshot_name, write_snapshot, write_table, write_timeseries

log = logging.getLogger("moistns")

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3
VERIFY_TARGETS = ("mms", "box", "equilibrium", "stability", "lagrangian", "linop")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def max_workers() -> int:
    """Worker cap from ``MOISTNS_THREADS`` (default 1)."""
    raw = os.environ.get("MOISTNS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _pmap(fn, items):
    items = list(items)
    n = min(max_workers(), len(items)) or 1
    if n == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _levels(text: str | None, default):
    if not text:
        return tuple(default)
    try:
        out = tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise UsageError(f"--levels expects comma-separated integers, got {text!r}") from exc
    if any(n < 4 for n in out):
        raise UsageError("--levels entries must be at least 4")
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="moistns", description="Moist compressible Navier-Stokes simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    r = sub.add_parser("run", help="integrate a configuration")
    r.add_argument("--config", required=True, help="key = value configuration file")
    r.add_argument("--out", help="output directory (overrides output_dir)")
    r.add_argument("--mode", choices=("eulerian", "lagrangian", "both"))
    r.add_argument("--delta", type=float, help="bump amplitude (overrides delta)")

    v = sub.add_parser("verify", help="run a verification experiment")
    v.add_argument("target", choices=VERIFY_TARGETS)
    v.add_argument("--levels", help="comma-separated grid sizes")
    v.add_argument("--t-end", type=float, dest="t_end")
    v.add_argument("--delta", type=float)
    v.add_argument("--out", default="verify_out")
    return ap


# -- run ------------------------------------------------------------------------

def _snapshot_writer(out: Path, digest: str):
    def write(k, state):
        write_snapshot(out / snapshot_name(k), state, digest)

    return write


def _run_branch(kind: str, state0, cfg, params: PhysParams, out: Path):
    from .lagrangian import run_lagrangian
    from .timestepper import run

    out.mkdir(parents=True, exist_ok=True)
    digest = params.digest()
    driver = run if kind == "eulerian" else run_lagrangian
    final, series = driver(state0, cfg, params, on_snapshot=_snapshot_writer(out, digest))
    ts = write_timeseries(out / "timeseries.csv", series, digest)
    if series:
        plotting.plot_timeseries(read_timeseries(ts), out / "timeseries.png", title=f"{kind} run")
    plotting.plot_state_slices(final, out / "final_state.png")
    return final


def cmd_run(args) -> int:
    try:
        params, cfg = load_config(args.config)
        changes = {}
        if args.out:
            changes["output_dir"] = args.out
        if args.mode:
            changes["mode"] = args.mode
        if args.delta is not None:
            changes["delta"] = args.delta
        cfg = cfg.replace(**changes).validate()
        params.validate()
    except FileNotFoundError:
        raise UsageError(f"config file not found: {args.config}")
    except (ValidationError, ParseError) as exc:
        raise UsageError(str(exc))
    grid = Grid(cfg.nx, cfg.ny, cfg.nz)
    state0 = initial_state(grid, cfg)
    out = Path(cfg.output_dir)
    try:
        finals = {}
        if cfg.mode in ("eulerian", "both"):
            finals["eulerian"] = _run_branch("eulerian", state0, cfg, params, out)
        if cfg.mode in ("lagrangian", "both"):
            sub = out / "lagrangian" if cfg.mode == "both" else out
            finals["lagrangian"] = _run_branch("lagrangian", state0, cfg, params, sub)
    except StateInvalid as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (SolverDiverged, MapDegenerate) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    for kind, st in finals.items():
        print(f"{kind}: t={st.t:.6g} min rho_d={st.rho_d.min():.6g} min q={st.min_q():.3g}")
    if len(finals) == 2:
        print(f"eulerian/lagrangian discrepancy: {finals['eulerian'].max_abs_diff(finals['lagrangian']):.3e}")
    print(f"output written to {out}")
    return EXIT_OK


# -- verify ---------------------------------------------------------------------

@dataclass
class Check:
    name: str
    value: float
    limit: float
    kind: str = "max"  # "max": value <= limit, "min": value >= limit

    @property
    def passed(self) -> bool:
        if self.value != self.value:
            return False
        return self.value <= self.limit if self.kind == "max" else self.value >= self.limit

    def row(self):
        op = "<=" if self.kind == "max" else ">="
        return [self.name, self.value, f"{op} {self.limit:g}", "PASS" if self.passed else "FAIL"]


def _verify_equilibrium(args, out: Path) -> list[Check]:
    from .verify.equilibrium import equilibrium_drift, equilibrium_residual

    p = PhysParams()
    n = _levels(args.levels, (32,))[0]
    checks = [
        Check("residual rho=1 T=1", equilibrium_residual(p, 1.0, 1.0, n), 1e-12),
        Check("residual rho=2 T=0", equilibrium_residual(p, 2.0, 0.0, n), 1e-12),
        Check("drift after 100 steps", equilibrium_drift(p, n=n), 1e-10),
    ]
    write_table(out / "equilibrium.csv", ("check", "value"), [(c.name, c.value) for c in checks])
    return checks


def _verify_mms(args, out: Path) -> list[Check]:
    from .verify.mms import CASES, mms_convergence

    levels = _levels(args.levels, (16, 32, 64))
    names = ("diffusion", "coupled")

    def one(name):
        return name, mms_convergence(CASES[name](), levels=levels)

    checks = []
    for name, rows in _pmap(one, names):
        write_table(out / f"mms_{name}.csv", ("n", "h", "steps", "error", "order"),
                    [(r.n, r.h, r.steps, r.error, r.order) for r in rows])
        plotting.plot_convergence([r.h for r in rows], [r.error for r in rows], out / f"mms_{name}.png", title=name)
        for r in rows[1:]:
            checks.append(Check(f"{name} order {rows[rows.index(r) - 1].n}->{r.n}", r.order, 1.8, "min"))
    return checks


def _verify_box(args, out: Path) -> list[Check]:
    from .verify.box import REFERENCE_STARTS, box_vs_pde

    t_end = args.t_end or 0.1
    psets = {"default": PhysParams(), "evaporating": PhysParams(q_vs_mode="constant", q_vs=0.4)}
    jobs = [(lab, k, b) for lab in psets for k, b in enumerate(REFERENCE_STARTS)]
    results = _pmap(lambda j: box_vs_pde(j[2], t_end, psets[j[0]]), jobs)
    checks, rows = [], []
    for (lab, k, b), r in zip(jobs, results):
        tag = f"{lab}#{k}" + (" (crosses q_c=1)" if r["crossed_q_c_1"] else "")
        checks.append(Check(f"box {tag} error", r["error"], 1e-6))
        checks.append(Check(f"box {tag} water drift", r["water_drift"], 1e-10))
        rows.append((lab, k, b.T, b.q_v, b.q_c, b.q_r, r["error"], r["water_drift"], r["crossed_q_c_1"]))
        plotting.plot_box(r["times"], r["pde"], r["reference"], out / f"box_{lab}_{k}.png")
    crossed = sum(r["crossed_q_c_1"] for r in results)
    checks.append(Check("trajectories crossing q_c=1", float(crossed), 1.0, "min"))
    write_table(out / "box.csv", ("params", "start", "T0", "q_v0", "q_c0", "q_r0", "error", "water_drift", "crossed"), rows)
    return checks


def _verify_stability(args, out: Path) -> list[Check]:
    from .verify.fixtures import load_fixtures
    from .verify.stability import stability_experiment

    fx = load_fixtures()["stability"]
    n = _levels(args.levels, (32,))[0]
    delta = 1e-3 if args.delta is None else args.delta
    t_end = args.t_end or 1.0
    rep, small = _pmap(lambda d: stability_experiment(d, t_end, PhysParams(), n=n), (delta, delta / 10))
    rows = [(r.t, r.dt_used, r.min_rho_d, r.min_q, r.perturbation_norm) for r in rep.series]
    write_table(out / "stability.csv", ("t", "dt", "min_rho_d", "min_q", "perturbation_norm"), rows)
    if rep.series:
        plotting.plot_timeseries({k: [r[i] for r in rows] for i, k in
                                  enumerate(("t", "dt", "min_rho_d", "min_q", "perturbation_norm"))},
                                 out / "stability.png", title=f"delta = {delta:g}")
    return [
        Check("sup norm / delta", rep.norm_ratio, fx["norm_ratio_bound"]),
        Check("min rho_d / rho_bar", rep.rho_ratio, fx["rho_ratio_min"], "min"),
        Check(f"ratio spread vs delta={delta / 10:g}", max(rep.norm_ratio, small.norm_ratio)
              / max(min(rep.norm_ratio, small.norm_ratio), 1e-300), fx["linear_response_factor"]),
    ]


def _verify_lagrangian(args, out: Path) -> list[Check]:
    from .verify.lagrangian_study import equivalence_study, identity_checks

    levels = _levels(args.levels, (8, 16, 32))
    ident = identity_checks()
    rows = equivalence_study(PhysParams(), levels=levels, t_end=args.t_end or 0.05)
    write_table(out / "lagrangian.csv", ("n", "steps", "discrepancy", "order"),
                [(r.n, r.steps, r.discrepancy, r.order) for r in rows])
    plotting.plot_convergence([1.0 / r.n for r in rows], [r.discrepancy for r in rows], out / "lagrangian.png",
                              title="Eulerian/Lagrangian discrepancy")
    checks = [Check(k, v, 1e-10 if k.startswith("Z") else 0.0) for k, v in ident.items()]
    for prev, r in zip(rows, rows[1:]):
        checks.append(Check(f"discrepancy order {prev.n}->{r.n} ({r.discrepancy:.2e})", r.order, 1.5, "min"))
    return checks


def _verify_linop(args, out: Path) -> list[Check]:
    from .verify.linop import eps_sweep

    n = _levels(args.levels, (16,))[0]
    rows = eps_sweep(PhysParams(), n=n)
    write_table(out / "linop.csv", ("eps", "residual", "slope"), [(r.eps, r.residual, r.slope) for r in rows])
    plotting.plot_eps_sweep([r.eps for r in rows], [r.residual for r in rows], out / "linop.png")
    checks = []
    for r in rows[1:]:
        checks.append(Check(f"slope at eps={r.eps:g} (lower)", r.slope, 0.9, "min"))
        checks.append(Check(f"slope at eps={r.eps:g} (upper)", r.slope, 1.1))
    return checks


VERIFIERS = {
    "equilibrium": _verify_equilibrium,
    "mms": _verify_mms,
    "box": _verify_box,
    "stability": _verify_stability,
    "lagrangian": _verify_lagrangian,
    "linop": _verify_linop,
}


def cmd_verify(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        checks = VERIFIERS[args.target](args, out)
    except (StateInvalid, SolverDiverged, MapDegenerate) as exc:
        print(f"{args.target}: FAIL ({type(exc).__name__}: {exc})")
        return EXIT_VERIFY
    width = max(len(c.name) for c in checks)
    for c in checks:
        name, value, lim, status = c.row()
        print(f"{name:<{width}}  {value:12.4e}  {lim:>10}  {status}")
    write_table(out / f"{args.target}_checks.csv", ("check", "value", "limit", "status"), [c.row() for c in checks])
    ok = all(c.passed for c in checks)
    print(f"{args.target}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_VERIFY


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        if args.command == "run":
            return cmd_run(args)
        if args.command == "verify":
            return cmd_verify(args)
        raise UsageError("a command is required")
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"moistns: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
