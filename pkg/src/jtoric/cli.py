"""Batch command-line front end.

Subcommands: stability, flow, calabi, report.  Exit codes are part of the
interface: 0 success/pass/Converged, 1 parse or config error, 2 stability
violated, 3 stability marginal, 4 flow Degenerating, 5 flow Undecided,
6 flow StepFailure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import calabi as cal
from . import flow as fl
from .errors import JToricError, StepFailure
from .io import (
    RunConfig,
    dump_run_config,
    fmt,
    load_run_config,
    potential_from_config,
    read_polytope,
    write_csv,
)
from .polytope import check_face_stability

__all__ = ["main", "cmd_stability", "cmd_flow", "cmd_calabi", "cmd_report"]


def _threads():
    """Parallelism cap from the environment (reserved; runs are sequential)."""
    try:
        return max(1, int(os.environ.get("JFLOW_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_stability(cfg):
    P = read_polytope(cfg.p_path)
    Q = read_polytope(cfg.q_path)
    tol = float(cfg.tol_overrides.get("stability", 1e-9))
    report = check_face_stability(P, Q, tol=tol)
    payload = {
        "nc": report.nc,
        "verdict": report.verdict,
        "faces": [
            {
                "facets": sorted(f.face.facet_ids),
                "dim": f.p,
                "lhs": f.lhs,
                "verdict": f.verdict,
            }
            for f in report.per_face
        ],
    }
    if cfg.out_outcome:
        with open(cfg.out_outcome, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
    else:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        print()
    return {"pass": 0, "violated": 2, "marginal": 3}[report.verdict]


def cmd_flow(cfg):
    P = read_polytope(cfg.p_path)
    Q = read_polytope(cfg.q_path)
    u0 = potential_from_config(P, cfg.u0)
    g = potential_from_config(Q, cfg.g)
    state = fl.init_flow(P, Q, u0, g, cfg.h)
    state.cfl = cfg.cfl
    try:
        state, trace, outcome = fl.run(state, cfg.t_end, cfg.diag_every,
                                       tracked_z=cfg.tracked_z or None)
    except StepFailure as exc:
        print(f"StepFailure: {exc}", file=sys.stderr)
        return 6

    if cfg.out_csv:
        keys, rows = trace.as_rows()
        write_csv(cfg.out_csv, keys, rows)
    if cfg.out_outcome:
        payload = {"tag": outcome.tag, "t": state.t,
                   "static_residual": outcome.static_residual,
                   "sigma_range": outcome.sigma_range}
        if outcome.degenerate_nodes is not None:
            payload["degenerate_nodes"] = [
                int(i) for i in outcome.degenerate_nodes]
        with open(cfg.out_outcome, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
    if cfg.out_state:
        U, DU, _, _, _ = fl._eval_fields(state, state.v)
        tr = np.trace(DU, axis1=-2, axis2=-1)
        det = np.linalg.det(DU)
        payload = {
            "t": state.t,
            "h": state.h,
            "origin": state.origin.tolist(),
            "counts": list(state.counts),
            "nodes": state.nodes.tolist(),
            "v": state.v.tolist(),
            "U": U.tolist(),
            "trace": tr.tolist(),
            "det": det.tolist(),
        }
        with open(cfg.out_state, "w") as fh:
            json.dump(payload, fh, sort_keys=True)
    return {"Converged": 0, "Degenerating": 4, "Undecided": 5}[outcome.tag]


def cmd_calabi(n, a, b, grid, t_end, out, summary_path=None, cfl=0.2,
               initial="linear", snapshots=1):
    if n < 2 or a <= 1 or b <= 1 or grid < 8 or t_end <= 0:
        raise ValueError("need n >= 2, a > 1, b > 1, grid >= 8, t_end > 0")
    tag = cal.classify(n, a, b)
    make = (cal.canonical_initial_profile if initial == "canonical"
            else cal.linear_initial_profile)
    rows = []
    times = np.linspace(0.0, t_end, snapshots + 1)
    prof = make(n, a, b, num_nodes=grid)
    for i, tk in enumerate(times):
        if i:
            prof, _ = cal.radial_run(prof, tk - times[i - 1], cfl=cfl,
                                     num_records=1)
        tr, det = prof.trace(), prof.det()
        for Bv, fv, tv, dv in zip(prof.B_grid, prof.f, tr, det):
            rows.append((tk, Bv, fv, tv, dv))
    if out:
        write_csv(out, ["t", "B", "f", "trace", "det"], rows)
    summary = {"case": tag.tag, "nc": tag.nc,
               "lambda": tag.lam, "nc_prime": tag.nc_prime,
               "squeeze_point": None}
    if tag.tag == "Case3":
        summary["squeeze_point"] = cal.squeeze_point(prof, tag.nc_prime)
    if summary_path:
        with open(summary_path, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
    else:
        json.dump(summary, sys.stdout, indent=2, sort_keys=True)
        print()
    return 0


def cmd_report(cfg_path):
    cfg = load_run_config(cfg_path)
    print(dump_run_config(cfg))
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _build_parser():
    ap = argparse.ArgumentParser(
        prog="jtoric",
        description="Toric transition-map flows on Delzant polytopes")
    ap.add_argument("--seed", type=int, default=None,
                    help="reserved; no stochastic components")
    sub = ap.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("stability", help="face stability check")
    ps.add_argument("--p", required=True, help="source polytope file")
    ps.add_argument("--q", required=True, help="target polytope file")
    ps.add_argument("--out", default=None, help="report JSON path")
    ps.add_argument("--tol", type=float, default=1e-9)

    pf = sub.add_parser("flow", help="run the 2-D grid flow")
    pf.add_argument("--config", required=True, help="run config JSON")

    pc = sub.add_parser("calabi", help="radial reduction on the blowup")
    pc.add_argument("--n", type=int, required=True)
    pc.add_argument("--a", type=float, required=True)
    pc.add_argument("--b", type=float, required=True)
    pc.add_argument("--grid", type=int, default=2048)
    pc.add_argument("--t-end", type=float, default=50.0)
    pc.add_argument("--cfl", type=float, default=0.2)
    pc.add_argument("--initial", choices=["linear", "canonical"],
                    default="linear")
    pc.add_argument("--snapshots", type=int, default=1)
    pc.add_argument("--out", default=None, help="CSV path")
    pc.add_argument("--summary", default=None, help="summary JSON path")

    pr = sub.add_parser("report", help="echo a normalized run config")
    pr.add_argument("--config", required=True)
    return ap


def main(argv=None):
    _threads()
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "stability":
            cfg = RunConfig(command="stability", p_path=args.p,
                            q_path=args.q, out_outcome=args.out,
                            tol_overrides={"stability": args.tol}).validate()
            return cmd_stability(cfg)
        if args.command == "flow":
            cfg = load_run_config(args.config)
            cfg.command = "flow"
            cfg.validate()
            return cmd_flow(cfg)
        if args.command == "calabi":
            return cmd_calabi(args.n, args.a, args.b, args.grid, args.t_end,
                              args.out, summary_path=args.summary,
                              cfl=args.cfl, initial=args.initial,
                              snapshots=args.snapshots)
        if args.command == "report":
            return cmd_report(args.config)
        return 1
    except StepFailure as exc:
        print(f"StepFailure: {exc}", file=sys.stderr)
        return 6
    except (JToricError, ValueError, OSError, KeyError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
