#!/usr/bin/env python3
"""Gaussian-bump experiment: monotone curvature norms and sup-norm decay.

Runs the positive-Yamabe bump flow, then audits the monotone quantities
(integral of |R|^p for p in the eps = 0.1 window around n/2, min R) and fits
the sup-norm decay exponent over the second half of the valid window.
"""

import argparse
import json
from pathlib import Path

from ylab.backgrounds import gaussian_bump_data, make_flat_background
from ylab.diagnostics import (
    NONDECREASING,
    NONINCREASING,
    audit_monotone,
    convergence_to_limit,
    fit_decay_exponent,
    lp_inequality_audit,
)
from ylab.elliptic import solve_scalar_flat
from ylab.flow import FlowConfig, run_flow
from ylab.grids import LOG_STRETCHED, build_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, default=0.2)
    ap.add_argument("--sigma", type=float, default=1.0)
    ap.add_argument("--M", type=int, default=4096)
    ap.add_argument("--R-max", type=float, default=512.0)
    ap.add_argument("--t-end", type=float, default=50.0)
    ap.add_argument("--out", default="bump_audit.json")
    args = ap.parse_args()

    grid = build_grid(3, 0.0, args.R_max, args.M, LOG_STRETCHED)
    bg = make_flat_background(3, grid)
    init = gaussian_bump_data(grid, args.eps, args.sigma)
    cfg = FlowConfig(dt0=1e-3, dt_max=0.25, safety=1.2, t_end=args.t_end,
                     monitor_every=2, checkpoint_every=4)
    print(f"running bump flow: eps={args.eps} sigma={args.sigma} M={args.M}")
    res = run_flow(bg, init, cfg)
    print(f"done: {res.final.step_index} steps, halted={res.halted}")

    out = {"halted": res.halted, "steps": res.final.step_index}
    for p in (1.4, 1.5, 1.6):
        audit = audit_monotone([r.lp_R[p] for r in res.records[5:]],
                               NONINCREASING, 1e-8, quantity=f"lpR_p{p}")
        out[f"lp_monotone_p{p}"] = audit.to_json()
        print(f"  int|R|^{p} dV nonincreasing: {audit.violations} violations")
    min_r = audit_monotone([r.min_R for r in res.records], NONDECREASING,
                           10.0 * grid.h**2, quantity="min_R")
    out["min_r_monotone"] = min_r.to_json()
    print(f"  min R nondecreasing: {min_r.violations} violations")

    out["lp_inequality_p1.6"] = lp_inequality_audit(res.records, 1.6, 3).to_json()

    ts = [r.t for r in res.records]
    t_hi = min(ts[-1], res.valid_t_max)
    fit = fit_decay_exponent(ts, [r.sup_R for r in res.records], window=(t_hi / 2, t_hi))
    out["sup_r_fit"] = fit.to_json()
    print(f"  sup|R| ~ t^{fit.exponent:.3f} (r^2 = {fit.r_squared:.5f})")

    u_inf, _ = solve_scalar_flat(bg)
    conv = convergence_to_limit(res.checkpoints, u_inf, 0.0, valid_t_max=res.valid_t_max)
    out["convergence_fit"] = conv.fit.to_json() if conv.fit else None
    if conv.fit:
        print(f"  ||u - u_inf||_inf ~ t^{conv.fit.exponent:.3f}")

    Path(args.out).write_text(json.dumps(out, indent=2) + "\n")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
