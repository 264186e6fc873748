#!/usr/bin/env python3
"""Yamabe dichotomy experiment: sign certificates and the blow-up alternative.

Sweeps the well amplitude of the synthetic background.  Positive-sign
entries come with a scalar-flat certificate; nonpositive entries with a
trial function of nonpositive quotient.  For one deep well the flow is run
until the factor exceeds the blow-up threshold.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from ylab.backgrounds import flat_data, make_synthetic_background
from ylab.elliptic import yamabe_sign
from ylab.flow import FlowConfig, run_flow
from ylab.grids import LOG_STRETCHED, build_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--amplitudes", default="0.01,-10,-35,-50")
    ap.add_argument("--M", type=int, default=2048)
    ap.add_argument("--R-max", type=float, default=512.0)
    ap.add_argument("--out", default="dichotomy.json")
    args = ap.parse_args()

    grid = build_grid(3, 0.0, args.R_max, args.M, LOG_STRETCHED)
    rows = []
    for amp in (float(a) for a in args.amplitudes.split(",")):
        bg = make_synthetic_background(3, 1.0, amp, 2.0, 1.0, grid)
        sign = yamabe_sign(bg)
        rows.append({
            "A": amp,
            "sign": sign.sign,
            "low_confidence": sign.low_confidence,
            "quotient": sign.quotient,
        })
        note = " (low confidence)" if sign.low_confidence else ""
        print(f"A = {amp:+g}: {sign.sign}{note}"
              + (f", Q = {sign.quotient:.3f}" if sign.quotient is not None else ""))

    bg = make_synthetic_background(3, 1.0, -50.0, 2.0, 1.0, grid)
    cfg = FlowConfig(dt0=1e-3, safety=2.0, t_end=1e13, monitor_every=10,
                     checkpoint_every=10**9, stop_max_u=1e3, newton_max=40)
    res = run_flow(bg, flat_data(grid), cfg)
    max_u = float(np.max(res.final.u.values))
    print(f"deep-well flow: halted={res.halted} ({res.halt_reason}), "
          f"max u = {max_u:.1f} at t = {res.final.t:.3e}")
    blowup = {
        "halted": res.halted,
        "halt_reason": res.halt_reason,
        "max_u": max_u,
        "t_final": res.final.t,
        "max_u_series": [(r.t, r.max_u) for r in res.records],
    }
    Path(args.out).write_text(json.dumps({"signs": rows, "blowup": blowup}, indent=2) + "\n")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
