"""Regenerate src/moistns/data/fixtures.json.

Runs the reference stability experiment and the box-model reference
trajectories, then freezes the results together with the fixed tolerances.
The stability bound is a regression guard: it must sit above the reference
ratio with a comfortable margin.
"""
from __future__ import annotations

import argparse
import json
from dataclasses import asdict
from pathlib import Path

from moistns.params import PhysParams
from moistns.verify.box import REFERENCE_STARTS, box_oracle
from moistns.verify.stability import stability_experiment

OUT = Path(__file__).resolve().parents[1] / "src" / "moistns" / "data" / "fixtures.json"
NORM_RATIO_BOUND = 10.0
MIN_MARGIN = 2.0


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=OUT)
    args = ap.parse_args()

    p = PhysParams()
    ref = stability_experiment(1e-3, 1.0, p, n=32)
    if ref.norm_ratio * MIN_MARGIN > NORM_RATIO_BOUND:
        raise SystemExit(f"reference ratio {ref.norm_ratio:.3f} leaves too little margin under {NORM_RATIO_BOUND}")

    box_params = {
        "default": PhysParams(),
        "evaporating": PhysParams(q_vs_mode="constant", q_vs=0.4),
    }
    box_ref = []
    for label, bp in box_params.items():
        for b0 in REFERENCE_STARTS:
            b1 = box_oracle(b0, 0.1, 1e-5, bp)
            box_ref.append({"params": label, "start": asdict(b0), "t_end": 0.1, "final": asdict(b1)})

    data = {
        "version": 1,
        "stability": {
            "norm_ratio_bound": NORM_RATIO_BOUND,
            "rho_ratio_min": 0.5,
            "linear_response_factor": 2.0,
            "reference": {"delta": 1e-3, "t_end": 1.0, "n": 32, "scheme": "imex2", "cfl": 0.5,
                          "norm_ratio": ref.norm_ratio, "rho_ratio": ref.rho_ratio},
        },
        "box": {
            "tolerance": 1e-6,
            "dt_ref": 1e-5,
            "pde_dt": 1e-3,
            "water_drift": 1e-10,
            "params": {k: {"q_vs_mode": v.q_vs_mode, "q_vs": v.q_vs} for k, v in box_params.items()},
            "reference": box_ref,
        },
        "equilibrium": {"residual": 1e-12, "drift": 1e-10, "steps": 100},
        "mms": {"min_order": 1.8, "levels": [16, 32, 64]},
        "lagrangian": {"identity": 1e-10, "min_order": 1.5, "levels": [8, 16, 32], "t_end": 0.05,
                       "zero_velocity": 1e-10, "equilibrium": 1e-12},
        "linop": {"eps": [1e-3, 1e-4, 1e-5, 1e-6], "slope_min": 0.9, "slope_max": 1.1},
        "closure": {"tolerance": 1e-14, "samples": 10000},
        "mass": {"relative_drift": 1e-8},
        "lipschitz": {"kink_jump": 1e-12},
    }
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(data, indent=2) + "\n")
    print(f"wrote {args.out} (reference norm ratio {ref.norm_ratio:.4f})")


if __name__ == "__main__":
    main()
