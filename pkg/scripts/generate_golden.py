"""Regenerate the snapshot and time-series golden files under tests/golden."""
from pathlib import Path

import numpy as np

from moistns.dynamics import State
from moistns.grid import Grid
from moistns.snapshot import write_snapshot, write_timeseries
from moistns.timestepper import StepReport

GOLDEN = Path(__file__).resolve().parents[1] / "tests" / "golden"
PARAMS_HASH = "0123456789abcdef"


def golden_state() -> State:
    g = Grid(4, 5, 4)
    vals = np.arange(8 * 80, dtype=float).reshape(8, 4, 5, 4) / 64.0 + 0.5
    return State.from_arrays(g, list(vals), t=0.25)


def golden_reports() -> list[StepReport]:
    return [StepReport(t=0.1 * k, dt_used=0.1, implicit_iters=3, max_cfl=0.2, min_rho_d=1.0 - 0.01 * k,
                       min_q=0.0, perturbation_norm=1e-3 * k) for k in (1, 2, 3)]


def main() -> None:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    write_snapshot(GOLDEN / "snapshot_4x5x4.bin", golden_state(), PARAMS_HASH)
    write_timeseries(GOLDEN / "timeseries.csv", golden_reports(), PARAMS_HASH)


if __name__ == "__main__":
    main()
