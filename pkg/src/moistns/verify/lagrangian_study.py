"""Self-convergence of the Eulerian/Lagrangian discrepancy and identity checks of the map machinery."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import grid as G
from ..dynamics import State, bump_fields, equilibrium_state, velocity_shape
from ..grid import DIRICHLET0, NEUMANN0, Grid
from ..lagrangian import (LagrangianMap, default_steps, equivalence_check, transformed_divgrad,
                          transformed_laplacian)
from ..params import PhysParams
from .mms import observed_orders


@dataclass
class EquivalenceRow:
    n: int
    steps: int
    discrepancy: float
    order: float | None


def study_state(grid: Grid, u_amp: float = 0.5, delta: float = 0.05) -> State:
    """Equilibrium plus a bump of size ``delta`` and a no-slip velocity of size ``u_amp``."""
    b = bump_fields(grid)
    st = equilibrium_state(grid).updated(b, delta)
    return st.updated({"u": velocity_shape(grid)}, u_amp)


def equivalence_study(params: PhysParams, *, levels=(8, 16, 32), t_end: float = 0.05, u_amp: float = 0.5,
                      delta: float = 0.05) -> list[EquivalenceRow]:
    """Discrepancy at ``t_end`` under joint refinement ``dt ~ h^2``."""
    rows = []
    for n in levels:
        g = Grid.cube(n)
        steps = default_steps(g, t_end)
        rows.append((n, steps, equivalence_check(study_state(g, u_amp, delta), t_end, params, g, steps=steps)))
    orders = observed_orders([r[2] for r in rows], [1.0 / r[0] for r in rows])
    return [EquivalenceRow(n, s, e, o) for (n, s, e), o in zip(rows, orders)]


def identity_checks(n: int = 16, amp: float = 0.05) -> dict[str, float]:
    """``Z gradX - Id`` on a deformed map and the operator identities at ``Z = Id``."""
    g = Grid.cube(n)
    b = bump_fields(g)
    m = LagrangianMap.from_displacement(g, amp * velocity_shape(g))
    I = LagrangianMap.identity(g).Z
    L1 = transformed_laplacian(b["T"], I, g) - G.laplacian(b["T"], g)
    L2 = transformed_divgrad(b["u"], I, g) - G.grad(G.div(b["u"], g, DIRICHLET0), g, NEUMANN0)
    return {
        "Z_gradX_minus_Id": m.identity_residual(),
        "L1_minus_laplacian_at_Id": float(np.max(np.abs(L1))),
        "L2_minus_graddiv_at_Id": float(np.max(np.abs(L2))),
    }
