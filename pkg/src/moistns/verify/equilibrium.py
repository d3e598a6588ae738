"""Residual and drift of the constant equilibrium ``(rho_bar, 0, T_bar, 0, 1, 0)``."""
from __future__ import annotations

from ..dynamics import equilibrium_state, rhs
from ..grid import Grid
from ..params import PhysParams
from ..timestepper import step


def _check(params: PhysParams) -> None:
    if params.q_vs_mode != "zero" and not (params.q_vs_mode == "constant" and params.q_vs == 0):
        raise ValueError("the equilibrium requires q_vs = 0")
    if params.g:
        raise ValueError("the equilibrium requires g = 0")


def equilibrium_residual(params: PhysParams, rho_bar: float = 1.0, T_bar: float = 1.0, n: int = 16) -> float:
    """``|rhs(equilibrium)|_inf``."""
    _check(params)
    return rhs(equilibrium_state(Grid.cube(n), rho_bar, T_bar), params).max_abs()


def equilibrium_drift(params: PhysParams, rho_bar: float = 1.0, T_bar: float = 1.0, n: int = 32,
                      steps: int = 100, dt: float = 0.01, scheme: str = "imex1") -> float:
    """Max change of any field after ``steps`` IMEX steps from the equilibrium."""
    _check(params)
    st0 = equilibrium_state(Grid.cube(n), rho_bar, T_bar)
    st = st0
    for _ in range(steps):
        st, _ = step(st, dt, params, scheme=scheme)
    return st.max_abs_diff(st0)
