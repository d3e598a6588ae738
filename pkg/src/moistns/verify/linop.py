"""Finite-difference probe of the Eulerian right-hand side at the equilibrium.

For a direction ``z`` the quotient ``(RHS(eq + eps z) - RHS(eq)) / eps``
is compared with the block operator ``A`` of the shifted system plus the
linear fall term. Probes keep ``q_v`` and ``q_c - 1`` strictly negative,
so every positive part is locally linear or identically zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..dynamics import FIELD_NAMES, State, equilibrium_state, rain_velocity, rhs
from ..grid import Grid
from ..lagrangian import shifted_operator
from ..params import PhysParams


def probe_direction(grid: Grid, seed: int = 0, only: str | None = None) -> State:
    """Smooth BC-compatible direction in shifted variables.

    ``only`` restricts the probe to one field (``"rho_d"``, ``"u"``, ``"T"``,
    ``"q_v"``, ``"q_c"`` or ``"q_r"``).
    """
    rng = np.random.default_rng(seed)
    x, y, z = grid.mesh
    tp = 2 * np.pi

    def wave(parity: str):
        a = rng.uniform(-1, 1, 4)
        kx, ky = rng.integers(0, 3, 2)
        m = rng.integers(1, 3) if parity == "odd" else rng.integers(0, 3)
        vert = np.sin(m * np.pi * z) if parity == "odd" else np.cos(m * np.pi * z)
        horiz = a[0] * np.cos(tp * kx * x + a[1]) * np.cos(tp * ky * y + a[2]) + a[3]
        return horiz * vert

    def negative():
        w = wave("even")
        return -(1.5 + w / max(1.0, float(np.max(np.abs(w)))))

    d = {
        "rho_d": wave("even"),
        "u": np.stack([wave("odd") for _ in range(3)]),
        "T": wave("even"),
        "q_v": negative(),
        "q_c": negative(),
        "q_r": 1.5 + 0.5 * np.tanh(wave("even")),
    }
    if only is not None:
        for n in FIELD_NAMES:
            if n != only:
                d[n] = np.zeros_like(d[n])
    return State(grid, **d)


def _check_params(params: PhysParams) -> None:
    if params.q_vs_mode != "zero" and not (params.q_vs_mode == "constant" and params.q_vs == 0):
        raise ValueError("the linear probe assumes q_vs = 0")
    if params.g:
        raise ValueError("the linear probe assumes g = 0")
    if not params.simplified_mode:
        raise ValueError("the block operator is stated for the simplified constants")


def probe_residual(zdir: State, eps: float, params: PhysParams, rho_bar: float = 1.0, T_bar: float = 1.0,
                   rho_flux: str = "minmod") -> float:
    """``max |A z + V_r d_z q_r - (RHS(eq + eps z) - RHS(eq)) / eps|`` over all fields."""
    _check_params(params)
    g = zdir.grid
    eq = equilibrium_state(g, rho_bar, T_bar)
    r0 = rhs(eq, params, rho_flux=rho_flux).total()
    r1 = rhs(eq.updated(zdir.fields(), eps), params, rho_flux=rho_flux).total()
    Az = shifted_operator(zdir, params, rho_bar, T_bar, sedimentation=True, V_r=rain_velocity(g, params))
    return float(max(np.max(np.abs(Az[n] - (r1[n] - r0[n]) / eps)) for n in FIELD_NAMES))


def linearized_operator_residual(params: PhysParams, *, n: int = 16, eps: float = 1e-4, seeds=(0, 1, 2),
                                 rho_bar: float = 1.0, T_bar: float = 1.0) -> float:
    """Largest probe residual over a set of random directions."""
    g = Grid.cube(n)
    return max(probe_residual(probe_direction(g, s), eps, params, rho_bar, T_bar) for s in seeds)


@dataclass
class SweepRow:
    eps: float
    residual: float
    slope: float | None


def eps_sweep(params: PhysParams, *, n: int = 16, eps_values=(1e-3, 1e-4, 1e-5, 1e-6), seed: int = 0,
              rho_bar: float = 1.0, T_bar: float = 1.0) -> list[SweepRow]:
    """Residual against ``eps`` for one probe, with the local log-log slope."""
    g = Grid.cube(n)
    zdir = probe_direction(g, seed)
    res = [probe_residual(zdir, e, params, rho_bar, T_bar) for e in eps_values]
    rows = [SweepRow(eps_values[0], res[0], None)]
    for k in range(1, len(res)):
        slope = math.log(res[k - 1] / res[k]) / math.log(eps_values[k - 1] / eps_values[k]) if res[k] > 0 else None
        rows.append(SweepRow(eps_values[k], res[k], slope))
    return rows
