"""Zero-dimensional box model and its classical Runge-Kutta reference.

On spatially uniform fields with ``u = 0`` every transport and diffusion
term vanishes, so the PDE reduces to the phase-change ODE for
``(T, q_v, q_c, q_r)`` at frozen ``rho_d``. The rates here are written out
again with plain floats, separately from :mod:`moistns.microphysics`, so
that the comparison is between two transcriptions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..dynamics import State
from ..grid import Grid
from ..params import PhysParams
from ..timestepper import step


@dataclass(frozen=True)
class BoxState:
    T: float
    q_v: float
    q_c: float
    q_r: float
    rho_d: float = 1.0

    @property
    def total_water(self) -> float:
        return self.q_v + self.q_c + self.q_r

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.T, self.q_v, self.q_c, self.q_r)


def _plus(a: float) -> float:
    return a if a > 0.0 else 0.0


def box_rhs(s: tuple[float, float, float, float], rho_d: float, p: PhysParams) -> tuple[float, float, float, float]:
    """``d/dt (T, q_v, q_c, q_r)`` of the box model."""
    T, qv, qc, qr = s
    Qm = 1.0 + qv + qc + qr
    if p.simplified_mode:
        Rd = Rv = 1.0
        c_ev = c_cd = c_cn = q_cn = c_ac = q_ac = c_cr = 1.0
        Qth, Q1, Q2 = Qm, 1.0, 1.0
    else:
        Rd, Rv = p.R_d, p.R_v
        c_ev, c_cd, c_cn, q_cn, c_ac, q_ac, c_cr = p.c_ev, p.c_cd, p.c_cn, p.q_cn, p.c_ac, p.q_ac, p.c_cr
        gm = p.c_pd / (p.c_pd - p.R_d)
        cnu = p.c_pd + p.c_pv * qv + p.c_1 * (qc + qr)
        sig = (p.c_pv * p.R_d / p.c_pd - p.R_v) * qv + p.c_1 * p.R_d / p.c_pd * (qc + qr)
        Qth = cnu / gm + sig
        Q1 = p.c_pv - p.c_1 - p.R_v
        Q2 = p.L_ref - (p.c_pv - p.c_1) * p.T_ref
    if p.q_vs_mode == "zero":
        qvs = 0.0
    elif p.q_vs_mode == "constant":
        qvs = p.q_vs
    else:
        pr = rho_d * (Rd + Rv * qv) * T
        qvs = min(max(p.q_vs + p.q_vs_dp * pr + p.q_vs_dT * T, 0.0), p.q_vs_star)
    S_ev = c_ev * T * (Rd + Rv * qv) / Qm * _plus(qvs - qv) * qr
    S_cd = c_cd * (qv - qvs) * qc + c_cn * _plus(qv - qvs) * q_cn
    S_ac = c_ac * _plus(qc - q_ac)
    S_cr = c_cr * qc * qr
    return (
        -(Q1 * T + Q2) * (S_ev - S_cd) / Qth,
        S_ev - S_cd,
        S_cd - S_ac - S_cr,
        S_ac + S_cr - S_ev,
    )


def _rk4(s, h, rho_d, p):
    def add(a, b, c):
        return tuple(ai + c * bi for ai, bi in zip(a, b))

    k1 = box_rhs(s, rho_d, p)
    k2 = box_rhs(add(s, k1, h / 2), rho_d, p)
    k3 = box_rhs(add(s, k2, h / 2), rho_d, p)
    k4 = box_rhs(add(s, k3, h), rho_d, p)
    return tuple(si + h / 6 * (a + 2 * b + 2 * c + d) for si, a, b, c, d in zip(s, k1, k2, k3, k4))


def box_trajectory(b0: BoxState, times, dt_ref: float, params: PhysParams) -> list[BoxState]:
    """Reference states at each of the increasing ``times`` (starting from ``t = 0``)."""
    if not 0 < dt_ref <= 1e-4:
        raise ValueError("the reference step must lie in (0, 1e-4]")
    s, t, out = b0.as_tuple(), 0.0, []
    for target in times:
        n = max(0, math.ceil((target - t) / dt_ref - 1e-9))
        if n:
            h = (target - t) / n
            for _ in range(n):
                s = _rk4(s, h, b0.rho_d, params)
        t = target
        out.append(BoxState(*s, rho_d=b0.rho_d))
    return out


def box_oracle(b0: BoxState, t_end: float, dt_ref: float, params: PhysParams) -> BoxState:
    """Classical four-stage Runge-Kutta solution of the box model at ``t_end``."""
    if t_end <= 0:
        return b0
    return box_trajectory(b0, [t_end], dt_ref, params)[0]


def uniform_state(grid: Grid, b: BoxState) -> State:
    return State.uniform(grid, rho_d=b.rho_d, T=b.T, q_v=b.q_v, q_c=b.q_c, q_r=b.q_r)


def box_vs_pde(b0: BoxState, t_end: float, params: PhysParams, *, n: int = 4, dt: float = 1e-3,
               dt_ref: float = 1e-5, checkpoints: int = 10, scheme: str = "imex2") -> dict:
    """Run the PDE on a uniform ``n``-cube and compare with the box reference.

    Returns the maximum deviation over all cells and checkpoints, the
    spatial spread of the PDE fields (zero for an exact reduction) and the
    sign of ``q_c - 1`` at start and end, to record switch crossings.
    """
    g = Grid.cube(n)
    times = [t_end * (k + 1) / checkpoints for k in range(checkpoints)]
    ref = box_trajectory(b0, times, dt_ref, params)
    st = uniform_state(g, b0)
    err = spread = 0.0
    pde = []
    for target, r in zip(times, ref):
        while st.t < target * (1 - 1e-12):
            st, _ = step(st, min(dt, target - st.t), params, scheme=scheme)
        pde.append(tuple(float(getattr(st, f).flat[0]) for f in ("T", "q_v", "q_c", "q_r")))
        for name, val in zip(("T", "q_v", "q_c", "q_r"), r.as_tuple()):
            a = getattr(st, name)
            err = max(err, float(np.max(np.abs(a - val))))
            spread = max(spread, float(np.ptp(a)))
        err = max(err, float(np.max(np.abs(st.u))), float(np.max(np.abs(st.rho_d - b0.rho_d))))
    water = [abs(r.total_water - b0.total_water) for r in ref]
    return {
        "error": err,
        "spread": spread,
        "water_drift": max(water),
        "crossed_q_c_1": (b0.q_c - 1.0) * (ref[-1].q_c - 1.0) < 0,
        "final": ref[-1],
        "times": times,
        "pde": pde,
        "reference": [r.as_tuple() for r in ref],
    }


#: start points used by the acceptance check; the first two cross ``q_c = 1``
REFERENCE_STARTS = (
    BoxState(T=1.0, q_v=0.1, q_c=1.02, q_r=0.5),
    BoxState(T=0.5, q_v=0.5, q_c=0.97, q_r=0.0),
    BoxState(T=1.2, q_v=0.3, q_c=0.4, q_r=0.2),
)
