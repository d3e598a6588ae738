"""Manufactured solutions.

The continuous right-hand side is transcribed symbolically with sympy,
differentiated exactly, and the residual ``d_t phi - RHS(phi)`` is compiled
to a numpy forcing. Cases are built from parity-compatible bases: velocity
components are odd about the walls (``sin(pi z)``), scalars are even
(``cos(pi z)``), and the dry density is a monotone profile in ``z`` with
vanishing curvature at both walls.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from ..dynamics import FIELD_NAMES, State
from ..grid import Grid
from ..params import PhysParams
from ..timestepper import step

x, y, z, t = sp.symbols("x y z t", real=True)
X = (x, y, z)
PI = sp.pi


def _pos(f):
    return (f + sp.Abs(f)) / 2


def _coeffs(qv, qc, qr, T, p: PhysParams):
    """Thermodynamic coefficients ``(Q_m, Q_th, Q_cp, Q_1, Q_2, kappa, c_1, R_d, R_v)``."""
    Qm = 1 + qv + qc + qr
    if p.simplified_mode:
        return Qm, Qm, -(1 + qv), 1, 1, 1, 1, 1, 1
    gm = p.c_pd / (p.c_pd - p.R_d)
    cnu = p.c_pd + p.c_pv * qv + p.c_1 * (qc + qr)
    sig = (p.c_pv / p.c_pd * p.R_d - p.R_v) * qv + p.c_1 / p.c_pd * p.R_d * (qc + qr)
    return (Qm, cnu / gm + sig, sig - p.R_d / p.c_pd * cnu, p.c_pv - p.c_1 - p.R_v,
            p.L_ref - (p.c_pv - p.c_1) * p.T_ref, p.kappa, p.c_1, p.R_d, p.R_v)


def _qvs(pr, T, p: PhysParams):
    if p.q_vs_mode == "zero":
        return sp.Integer(0)
    if p.q_vs_mode == "constant":
        return sp.Float(p.q_vs)
    # the affine mode is used unclipped; cases keep it inside [0, q_vs_star]
    return p.q_vs + p.q_vs_dp * pr + p.q_vs_dT * T


def _fall_speed(p: PhysParams):
    if p.V_r_mode == "constant":
        return sp.Float(p.V_r)
    return p.V_r * (1 + p.V_r_amp * sp.cos(PI * z))


def symbolic_rhs(F: dict, p: PhysParams) -> dict:
    """Continuous tendencies of the Eulerian system for closed-form fields ``F``."""
    rho, u, T = F["rho_d"], F["u"], F["T"]
    qv, qc, qr = F["q_v"], F["q_c"], F["q_r"]
    Qm, Qth, Qcp, Q1, Q2, kap, c1, Rd, Rv = _coeffs(qv, qc, qr, T, p)
    Vr = _fall_speed(p)
    pr = rho * (Rd + Rv * qv) * T
    qvs = _qvs(pr, T, p)
    s = p.simplified_mode
    c_ev, c_cd, c_cn, q_cn, c_ac, q_ac, c_cr = (1, 1, 1, 1, 1, 1, 1) if s else (
        p.c_ev, p.c_cd, p.c_cn, p.q_cn, p.c_ac, p.q_ac, p.c_cr)
    S_ev = c_ev * T * (Rd + Rv * qv) / Qm * _pos(qvs - qv) * qr
    S_cd = c_cd * (qv - qvs) * qc + c_cn * _pos(qv - qvs) * q_cn
    S_ac = c_ac * _pos(qc - q_ac)
    S_cr = c_cr * qc * qr

    def grad(f):
        return [sp.diff(f, a) for a in X]

    def lap(f):
        return sum(sp.diff(f, a, 2) for a in X)

    def adv(f):
        return sum(u[i] * sp.diff(f, X[i]) for i in range(3))

    divu = sum(sp.diff(u[i], X[i]) for i in range(3))
    gdiv = grad(divu)
    gp = grad(pr)
    d_u = []
    for i in range(3):
        Lu = p.mu * lap(u[i]) + (p.mu + p.lam) * gdiv[i]
        e = (Lu - gp[i]) / (rho * Qm) - adv(u[i]) + qr * Vr * sp.diff(u[i], z) / Qm
        if i == 2:
            e -= p.g
        d_u.append(e)
    d_T = (kap * lap(T) + c1 * qr * Vr * sp.diff(T, z) + Qcp * T * divu - (Q1 * T + Q2) * (S_ev - S_cd)) / Qth - adv(T)
    return {
        "rho_d": -sum(sp.diff(rho * u[i], X[i]) for i in range(3)),
        "u": d_u,
        "T": d_T,
        "q_v": lap(qv) - adv(qv) + S_ev - S_cd,
        "q_c": lap(qc) - adv(qc) + S_cd - S_ac - S_cr,
        "q_r": lap(qr) - adv(qr) + sp.diff(qr * Vr, z) + qr * Vr * sp.diff(rho, z) / rho + S_ac + S_cr - S_ev,
    }


def _compile(expr):
    f = sp.lambdify((x, y, z, t), expr, modules="numpy", cse=True)

    def ev(mesh, tt):
        return np.broadcast_to(np.asarray(f(*mesh, tt), float), mesh[0].shape).copy()

    return ev


@dataclass
class MMSCase:
    """Closed-form fields, the forcing that makes them exact, and a grid sequence."""

    name: str
    fields: dict
    params: PhysParams
    levels: tuple = (16, 32, 64)
    t_end: float = 0.1
    cfl: float = 0.5
    _fns: dict = field(default=None, init=False, repr=False)

    def compile(self) -> None:
        if self._fns is not None:
            return
        rhs = symbolic_rhs(self.fields, self.params)
        exact, forc = {}, {}
        for n in FIELD_NAMES:
            f = self.fields[n]
            if n == "u":
                exact[n] = [_compile(c) for c in f]
                forc[n] = [_compile(sp.diff(c, t) - r) for c, r in zip(f, rhs[n])]
            else:
                exact[n] = _compile(f)
                forc[n] = _compile(sp.diff(f, t) - rhs[n])
        self._fns = {"exact": exact, "forcing": forc}

    def _eval(self, kind: str, grid: Grid, tt: float) -> dict:
        self.compile()
        mesh = grid.mesh
        out = {}
        for n, f in self._fns[kind].items():
            out[n] = np.stack([c(mesh, tt) for c in f]) if n == "u" else f(mesh, tt)
        return out

    def exact_state(self, grid: Grid, tt: float) -> State:
        return State(grid, **self._eval("exact", grid, tt), t=tt)

    def forcing(self, grid: Grid):
        return lambda tt: self._eval("forcing", grid, tt)


@dataclass
class ConvergenceRow:
    n: int
    h: float
    error: float
    order: float | None
    steps: int


#: errors at or below this are round-off and carry no rate information
ORDER_FLOOR = 1e-13


def observed_orders(errors, hs, floor: float = ORDER_FLOOR) -> list[float | None]:
    """Pairwise ``log(e_k / e_{k+1}) / log(h_k / h_{k+1})``; ``None`` where undefined or at round-off."""
    out: list[float | None] = [None]
    for k in range(1, len(errors)):
        e0, e1 = errors[k - 1], errors[k]
        if e0 > floor and e1 > floor:
            out.append(math.log(e0 / e1) / math.log(hs[k - 1] / hs[k]))
        else:
            out.append(None)
    return out


def mms_error(case: MMSCase, n: int, *, scheme: str = "imex2", rho_flux: str = "minmod") -> tuple[float, int]:
    """Max error over all fields at ``case.t_end`` on the ``n``-cube, with ``dt = cfl * h``."""
    g = Grid.cube(n)
    steps = max(1, math.ceil(case.t_end / (case.cfl * g.h) - 1e-9))
    dt = case.t_end / steps
    st = case.exact_state(g, 0.0)
    fo = case.forcing(g)
    for _ in range(steps):
        st, _ = step(st, dt, case.params, scheme=scheme, rho_flux=rho_flux, forcing=fo)
    return st.max_abs_diff(case.exact_state(g, st.t)), steps


def mms_convergence(case: MMSCase, params: PhysParams | None = None, *, levels=None, scheme: str = "imex2",
                    rho_flux: str = "minmod") -> list[ConvergenceRow]:
    """Errors and pairwise observed orders on each grid of the sequence."""
    if params is not None:
        case = MMSCase(case.name, case.fields, params, case.levels, case.t_end, case.cfl)
    levels = tuple(levels or case.levels)
    if len(levels) < 3:
        raise ValueError("a convergence study needs at least three grids")
    errs, steps = zip(*(mms_error(case, n, scheme=scheme, rho_flux=rho_flux) for n in levels))
    hs = [1.0 / n for n in levels]
    return [ConvergenceRow(n, h, e, o, s) for n, h, e, o, s in zip(levels, hs, errs, observed_orders(errs, hs), steps)]


# -- the case library -----------------------------------------------------------

def equilibrium_case(rho_bar: float = 1.0, T_bar: float = 1.0) -> MMSCase:
    zero = sp.Integer(0)
    F = {"rho_d": sp.Float(rho_bar), "u": [zero, zero, zero], "T": sp.Float(T_bar),
         "q_v": zero, "q_c": sp.Integer(1), "q_r": zero}
    return MMSCase("equilibrium", F, PhysParams())


def diffusion_case() -> MMSCase:
    """Rain-water mode decaying as ``exp(-5 pi^2 t)``; no fall speed, no phase changes."""
    zero = sp.Integer(0)
    qr = 1 + sp.Rational(1, 2) * sp.cos(2 * PI * x) * sp.cos(PI * z) * sp.exp(-5 * PI**2 * t)
    F = {"rho_d": sp.Integer(1), "u": [zero, zero, zero], "T": sp.Integer(1),
         "q_v": zero, "q_c": zero, "q_r": qr}
    return MMSCase("diffusion", F, PhysParams(V_r=0.0), t_end=0.02, cfl=0.02)


def _coupled_fields():
    a = 1 + sp.sin(2 * t) / 2
    sz, cz = sp.sin(PI * z), sp.cos(PI * z)
    psi = sp.sin(2 * PI * x) * sp.sin(2 * PI * y) / (8 * PI)
    u = [sp.diff(psi, y) * sz * a, -sp.diff(psi, x) * sz * a, sp.cos(2 * PI * x) * sz * a / 10]
    rho = 1 + (z - sp.sin(2 * PI * z) / (2 * PI)) / 5 * (1 + t)
    return {
        "rho_d": rho,
        "u": u,
        "T": 1 + sp.cos(2 * PI * y) * cz * a / 4,
        "q_v": sp.Rational(1, 10) + sp.cos(2 * PI * x) * cz * a / 20,
        "q_c": sp.Rational(13, 10) + sp.sin(2 * PI * y) * cz * a / 5,
        "q_r": sp.Rational(1, 5) + sp.cos(2 * PI * (x + y)) * cz * a / 10,
    }


def coupled_case() -> MMSCase:
    """All terms active in the simplified regime.

    With ``q_vs = 0.3``, ``q_v < q_vs`` and ``q_c > 1`` everywhere, so every
    switch stays on one side: evaporation, condensation (linear part),
    auto-conversion and collection are all smooth and non-zero.
    """
    p = PhysParams(q_vs_mode="constant", q_vs=0.3, V_r_mode="profile", V_r=1.0, V_r_amp=0.3, g=0.5)
    return MMSCase("coupled", _coupled_fields(), p)


def coupled_general_case() -> MMSCase:
    """The coupled fields with the general thermodynamic coefficients."""
    p = PhysParams(simplified_mode=False, q_vs_mode="constant", q_vs=0.3, V_r_mode="profile", V_r=1.0,
                   V_r_amp=0.3, g=0.5, kappa=0.8, lam=0.3, c_ev=0.7, c_cd=1.2, c_cn=0.9, c_ac=1.1, c_cr=0.8)
    return MMSCase("coupled_general", _coupled_fields(), p)


CASES = {
    "equilibrium": equilibrium_case,
    "diffusion": diffusion_case,
    "coupled": coupled_case,
    "coupled_general": coupled_general_case,
}
