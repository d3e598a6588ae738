"""The system in Lagrangian coordinates, as an executable cross-check.

Labels ``y`` live on the same cell-centred grid as the Eulerian fields. The
flow map is stored through its displacement ``D`` (``X = y + D``), its
gradient ``gradX[i, l] = dX_i / dy_l`` and the inverse ``Z = gradX^{-1}``,
so that ``d/dx_j = sum_l Z[l, j] d/dy_l``.

Two right-hand-side variants are provided. :func:`transformed_sources`
works with unshifted tilde variables and initial-data coefficients;
:func:`shifted_sources` with :func:`shifted_operator` is the form
linearised around the constant equilibrium.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import grid as G
from .dynamics import FIELD_BCS, State, Tendencies, rain_velocity
from .errors import DomainError, MapDegenerate
from .grid import BC, DIRICHLET0, EXTRAP, NEUMANN0, Grid
from .microphysics import moisture_source_vector, positive_part, rates
from .params import PhysParams
from .thermo import saturation_mixing_ratio

MAX_DEVIATION = 0.5
SCALARS = ("T", "q_v", "q_c", "q_r")


def _inv3(M: np.ndarray) -> np.ndarray:
    A = np.moveaxis(M, (0, 1), (-2, -1))
    return np.ascontiguousarray(np.moveaxis(np.linalg.inv(A), (-2, -1), (0, 1)))


def _matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.einsum("ik...,kj...->ij...", A, B)


def deviation_norm(gradX: np.ndarray) -> float:
    """``sup_y |gradX - Id|`` with the maximum-row-sum matrix norm."""
    dev = gradX - np.eye(3).reshape(3, 3, *([1] * (gradX.ndim - 2)))
    return float(np.max(np.sum(np.abs(dev), axis=1)))


@dataclass(frozen=True)
class LagrangianMap:
    grid: Grid
    D: np.ndarray
    gradX: np.ndarray
    Z: np.ndarray
    deviation: float
    valid: bool

    @classmethod
    def identity(cls, grid: Grid) -> "LagrangianMap":
        I = np.broadcast_to(np.eye(3).reshape(3, 3, 1, 1, 1), (3, 3) + grid.shape).copy()
        return cls(grid, grid.zeros(3), I, I.copy(), 0.0, True)

    @classmethod
    def from_displacement(cls, grid: Grid, D: np.ndarray) -> "LagrangianMap":
        """Build the map from a no-slip displacement field (odd ghosts at the walls)."""
        gradX = G.jacobian(D, grid, DIRICHLET0)
        for i in range(3):
            gradX[i, i] += 1.0
        dev = deviation_norm(gradX)
        valid = dev <= MAX_DEVIATION
        Z = _inv3(gradX) if valid else np.full_like(gradX, np.nan)
        return cls(grid, D, gradX, Z, dev, valid)

    @property
    def X(self) -> np.ndarray:
        return np.stack(self.grid.mesh) + self.D

    def identity_residual(self) -> float:
        """``max |Z gradX - Id|`` over all cells."""
        I = np.eye(3).reshape(3, 3, 1, 1, 1)
        return float(np.max(np.abs(_matmul(self.Z, self.gradX) - I)))


def advance_map(m: LagrangianMap, u_tilde: np.ndarray, dt: float, u_tilde_new: np.ndarray | None = None) -> LagrangianMap:
    """``X += dt/2 (u^n + u^{n+1})`` in label coordinates.

    Without ``u_tilde_new`` the rectangle rule with ``u_tilde`` is used.
    Raises :class:`MapDegenerate` once ``|gradX - Id| > 1/2``.
    """
    if not m.valid:
        raise MapDegenerate(f"map already degenerate (deviation {m.deviation:.3g})")
    end = u_tilde if u_tilde_new is None else u_tilde_new
    new = LagrangianMap.from_displacement(m.grid, m.D + 0.5 * dt * (u_tilde + end))
    if not new.valid:
        raise MapDegenerate(f"deviation {new.deviation:.3g} exceeds {MAX_DEVIATION}")
    return new


# -- derivatives of Z -----------------------------------------------------------

def label_derivative(F: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Centred derivative along ``axis``; periodic horizontally, one-sided second order at the walls."""
    h = grid.spacing[axis]
    ax = F.ndim - 3 + axis
    if axis < 2:
        return (np.roll(F, -1, axis=ax) - np.roll(F, 1, axis=ax)) / (2 * h)
    return np.gradient(F, h, axis=ax, edge_order=2)


def z_derivatives(Z: np.ndarray, grid: Grid) -> np.ndarray:
    """``dZ[k] = dZ / dy_k``, shape ``(3, 3, 3, nx, ny, nz)``."""
    return np.stack([label_derivative(Z, grid, k) for k in range(3)])


def z_derivatives_from_map(m: LagrangianMap) -> np.ndarray:
    """``dZ[k] = -Z (d gradX / dy_k) Z``, the identity-based alternative."""
    return np.stack([-_matmul(_matmul(m.Z, label_derivative(m.gradX, m.grid, k)), m.Z) for k in range(3)])


# -- transformed operators ------------------------------------------------------

def _offdiag_sum(H: np.ndarray, M: np.ndarray) -> np.ndarray:
    return (H[0, 1] * M[0, 1] + H[1, 0] * M[1, 0]) + (H[0, 2] * M[0, 2] + H[2, 0] * M[2, 0]) + (H[1, 2] * M[1, 2] + H[2, 1] * M[2, 1])


def transformed_laplacian(f: np.ndarray, Z: np.ndarray, grid: Grid, bc: BC = NEUMANN0, dZ: np.ndarray | None = None) -> np.ndarray:
    """``L1 f = sum f_{kl} Z_kj Z_lj + sum f_l (dZ_lj/dy_k) Z_kj``.

    The diagonal second derivatives use the compact stencil and are summed
    in the same order as :func:`grid.laplacian`, so ``Z = Id`` reproduces
    the Laplacian bit for bit.
    """
    if f.ndim == 4:
        return np.stack([transformed_laplacian(fi, Z, grid, bc, dZ) for fi in f])
    if dZ is None:
        dZ = z_derivatives(Z, grid)
    H = G.hessian(f, grid, bc)
    gf = G.grad(f, grid, bc)
    M = np.einsum("kj...,lj...->kl...", Z, Z)
    out = (H[0, 0] * M[0, 0] + H[1, 1] * M[1, 1]) + H[2, 2] * M[2, 2]
    out = out + _offdiag_sum(H, M)
    return out + np.einsum("l...,klj...,kj...->...", gf, dZ, Z)


def transformed_laplacian_difference(f: np.ndarray, Z: np.ndarray, grid: Grid, bc: BC = NEUMANN0, dZ: np.ndarray | None = None) -> np.ndarray:
    """``(L1 - Laplacian) f`` in the three-sum form with ``Z - Id`` factors."""
    if f.ndim == 4:
        return np.stack([transformed_laplacian_difference(fi, Z, grid, bc, dZ) for fi in f])
    if dZ is None:
        dZ = z_derivatives(Z, grid)
    I = np.eye(3).reshape(3, 3, 1, 1, 1)
    H = G.hessian(f, grid, bc)
    gf = G.grad(f, grid, bc)
    t1 = np.einsum("kl...,kj...,lj...->...", H, Z - I, Z)
    t2 = np.einsum("kl...,lk...->...", H, Z - I)
    t3 = np.einsum("l...,klj...,kj...->...", gf, dZ, Z)
    return t1 + t2 + t3


def transformed_divergence(u: np.ndarray, Z: np.ndarray, grid: Grid) -> np.ndarray:
    """``div_x u = sum_{j,k} Z_kj du_j/dy_k`` (equal to ``grad u : Z^T``)."""
    J = G.jacobian(u, grid, DIRICHLET0)
    out = (J[0, 0] * Z[0, 0] + J[1, 1] * Z[1, 1]) + J[2, 2] * Z[2, 2]
    return out + _offdiag_sum(np.swapaxes(J, 0, 1), Z)


def transformed_gradient(f: np.ndarray, Z: np.ndarray, grid: Grid, bc: BC = NEUMANN0) -> np.ndarray:
    """``(Z^T grad_y f)_i = sum_l Z_li df/dy_l``, accumulated so ``Z = Id`` is exact."""
    gf = G.grad(f, grid, bc)
    out = np.empty_like(gf)
    for i in range(3):
        others = [l for l in range(3) if l != i]
        out[i] = gf[i] * Z[i, i] + (gf[others[0]] * Z[others[0], i] + gf[others[1]] * Z[others[1], i])
    return out


def transformed_divgrad(u: np.ndarray, Z: np.ndarray, grid: Grid) -> np.ndarray:
    """``L2 u = Z^T grad_y (div_x u)``, the composite form.

    The inner divergence gets mirror ghosts, exactly as in :func:`grid.lame`,
    so ``Z = Id`` gives ``grad(div u)`` bit for bit.
    """
    return transformed_gradient(transformed_divergence(u, Z, grid), Z, grid, NEUMANN0)


def transformed_divgrad_expanded(u: np.ndarray, Z: np.ndarray, grid: Grid, dZ: np.ndarray | None = None) -> np.ndarray:
    """``L2 u`` from the expanded second-derivative sum (second-order cross-check)."""
    if dZ is None:
        dZ = z_derivatives(Z, grid)
    H = np.stack([G.hessian(u[j], grid, DIRICHLET0) for j in range(3)])  # H[j, k, l]
    J = G.jacobian(u, grid, DIRICHLET0)  # J[j, k] = du_j/dy_k
    t1 = np.einsum("jkl...,kj...,li...->i...", H, Z, Z)
    t2 = np.einsum("jk...,lkj...,li...->i...", J, dZ, Z)
    return t1 + t2


def transformed_divgrad_difference(u: np.ndarray, Z: np.ndarray, grid: Grid, dZ: np.ndarray | None = None) -> np.ndarray:
    """``(L2 - grad div) u`` in the three-sum form with ``Z - Id`` factors."""
    if dZ is None:
        dZ = z_derivatives(Z, grid)
    I = np.eye(3).reshape(3, 3, 1, 1, 1)
    H = np.stack([G.hessian(u[j], grid, DIRICHLET0) for j in range(3)])
    J = G.jacobian(u, grid, DIRICHLET0)
    t1 = np.einsum("jkl...,kj...,li...->i...", H, Z - I, Z)
    t2 = np.einsum("jjl...,li...->i...", H, Z - I)
    t3 = np.einsum("jk...,lkj...,li...->i...", J, dZ, Z)
    return t1 + t2 + t3


# -- boundary terms -------------------------------------------------------------

def _wall_trace(F: np.ndarray, upper: bool) -> np.ndarray:
    if upper:
        return (15 * F[..., -1] - 10 * F[..., -2] + 3 * F[..., -3]) / 8
    return (15 * F[..., 0] - 10 * F[..., 1] + 3 * F[..., 2]) / 8


def _wall_normal_derivative(f: np.ndarray, grid: Grid, upper: bool) -> np.ndarray:
    if upper:
        return (2 * f[..., -1] - 3 * f[..., -2] + f[..., -3]) / grid.hz
    return (-2 * f[..., 0] + 3 * f[..., 1] - f[..., 2]) / grid.hz


def boundary_term(f: np.ndarray, Z: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """``B = (1 - Z33) df/dy3 - Z13 df/dy1 - Z23 df/dy2`` on the upper and lower wall.

    Wall traces are quadratic extrapolations of the cell values; the normal
    derivative is the second-order one-sided difference.
    """
    out = []
    for upper in (True, False):
        fw = _wall_trace(f, upper)
        Zw = _wall_trace(Z, upper)
        d1 = (np.roll(fw, -1, axis=0) - np.roll(fw, 1, axis=0)) / (2 * grid.hx)
        d2 = (np.roll(fw, -1, axis=1) - np.roll(fw, 1, axis=1)) / (2 * grid.hy)
        d3 = _wall_normal_derivative(f, grid, upper)
        out.append((1 - Zw[2, 2]) * d3 - Zw[0, 2] * d1 - Zw[1, 2] * d2)
    return out[0], out[1]


def transformed_boundary(state_tilde: State, Z: np.ndarray) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """``(B_upper, B_lower)`` for ``T`` and the three mixing ratios."""
    g = state_tilde.grid
    return {n: boundary_term(getattr(state_tilde, n), Z, g) for n in SCALARS}


def boundary_bcs(B: dict[str, tuple[np.ndarray, np.ndarray]]) -> dict[str, BC]:
    return {n: BC("neumann", g_u=bu, g_l=bl) for n, (bu, bl) in B.items()}


# -- transformed right-hand sides -----------------------------------------------

def _require_simplified(params: PhysParams) -> None:
    if not params.simplified_mode:
        raise ValueError("the Lagrangian form is implemented for the simplified constants only")


def _dx3(f: np.ndarray, Z: np.ndarray, grid: Grid, bc: BC) -> np.ndarray:
    """``df/dx_3 = sum_l df/dy_l Z_l3``."""
    return transformed_gradient(f, Z, grid, bc)[2]


def transformed_sources(st: State, Z: np.ndarray, params: PhysParams, rho_d0, Q_m0, *,
                        dZ=None, bcs=None, dudt=None, dTdt=None, V_r=None) -> dict[str, np.ndarray]:
    """``G_d, G_u, G_T, G_v, G_c, G_r`` for the tilde state ``st``.

    ``rho_d0`` and ``Q_m0`` are the frozen initial coefficients, ``dudt`` and
    ``dTdt`` the time derivatives appearing in the coefficient corrections
    (zero when omitted), ``bcs`` the Neumann data of the scalars (computed
    from :func:`transformed_boundary` when omitted) and ``V_r`` the fall speed
    at the particle positions.
    """
    _require_simplified(params)
    g = st.grid
    rho, u, T = st.rho_d, st.u, st.T
    qv, qc, qr = st.q_v, st.q_c, st.q_r
    Q = 1.0 + qv + qc + qr
    if np.any(Q <= 0):
        raise DomainError("1 + q_v + q_c + q_r must be positive")
    if dZ is None:
        dZ = z_derivatives(Z, g)
    if bcs is None:
        bcs = boundary_bcs(transformed_boundary(st, Z))
    if V_r is None:
        V_r = rain_velocity(g, params)
    if dudt is None:
        dudt = np.zeros_like(u)
    if dTdt is None:
        dTdt = np.zeros_like(T)
    mu, lam = params.mu, params.lam
    I = np.eye(3).reshape(3, 3, 1, 1, 1)

    J = G.jacobian(u, g, DIRICHLET0)
    div_u = (J[0, 0] + J[1, 1]) + J[2, 2]
    div_x = transformed_divergence(u, Z, g)
    colon_dev = np.einsum("il...,li...->...", J, Z - I)

    p = rho * (1.0 + qv) * T
    q_vs = saturation_mixing_ratio(p, T, params)
    mr = rates(st, q_vs, params)
    src_v, src_c, src_r = moisture_source_vector(mr)

    G_d = -(rho - rho_d0) * div_u - rho * colon_dev

    c0 = 1.0 / (rho_d0 * Q_m0)
    L1u = transformed_laplacian(u, Z, g, DIRICHLET0, dZ) - G.laplacian(u, g, DIRICHLET0)
    L2u = transformed_divgrad(u, Z, g) - G.grad(G.div(u, g, DIRICHLET0), g, NEUMANN0)
    press = (
        T * (1.0 + qv) * transformed_gradient(rho, Z, g, EXTRAP)
        + rho * T * transformed_gradient(qv, Z, g, bcs["q_v"])
        + rho * (1.0 + qv) * transformed_gradient(T, Z, g, bcs["T"])
    )
    du_dx3 = np.einsum("il...,l...->i...", J, Z[:, 2])
    body = mu * L1u + (mu + lam) * L2u - press + rho * qr * V_r * du_dx3
    if params.g:
        body[2] -= rho * Q * params.g
    G_u = (1.0 - rho * Q * c0) * dudt + c0 * body

    def l1_minus_lap(name):
        f = getattr(st, name)
        return transformed_laplacian(f, Z, g, bcs[name], dZ) - G.laplacian(f, g, bcs[name])

    G_T = (1.0 - Q / Q_m0) * dTdt + (1.0 / Q_m0) * (
        l1_minus_lap("T")
        + qr * V_r * _dx3(T, Z, g, bcs["T"])
        - (1.0 + qv) * T * div_x
        + (1.0 + T) * (mr.S_cd - mr.S_ev)
    )
    G_v = l1_minus_lap("q_v") + src_v
    G_c = l1_minus_lap("q_c") + src_c
    G_r = (
        l1_minus_lap("q_r") + src_r
        + V_r * _dx3(qr, Z, g, bcs["q_r"])
        + qr * _dx3(V_r, Z, g, NEUMANN0)
        + qr * V_r * _dx3(rho, Z, g, EXTRAP) / rho
    )
    return {"rho_d": G_d, "u": G_u, "T": G_T, "q_v": G_v, "q_c": G_c, "q_r": G_r}


def shifted_variables(state: State, rho_bar: float, T_bar: float) -> State:
    """``(rho_d - rho_bar, u, T - T_bar, q_v, q_c - 1, q_r)``."""
    return State(state.grid, state.rho_d - rho_bar, state.u, state.T - T_bar, state.q_v, state.q_c - 1.0, state.q_r, t=state.t)


def unshifted_variables(z: State, rho_bar: float, T_bar: float) -> State:
    return State(z.grid, z.rho_d + rho_bar, z.u, z.T + T_bar, z.q_v, z.q_c + 1.0, z.q_r, t=z.t)


def shifted_operator(z: State, params: PhysParams, rho_bar: float, T_bar: float, *, bcs=None,
                     sedimentation: bool = False, V_r=None) -> dict[str, np.ndarray]:
    """Action of the block operator ``A`` linearised at ``(rho_bar, 0, T_bar, 0, 1, 0)``.

    ``sedimentation=True`` adds the linear fall term ``d_z(V_r q_r)`` to the
    ``q_r`` row; it is linear in the perturbation but kept with the sources
    in the shifted system.
    """
    g = z.grid
    bcs = bcs or {n: NEUMANN0 for n in SCALARS}
    div_u = G.div(z.u, g, DIRICHLET0)
    lap = {n: G.laplacian(getattr(z, n), g, bcs[n]) for n in SCALARS}
    Az = {
        "rho_d": -rho_bar * div_u,
        "u": (
            -T_bar / (2 * rho_bar) * G.grad(z.rho_d, g, EXTRAP)
            + G.lame(z.u, g, params.mu, params.lam) / (2 * rho_bar)
            - 0.5 * G.grad(z.T, g, bcs["T"])
            - 0.5 * T_bar * G.grad(z.q_v, g, bcs["q_v"])
        ),
        "T": -0.5 * T_bar * div_u + 0.5 * lap["T"] + 0.5 * (T_bar + 1.0) * z.q_v,
        "q_v": lap["q_v"] - z.q_v,
        "q_c": z.q_v + lap["q_c"] - z.q_r,
        "q_r": lap["q_r"] + z.q_r,
    }
    if sedimentation:
        if V_r is None:
            V_r = rain_velocity(g, params)
        Az["q_r"] = Az["q_r"] + G.d1(G.pad(V_r * z.q_r, g, bcs["q_r"]), g, 2)
    return Az


def shifted_sources(z: State, Z: np.ndarray, params: PhysParams, rho_bar: float, T_bar: float, *,
                    dZ=None, bcs=None, dudt=None, dTdt=None, V_r=None) -> dict[str, np.ndarray]:
    """Sources of the equilibrium-shifted Lagrangian system.

    Requires ``q_vs = 0`` and no gravity. Each group of terms below mirrors
    one line of the shifted source formulas.
    """
    _require_simplified(params)
    if params.q_vs_mode != "zero" and not (params.q_vs_mode == "constant" and params.q_vs == 0):
        raise ValueError("the shifted system assumes q_vs = 0")
    if params.g:
        raise ValueError("the shifted system assumes g = 0")
    g = z.grid
    rt, u, Tt = z.rho_d, z.u, z.T
    qv, qc, qr = z.q_v, z.q_c, z.q_r
    rb, Tb = rho_bar, T_bar
    if dZ is None:
        dZ = z_derivatives(Z, g)
    if bcs is None:
        bcs = boundary_bcs(transformed_boundary(z, Z))
    if V_r is None:
        V_r = rain_velocity(g, params)
    if dudt is None:
        dudt = np.zeros_like(u)
    if dTdt is None:
        dTdt = np.zeros_like(Tt)
    mu, lam = params.mu, params.lam
    I = np.eye(3).reshape(3, 3, 1, 1, 1)
    s = qv + qc + qr

    J = G.jacobian(u, g, DIRICHLET0)
    div_u = (J[0, 0] + J[1, 1]) + J[2, 2]
    div_x = transformed_divergence(u, Z, g)
    colon_dev = np.einsum("il...,li...->...", J, Z - I)

    def ZTg(f, bc):
        return transformed_gradient(f, Z, g, bc)

    def ZTg_dev(f, bc):
        gf = G.grad(f, g, bc)
        return np.einsum("li...,l...->i...", Z - I, gf)

    G_d = -rt * div_u - (rt + rb) * colon_dev

    L1u = transformed_laplacian(u, Z, g, DIRICHLET0, dZ) - G.laplacian(u, g, DIRICHLET0)
    L2u = transformed_divgrad(u, Z, g) - G.grad(G.div(u, g, DIRICHLET0), g, NEUMANN0)
    gr, bq, bT = EXTRAP, bcs["q_v"], bcs["T"]
    G_u = (
        -(rt / rb) * dudt - (s * rt / (2 * rb)) * dudt - (s / 2) * dudt
        + mu / (2 * rb) * L1u + (mu + lam) / (2 * rb) * L2u
        - 1.0 / (2 * rb) * ((Tt + Tb) * ZTg(rt, gr) * qv + Tt * ZTg(rt, gr) + Tb * ZTg_dev(rt, gr))
        - 1.0 / (2 * rb) * ((Tt + Tb) * rt * ZTg(qv, bq) + rb * Tt * ZTg(qv, bq) + Tb * rb * ZTg_dev(qv, bq))
        - 1.0 / (2 * rb) * ((rt + rb) * qv * ZTg(Tt, bT) + rt * ZTg(Tt, bT) + rb * ZTg_dev(Tt, bT))
        # fall term enters with a plus sign, as in the unshifted momentum balance
        + (rt + rb) / (2 * rb) * qr * V_r * np.einsum("il...,l...->i...", J, Z[:, 2])
    )

    def l1_minus_lap(f, bc):
        return transformed_laplacian(f, Z, g, bc, dZ) - G.laplacian(f, g, bc)

    frac = (1.0 + qv) / (2.0 + s)
    ev = frac * positive_part(-qv) * qr
    cd = qv * qc + positive_part(qv)
    G_T = -(s / 2) * dTdt + 0.5 * (
        l1_minus_lap(Tt, bT)
        + qr * V_r * ZTg(Tt, bT)[2]
        - (Tt + qv * (Tt + Tb)) * div_x
        - Tb * colon_dev
        - (Tt + Tb + 1.0) * (Tt + Tb) * ev
        + (Tb + 1.0) * cd
        # T~ q_v: the product of the temperature shift with the linear condensation term
        + Tt * (qv + cd)
    )
    G_v = l1_minus_lap(qv, bcs["q_v"]) + (Tt + Tb) * ev - qv * qc - positive_part(qv)
    G_c = l1_minus_lap(qc, bcs["q_c"]) + qv * qc + positive_part(qv) - positive_part(qc) - qc * qr
    G_r = (
        l1_minus_lap(qr, bcs["q_r"]) + positive_part(qc) + qc * qr - (Tt + Tb) * ev
        + V_r * ZTg(qr, bcs["q_r"])[2]
        + qr * ZTg(V_r, NEUMANN0)[2]
        + qr * V_r * ZTg(rt, gr)[2] / (rt + rb)
    )
    return {"rho_d": G_d, "u": G_u, "T": G_T, "q_v": G_v, "q_c": G_c, "q_r": G_r}


# -- Lagrangian solver ----------------------------------------------------------

class LagrangianSolver:
    """Integrates the tilde system with the Eulerian IMEX stepper.

    Left-hand sides use the coefficients frozen at the initial data; all
    ``G`` and boundary terms are explicit and the time derivatives inside
    ``G`` are lagged by one step.
    """

    def __init__(self, state0: State, params: PhysParams):
        _require_simplified(params)
        self.params = params
        self.grid = state0.grid
        self.state = state0
        self.rho0 = state0.rho_d.copy()
        self.Q0 = 1.0 + state0.q_v + state0.q_c + state0.q_r
        self.c_u = 1.0 / (self.rho0 * self.Q0)
        self.c_T = 1.0 / self.Q0
        self.coeff = {"u": float(self.c_u.max()), "T": float(self.c_T.max()), "q_v": 1.0, "q_c": 1.0, "q_r": 1.0}
        self.map = LagrangianMap.identity(self.grid)
        self.prev: State | None = None
        self.dt_prev: float | None = None

    def fall_speed(self) -> np.ndarray:
        return rain_velocity(self.grid, self.params, z=self.map.X[2])

    def tendency(self, st: State) -> Tendencies:
        g, p = self.grid, self.params
        Z = self.map.Z
        dZ = z_derivatives(Z, g)
        bcs = boundary_bcs(transformed_boundary(st, Z))
        if self.prev is None:
            dudt, dTdt = None, None
        else:
            dudt = (self.state.u - self.prev.u) / self.dt_prev
            dTdt = (self.state.T - self.prev.T) / self.dt_prev
        Gs = transformed_sources(st, Z, p, self.rho0, self.Q0, dZ=dZ, bcs=bcs, dudt=dudt, dTdt=dTdt, V_r=self.fall_speed())
        a = self.coeff
        Lu = G.lame(st.u, g, p.mu, p.lam)
        lap = {n: G.laplacian(getattr(st, n), g, NEUMANN0) for n in SCALARS}
        nbs = {n: G.neumann_boundary_source(g, bcs[n]) for n in SCALARS}
        explicit = {
            "rho_d": -self.rho0 * G.div(st.u, g, DIRICHLET0) + Gs["rho_d"],
            "u": (self.c_u - a["u"]) * Lu + Gs["u"],
            "T": (self.c_T - a["T"]) * lap["T"] + self.c_T * nbs["T"] + Gs["T"],
        }
        for n in ("q_v", "q_c", "q_r"):
            explicit[n] = nbs[n] + Gs[n]
        implicit = {"u": a["u"] * Lu, **{n: a[n] * lap[n] for n in SCALARS}}
        return Tendencies(implicit=implicit, explicit=explicit, coeff=dict(a))

    def step(self, dt: float, scheme: str = "imex1"):
        from .timestepper import step as imex_step

        new, rep = imex_step(self.state, dt, self.params, scheme=scheme, tendency=self.tendency)
        self.map = advance_map(self.map, self.state.u, dt, new.u)
        self.prev, self.dt_prev = self.state, dt
        self.state = new
        return new, rep

    def pullback(self) -> State:
        return pullback(self.state, self.map)


# -- pull-back to Eulerian points -----------------------------------------------

def _trilinear(fp: np.ndarray, w: int, pts: np.ndarray, grid: Grid) -> np.ndarray:
    """Trilinear interpolation of ghost-padded cell data at points ``pts`` (shape ``(3, N)``)."""
    idx, wts = [], []
    for a in range(3):
        n, h = grid.shape[a], grid.spacing[a]
        p = np.mod(pts[a], 1.0) if a < 2 else np.clip(pts[a], 0.0, 1.0)
        s = p / h - 0.5 + w
        i0 = np.clip(np.floor(s).astype(int), 0, n + 2 * w - 2)
        idx.append(i0)
        wts.append(s - i0)
    (i, j, k), (tx, ty, tz) = idx, wts
    out = 0.0
    for di, wx in ((0, 1 - tx), (1, tx)):
        for dj, wy in ((0, 1 - ty), (1, ty)):
            for dk, wz in ((0, 1 - tz), (1, tz)):
                out = out + fp[..., i + di, j + dj, k + dk] * (wx * wy * wz)
    return out


def invert_map(m: LagrangianMap, pts: np.ndarray, *, max_iter: int = 5, tol: float = 1e-12) -> np.ndarray:
    """Labels ``y`` with ``X(y) = x`` for each column of ``pts`` by Newton's method."""
    g = m.grid
    Dp = G.pad(m.D, g, DIRICHLET0)
    Zp = G.pad(m.Z.reshape((9,) + g.shape), g, EXTRAP)
    y = pts.copy()
    for _ in range(max_iter):
        r = y + _trilinear(Dp, 1, y, g) - pts
        if np.max(np.abs(r)) <= tol:
            break
        Zy = _trilinear(Zp, 1, y, g).reshape((3, 3) + y.shape[1:])
        y = y - np.einsum("ij...,j...->i...", Zy, r)
    return y


def pullback(st: State, m: LagrangianMap) -> State:
    """Eulerian fields at the cell centres: ``phi(x) = phi_tilde(Y(x))``."""
    g = st.grid
    pts = np.stack([a.ravel() for a in g.mesh])
    y = invert_map(m, pts)
    out = {}
    for n, f in st.fields().items():
        fp = G.pad(f, g, FIELD_BCS[n])
        out[n] = _trilinear(fp, 1, y, g).reshape(f.shape)
    return State(g, **out, t=st.t)


# -- equivalence check ----------------------------------------------------------

def default_steps(grid: Grid, t_end: float, c: float = 0.8) -> int:
    """Number of steps with ``dt <= c h^2``."""
    return max(1, math.ceil(t_end / (c * grid.h ** 2) - 1e-9))


def equivalence_check(state0: State, t_end: float, params: PhysParams, grid: Grid | None = None, *,
                      steps: int | None = None, scheme: str = "imex1", rho_flux: str = "centered") -> float:
    """Max discrepancy between the Eulerian solution and the pulled-back Lagrangian one at ``t_end``."""
    from .timestepper import step as imex_step

    grid = grid or state0.grid
    if grid != state0.grid:
        raise ValueError("state0 lives on a different grid")
    if steps is None:
        steps = default_steps(grid, t_end)
    dt = t_end / steps
    eul = state0
    lag = LagrangianSolver(state0, params)
    for _ in range(steps):
        eul, _ = imex_step(eul, dt, params, scheme=scheme, rho_flux=rho_flux)
        lag.step(dt, scheme)
    return eul.max_abs_diff(lag.pullback())


def run_lagrangian(state0: State, cfg, params: PhysParams, *, on_snapshot=None):
    """Integrate the tilde system to ``cfg.t_end``; snapshots receive the pulled-back state.

    Mirrors :func:`timestepper.run`; the map is checked after every step and
    :class:`MapDegenerate` ends the run.
    """
    from .dynamics import perturbation_norm
    from .timestepper import auto_dt

    solver = LagrangianSolver(state0, params)
    series = []
    t_end = float(cfg.t_end)
    if not t_end > state0.t:
        return state0, series
    if on_snapshot is not None:
        on_snapshot(0, state0)
    k = 0
    while solver.state.t < t_end * (1 - 1e-13):
        st = solver.state
        dt = auto_dt(st, params, cfg.cfl) if cfg.dt == "auto" else float(cfg.dt)
        _, rep = solver.step(min(dt, t_end - st.t), cfg.scheme)
        rep.perturbation_norm = perturbation_norm(solver.state, cfg.rho_bar, cfg.T_bar)
        series.append(rep)
        k += 1
        if on_snapshot is not None and cfg.snapshot_every and k % cfg.snapshot_every == 0:
            on_snapshot(k, solver.pullback())
    final = solver.pullback()
    if on_snapshot is not None and not (cfg.snapshot_every and k % cfg.snapshot_every == 0):
        on_snapshot(k, final)
    return final, series
