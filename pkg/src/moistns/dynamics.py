"""Eulerian state, boundary handling and right-hand side of the moist system.

Each prognostic equation is written as

    d phi / dt = a * Lambda(phi) + E(phi)

where ``Lambda`` is a constant-coefficient diffusion operator (Lame for the
velocity, the Neumann Laplacian for ``T`` and the mixing ratios), ``a`` a
frozen scalar and ``E`` everything else. The stepper treats the first part
implicitly. ``rho_d`` has no implicit part.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import grid as G
from .errors import DomainError
from .grid import BC, DIRICHLET0, EXTRAP, NEUMANN0, Grid
from .microphysics import moisture_source_vector, rates
from .params import PhysParams, RunConfig
from .thermo import coeffs, gas_constants, saturation_mixing_ratio

FIELD_NAMES = ("rho_d", "u", "T", "q_v", "q_c", "q_r")
SNAPSHOT_ORDER = ("rho_d", "u1", "u2", "u3", "T", "q_v", "q_c", "q_r")
IMPLICIT_FIELDS = ("u", "T", "q_v", "q_c", "q_r")
FIELD_BCS = {"rho_d": EXTRAP, "u": DIRICHLET0, "T": NEUMANN0, "q_v": NEUMANN0, "q_c": NEUMANN0, "q_r": NEUMANN0}


@dataclass
class State:
    """Prognostic fields on one grid. ``u`` has shape ``(3, nx, ny, nz)``."""

    grid: Grid
    rho_d: np.ndarray
    u: np.ndarray
    T: np.ndarray
    q_v: np.ndarray
    q_c: np.ndarray
    q_r: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in FIELD_NAMES:
            arr = np.asarray(getattr(self, name), dtype=float)
            want = (3,) + self.grid.shape if name == "u" else self.grid.shape
            if arr.shape != want:
                raise ValueError(f"{name} has shape {arr.shape}, expected {want}")
            object.__setattr__(self, name, arr)

    def fields(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in FIELD_NAMES}

    def copy(self) -> "State":
        return State(self.grid, **{n: a.copy() for n, a in self.fields().items()}, t=self.t)

    def replace(self, **changes) -> "State":
        return dataclasses.replace(self, **changes)

    def updated(self, incr: dict[str, np.ndarray], scale: float = 1.0, t: float | None = None) -> "State":
        """New state ``self + scale * incr`` (missing keys are left as is)."""
        new = {n: a + scale * incr[n] if n in incr else a for n, a in self.fields().items()}
        return State(self.grid, **new, t=self.t if t is None else t)

    def arrays(self) -> list[np.ndarray]:
        """The eight scalar arrays in snapshot order."""
        return [self.rho_d, self.u[0], self.u[1], self.u[2], self.T, self.q_v, self.q_c, self.q_r]

    @classmethod
    def from_arrays(cls, grid: Grid, arrays, t: float = 0.0) -> "State":
        a = [np.asarray(x, float).reshape(grid.shape) for x in arrays]
        if len(a) != 8:
            raise ValueError("expected 8 arrays")
        return cls(grid, a[0], np.stack(a[1:4]), a[4], a[5], a[6], a[7], t=t)

    @classmethod
    def uniform(cls, grid: Grid, rho_d=1.0, T=1.0, q_v=0.0, q_c=1.0, q_r=0.0, u=(0.0, 0.0, 0.0)):
        U = np.stack([grid.full(c) for c in u])
        return cls(grid, grid.full(rho_d), U, grid.full(T), grid.full(q_v), grid.full(q_c), grid.full(q_r))

    def min_q(self) -> float:
        return float(min(self.q_v.min(), self.q_c.min(), self.q_r.min()))

    def max_abs_diff(self, other: "State") -> float:
        return float(max(np.max(np.abs(a - b)) for a, b in zip(self.arrays(), other.arrays())))


def equilibrium_state(grid: Grid, rho_bar: float = 1.0, T_bar: float = 1.0) -> State:
    """The constant steady state ``(rho_bar, 0, T_bar, 0, 1, 0)``."""
    return State.uniform(grid, rho_d=rho_bar, T=T_bar, q_v=0.0, q_c=1.0, q_r=0.0)


def bump_fields(grid: Grid) -> dict[str, np.ndarray]:
    """Smooth BC-compatible perturbation shapes with sup norm one over all fields.

    ``q_v`` and ``q_r`` shapes are strictly positive so that small multiples
    keep the mixing ratios admissible.
    """
    x, y, z = grid.mesh
    tp = 2 * np.pi
    s = np.sin(np.pi * z)
    return {
        "rho_d": 0.5 * np.cos(tp * x) * np.sin(tp * y) * np.cos(np.pi * z),
        "u": np.stack([
            np.sin(tp * y) * s,
            np.cos(tp * x) * s,
            np.sin(tp * x) * np.cos(tp * y) * s,
        ]),
        "T": np.cos(tp * x) * np.cos(np.pi * z),
        "q_v": (2.0 + np.cos(tp * x) * np.cos(tp * y) * np.cos(np.pi * z)) / 3.0,
        "q_c": 0.5 * np.cos(tp * y) * np.cos(np.pi * z),
        "q_r": (2.0 + np.sin(tp * x) * np.cos(np.pi * z)) / 3.0,
    }


def velocity_shape(grid: Grid) -> np.ndarray:
    """Smooth no-slip velocity field with unit amplitude and non-zero divergence."""
    x, y, z = grid.mesh
    tp = 2 * np.pi
    s = np.sin(np.pi * z)
    return np.stack([np.sin(tp * x) * s, np.sin(tp * y) * s * np.cos(tp * x), 0.5 * np.cos(tp * x) * s])


def initial_state(grid: Grid, cfg: RunConfig) -> State:
    """Equilibrium plus ``delta`` times the bump plus ``u_amp`` times a velocity shape."""
    st = equilibrium_state(grid, cfg.rho_bar, cfg.T_bar)
    if cfg.delta:
        b = bump_fields(grid)
        b["rho_d"] = cfg.rho_bar * b["rho_d"]
        st = st.updated(b, cfg.delta)
    if cfg.u_amp:
        st = st.updated({"u": velocity_shape(grid)}, cfg.u_amp)
    return st


def perturbation_norm(state: State, rho_bar: float, T_bar: float) -> float:
    """Sup norm of ``state`` minus the equilibrium ``(rho_bar, 0, T_bar, 0, 1, 0)``."""
    ref = (rho_bar, 0.0, 0.0, 0.0, T_bar, 0.0, 1.0, 0.0)
    return float(max(np.max(np.abs(a - r)) for a, r in zip(state.arrays(), ref)))


def apply_bcs(state: State, width: int = 1) -> dict[str, np.ndarray]:
    """Ghost-extended copies of every field (``u`` odd, scalars mirrored, ``rho_d`` extrapolated)."""
    g = state.grid
    return {n: G.pad(a, g, FIELD_BCS[n], width) for n, a in state.fields().items()}


def rain_velocity(grid: Grid, params: PhysParams, z: np.ndarray | None = None) -> np.ndarray:
    """Fall speed ``V_r`` on the grid (or at heights ``z``)."""
    if z is None:
        z = grid.mesh[2]
    if params.V_r_mode == "constant":
        return np.full(np.shape(z), float(params.V_r))
    return params.V_r * (1.0 + params.V_r_amp * np.cos(np.pi * np.asarray(z)))


def implicit_operator(name: str, f: np.ndarray, grid: Grid, params: PhysParams) -> np.ndarray:
    """``Lambda`` of the field ``name`` (Lame for velocity, Neumann Laplacian otherwise)."""
    if name == "u":
        return G.lame(f, grid, params.mu, params.lam)
    return G.laplacian(f, grid, NEUMANN0)


@dataclass
class Tendencies:
    """``d/dt`` of each field split as ``implicit + explicit``.

    ``implicit[n]`` equals ``coeff[n] * Lambda(phi_n)``.
    """

    implicit: dict[str, np.ndarray]
    explicit: dict[str, np.ndarray]
    coeff: dict[str, float]

    def total(self) -> dict[str, np.ndarray]:
        return {n: self.explicit[n] + self.implicit[n] if n in self.implicit else self.explicit[n]
                for n in FIELD_NAMES}

    def __getattr__(self, item):
        if item.startswith("d_"):
            key = {"d_qv": "q_v", "d_qc": "q_c", "d_qr": "q_r"}.get(item, item[2:])
            return self.total()[key]
        raise AttributeError(item)

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(a)) for a in self.total().values()))


# -- flux form continuity -----------------------------------------------------

def _minmod(a, b):
    return 0.5 * (np.sign(a) + np.sign(b)) * np.minimum(np.abs(a), np.abs(b))


def _flux_difference(R: np.ndarray, U: np.ndarray, h: float, scheme: str) -> np.ndarray:
    """Face-flux difference along the last axis.

    ``R`` carries two ghost cells per side, ``U`` one (odd ghosts make the
    wall face velocity vanish).
    """
    n = U.shape[-1] - 2
    uf = 0.5 * (U[..., :-1] + U[..., 1:])
    if scheme == "centered":
        rf = 0.5 * (R[..., 1:-2] + R[..., 2:-1])
    else:
        d = np.diff(R, axis=-1)
        sig = _minmod(d[..., :-1], d[..., 1:])
        left = R[..., 1:n + 2] + 0.5 * sig[..., : n + 1]
        right = R[..., 2:n + 3] - 0.5 * sig[..., 1:]
        rf = np.where(uf >= 0, left, right)
    F = uf * rf
    return (F[..., 1:] - F[..., :-1]) / h


def mass_flux_divergence(rho: np.ndarray, u: np.ndarray, grid: Grid, scheme: str = "minmod") -> np.ndarray:
    """``div(rho u)`` in conservative face-flux form.

    Face velocities are two-point averages; face densities come from a
    MUSCL reconstruction with the minmod limiter (or a plain average for
    ``scheme="centered"``). Wall faces carry no flux, so the cell sum of
    the result vanishes up to round-off.
    """
    out = np.zeros_like(rho)
    for ax in (0, 1):
        R = np.moveaxis(np.pad(rho, [(2, 2) if a == ax else (0, 0) for a in range(3)], mode="wrap"), ax, -1)
        U = np.moveaxis(np.pad(u[ax], [(1, 1) if a == ax else (0, 0) for a in range(3)], mode="wrap"), ax, -1)
        out += np.moveaxis(_flux_difference(R, U, grid.spacing[ax], scheme), -1, ax)
    R = np.concatenate([rho[..., :1] + np.array([2.0, 1.0]) * (rho[..., :1] - rho[..., 1:2]), rho,
                        rho[..., -1:] + np.array([1.0, 2.0]) * (rho[..., -1:] - rho[..., -2:-1])], axis=-1)
    U = np.concatenate([-u[2][..., :1], u[2], -u[2][..., -1:]], axis=-1)
    out += _flux_difference(R, U, grid.hz, scheme)
    return out


# -- right-hand side ----------------------------------------------------------

def grad_padded(fp: np.ndarray, grid: Grid) -> np.ndarray:
    out = np.empty((3,) + fp.shape[:-3] + tuple(n - 2 for n in fp.shape[-3:]))
    for a in range(3):
        out[a] = G.d1(fp, grid, a)
    return out


def pressure_gradient(rho_d, q_v, T, grid: Grid, params: PhysParams) -> np.ndarray:
    """Centred gradient of ``p = rho_d (R_d + R_v q_v) T`` built from ghost-extended factors."""
    R_d, R_v = gas_constants(params)
    rp = G.pad(rho_d, grid, EXTRAP)
    qp = G.pad(q_v, grid, NEUMANN0)
    Tp = G.pad(T, grid, NEUMANN0)
    return grad_padded(rp * (R_d + R_v * qp) * Tp, grid)


def advect(u: np.ndarray, f: np.ndarray, grid: Grid, bc: BC) -> np.ndarray:
    """``(u . grad) f`` with centred differences (``f`` scalar or vector)."""
    if f.ndim == 4:
        J = G.jacobian(f, grid, bc)
        return np.einsum("ilxyz,lxyz->ixyz", J, u)
    return np.einsum("lxyz,lxyz->xyz", G.grad(f, grid, bc), u)


def check_state(state: State) -> None:
    if np.any(state.rho_d <= 0):
        raise DomainError("rho_d must be positive")
    if np.any(1.0 + state.q_v + state.q_c + state.q_r <= 0):
        raise DomainError("1 + q_v + q_c + q_r must be positive")


def rhs(state: State, params: PhysParams, *, rho_flux: str = "minmod", forcing=None) -> Tendencies:
    """Tendencies of the Eulerian system, split for IMEX stepping.

    ``forcing`` is an optional callable ``forcing(t) -> dict`` whose entries
    are added to the explicit part (used for manufactured solutions).
    """
    check_state(state)
    g = state.grid
    rho, u, T = state.rho_d, state.u, state.T
    q_v, q_c, q_r = state.q_v, state.q_c, state.q_r
    th = coeffs(state, params)
    R_d, R_v = gas_constants(params)
    V_r = rain_velocity(g, params)
    p = rho * (R_d + R_v * q_v) * T
    q_vs = saturation_mixing_ratio(p, T, params)
    mr = rates(state, q_vs, params)
    src_v, src_c, src_r = moisture_source_vector(mr)

    Lu = G.lame(u, g, params.mu, params.lam)
    lapT = G.laplacian(T, g, NEUMANN0)
    lap_q = {n: G.laplacian(getattr(state, n), g, NEUMANN0) for n in ("q_v", "q_c", "q_r")}

    c_u = 1.0 / (rho * th.Q_m)
    c_T = th.kappa / th.Q_th
    a = {"u": float(np.max(c_u)), "T": float(np.max(c_T)), "q_v": 1.0, "q_c": 1.0, "q_r": 1.0}

    # momentum
    up = G.pad(u, g, DIRICHLET0)
    J = np.empty((3, 3) + g.shape)
    for i in range(3):
        for l in range(3):
            J[i, l] = G.d1(up[i], g, l)
    adv_u = np.einsum("ilxyz,lxyz->ixyz", J, u)
    dz_u = J[:, 2]
    gp = pressure_gradient(rho, q_v, T, g, params)
    e_u = (c_u - a["u"]) * Lu - adv_u - gp * c_u + (q_r * V_r / th.Q_m) * dz_u
    if params.g:
        e_u[2] -= params.g

    # temperature
    div_u = (G.d1(up[0], g, 0) + G.d1(up[1], g, 1)) + G.d1(up[2], g, 2)
    gT = G.grad(T, g, NEUMANN0)
    e_T = (
        (c_T - a["T"]) * lapT
        - np.einsum("lxyz,lxyz->xyz", u, gT)
        + (th.c_1 * q_r * V_r * gT[2] + th.Q_cp * T * div_u - (th.Q_1 * T + th.Q_2) * (mr.S_ev - mr.S_cd)) / th.Q_th
    )

    # moisture
    e_qv = -advect(u, q_v, g, NEUMANN0) + src_v
    e_qc = -advect(u, q_c, g, NEUMANN0) + src_c
    gqr = G.grad(q_r, g, NEUMANN0)
    sed = G.d1(G.pad(q_r * V_r, g, NEUMANN0), g, 2)
    dz_rho = G.d1(G.pad(rho, g, EXTRAP), g, 2)
    e_qr = -np.einsum("lxyz,lxyz->xyz", u, gqr) + sed + q_r * V_r * dz_rho / rho + src_r

    explicit = {
        "rho_d": -mass_flux_divergence(rho, u, g, rho_flux),
        "u": e_u,
        "T": e_T,
        "q_v": e_qv,
        "q_c": e_qc,
        "q_r": e_qr,
    }
    implicit = {
        "u": a["u"] * Lu,
        "T": a["T"] * lapT,
        "q_v": lap_q["q_v"],
        "q_c": lap_q["q_c"],
        "q_r": lap_q["q_r"],
    }
    if forcing is not None:
        for n, f in forcing(state.t).items():
            explicit[n] = explicit[n] + f
    return Tendencies(implicit=implicit, explicit=explicit, coeff=a)
