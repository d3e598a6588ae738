import math

import numpy as np
import pytest
import sympy as sp
from conftest import smooth_state
from hypothesis import given
from hypothesis import strategies as st

from moistns import grid as G
from moistns import lagrangian as L
from moistns.dynamics import State, equilibrium_state, velocity_shape
from moistns.errors import MapDegenerate
from moistns.grid import BC, DIRICHLET0, NEUMANN0, Grid
from moistns.params import PhysParams

P = PhysParams()
I3 = np.eye(3).reshape(3, 3, 1, 1, 1)
xs, ys, zs = sp.symbols("x y z", real=True)
PI = sp.pi


def interior(a, wz=2, wy=0):
    sl = [slice(None)] * (a.ndim - 3) + [slice(None), slice(wy, a.shape[-2] - wy or None), slice(wz, -wz)]
    return a[tuple(sl)]


def lam(expr):
    f = sp.lambdify((xs, ys, zs), expr, "numpy")
    return lambda x, y, z: np.broadcast_to(np.asarray(f(x, y, z), float), np.shape(x))


def smooth_map(g, amp=0.04):
    """Periodic displacement vanishing to second order at the walls, with its analytic form."""
    s2 = sp.sin(PI * zs) ** 2
    Dsym = [amp * sp.sin(2 * PI * ys) * s2, amp * sp.cos(2 * PI * xs) * s2,
            amp * sp.sin(2 * PI * xs) * sp.sin(2 * PI * ys) * s2]
    D = np.stack([lam(d)(*g.mesh) for d in Dsym])
    return L.LagrangianMap.from_displacement(g, D), Dsym


# -- the map --------------------------------------------------------------------

def test_identity_map(grid8):
    m = L.LagrangianMap.identity(grid8)
    assert m.valid and m.deviation == 0.0 and m.identity_residual() == 0.0
    assert np.array_equal(m.X, np.stack(grid8.mesh))


@pytest.mark.parametrize("dt", [0.01, 0.5])
def test_zero_velocity_keeps_identity(grid8, dt):
    m = L.advance_map(L.LagrangianMap.identity(grid8), np.zeros((3,) + grid8.shape), dt)
    assert np.all(m.D == 0) and np.array_equal(m.Z, np.broadcast_to(I3, m.Z.shape))


def test_constant_velocity_shifts_labels():
    g = Grid.cube(8)
    c = np.array([0.3, -0.2, 0.1]).reshape(3, 1, 1, 1)
    m = L.advance_map(L.LagrangianMap.identity(g), np.broadcast_to(c, (3,) + g.shape).copy(), 0.1)
    assert np.allclose(m.X - np.stack(g.mesh), 0.1 * c)
    # odd wall ghosts make the constant field no-slip, so only away from the walls is gradX exact
    assert np.max(np.abs(interior(m.gradX - I3, 1))) <= 1e-14
    assert np.max(np.abs(interior(m.Z - I3, 1))) <= 1e-14


def test_shear_flow_closed_form():
    g = Grid.cube(16)
    eps, t = 0.04, 0.5  # small enough that the seam and wall cells keep the map valid
    y = g.mesh[1]
    u = np.stack([eps * y, g.zeros(), g.zeros()])
    m = L.advance_map(L.LagrangianMap.identity(g), u, t)
    E12 = np.zeros((3, 3, 1, 1, 1))
    E12[0, 1] = 1.0
    # exclude the periodic seam in y and the wall layers, where the linear profile is not representable
    assert np.max(np.abs(interior(m.gradX - (I3 + t * eps * E12), 1, 1))) <= 1e-12
    assert np.max(np.abs(interior(m.Z - (I3 - t * eps * E12), 1, 1))) <= 1e-12


def test_map_degenerates():
    g = Grid.cube(8)
    with pytest.raises(MapDegenerate):
        L.advance_map(L.LagrangianMap.identity(g), 5.0 * velocity_shape(g), 1.0)
    bad = L.LagrangianMap.from_displacement(g, 5.0 * velocity_shape(g))
    assert not bad.valid and bad.deviation > L.MAX_DEVIATION
    with pytest.raises(MapDegenerate):
        L.advance_map(bad, np.zeros((3,) + g.shape), 0.1)


@given(amp=st.floats(0.0, 0.05), seed=st.integers(0, 2**16))
def test_z_inverts_gradient(amp, seed):
    g = Grid(6, 5, 7)
    r = np.random.default_rng(seed)
    D = amp * r.uniform(-1, 1, (3,) + g.shape) * g.hx
    m = L.LagrangianMap.from_displacement(g, D)
    assert m.valid
    assert m.identity_residual() <= 1e-10


def test_dz_two_routes_converge():
    errs = []
    for n in (16, 32):
        m, _ = smooth_map(Grid.cube(n))
        a = L.z_derivatives(m.Z, m.grid)
        b = L.z_derivatives_from_map(m)
        errs.append(float(np.max(np.abs(interior(a - b, 2)))))
    assert math.log2(errs[0] / errs[1]) >= 1.8, errs


# -- transformed operators --------------------------------------------------------

def test_operators_at_identity_are_exact(grid8, rng):
    g = grid8
    Id = L.LagrangianMap.identity(g).Z
    f = rng.standard_normal(g.shape)
    u = rng.standard_normal((3,) + g.shape)
    assert np.array_equal(L.transformed_laplacian(f, Id, g), G.laplacian(f, g))
    assert np.array_equal(L.transformed_laplacian(u, Id, g, DIRICHLET0), G.laplacian(u, g, DIRICHLET0))
    assert np.array_equal(L.transformed_divgrad(u, Id, g), G.grad(G.div(u, g, DIRICHLET0), g, NEUMANN0))
    assert np.all(L.transformed_laplacian_difference(f, Id, g) == 0)
    assert np.all(L.transformed_divgrad_difference(u, Id, g) == 0)
    assert np.array_equal(L.transformed_gradient(f, Id, g), G.grad(f, g))
    assert np.array_equal(L.transformed_divergence(u, Id, g), G.div(u, g))


def test_constant_field_gives_zero():
    g = Grid.cube(8)
    m, _ = smooth_map(g)
    assert np.max(np.abs(L.transformed_laplacian(np.full(g.shape, 3.0), m.Z, g))) == 0.0
    c = np.broadcast_to(np.array([1.0, 2.0, -1.0]).reshape(3, 1, 1, 1), (3,) + g.shape).copy()
    assert np.max(np.abs(interior(L.transformed_divgrad(c, m.Z, g), 2))) <= 1e-12


def test_difference_forms_match_direct_forms():
    g = Grid.cube(12)
    m, _ = smooth_map(g)
    st_ = smooth_state(g)
    d1 = L.transformed_laplacian(st_.T, m.Z, g) - G.laplacian(st_.T, g)
    assert np.allclose(L.transformed_laplacian_difference(st_.T, m.Z, g), d1, atol=1e-10)
    Id = L.LagrangianMap.identity(g).Z
    d2 = L.transformed_divgrad_expanded(st_.u, m.Z, g) - L.transformed_divgrad_expanded(st_.u, Id, g)
    assert np.allclose(L.transformed_divgrad_difference(st_.u, m.Z, g), d2, atol=1e-10)


def _chain_rule_errors(kind):
    """Compare against (Delta F)(X(y)) or (grad div U)(X(y)) for analytic F, U."""
    F = sp.cos(2 * PI * xs) * sp.sin(2 * PI * ys) * sp.cos(PI * zs)
    U = [sp.sin(2 * PI * ys) * sp.sin(PI * zs), sp.cos(2 * PI * xs) * sp.sin(PI * zs),
         sp.sin(2 * PI * xs) * sp.sin(PI * zs)]
    errs = []
    for n in (16, 32, 64):
        g = Grid.cube(n)
        m, _ = smooth_map(g)
        X = m.X
        if kind == "laplacian":
            f = lam(F)(*X)
            num = L.transformed_laplacian(f, m.Z, g)
            exact = lam(sum(sp.diff(F, v, 2) for v in (xs, ys, zs)))(*X)
        else:
            u = np.stack([lam(c)(*X) for c in U])
            div = sum(sp.diff(c, v) for c, v in zip(U, (xs, ys, zs)))
            exact = np.stack([lam(sp.diff(div, v))(*X) for v in (xs, ys, zs)])
            num = (L.transformed_divgrad(u, m.Z, g) if kind == "divgrad"
                   else L.transformed_divgrad_expanded(u, m.Z, g))
        errs.append(float(np.max(np.abs(interior(num - exact, 2)))))
    return errs


@pytest.mark.parametrize("kind", ["laplacian", "divgrad", "divgrad_expanded"])
def test_chain_rule_oracle(kind):
    errs = _chain_rule_errors(kind)
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert orders[-1] >= 1.8 and min(orders) >= 1.7, (errs, orders)


# -- boundary terms ---------------------------------------------------------------

def test_boundary_terms_vanish_at_identity(grid8):
    st_ = smooth_state(grid8)
    B = L.transformed_boundary(st_, L.LagrangianMap.identity(grid8).Z)
    assert set(B) == set(L.SCALARS)
    for bu, bl in B.values():
        assert np.all(bu == 0) and np.all(bl == 0)


def test_boundary_terms_vanish_for_vertical_profiles():
    g = Grid.cube(8)
    z = g.mesh[2]
    Z = np.broadcast_to(I3, (3, 3) + g.shape).copy()
    Z[0, 1] = 0.3
    Z[1, 0] = -0.2
    bu, bl = L.boundary_term(np.cos(np.pi * z) + z**2, Z, g)
    assert np.all(bu == 0) and np.all(bl == 0)


def test_boundary_terms_closed_form():
    c, d = 0.15, 0.1
    errs = []
    for n in (16, 32, 64):
        g = Grid.cube(n)
        x, _, z = g.mesh
        f = np.cos(2 * np.pi * x) * z**3
        Z = np.broadcast_to(I3, (3, 3) + g.shape).copy()
        Z[0, 2] = c
        Z[2, 2] = 1 - d
        bu, bl = L.boundary_term(f, Z, g)
        xw = x[..., 0]
        exact_u = d * 3 * np.cos(2 * np.pi * xw) + c * 2 * np.pi * np.sin(2 * np.pi * xw)
        errs.append(max(float(np.max(np.abs(bu - exact_u))), float(np.max(np.abs(bl)))))
    assert min(math.log2(a / b) for a, b in zip(errs, errs[1:])) >= 1.8, errs


# -- sources ----------------------------------------------------------------------

def test_mass_source_vanishes_at_initial_density_and_identity():
    g = Grid.cube(8)
    st_ = smooth_state(g)
    Id = L.LagrangianMap.identity(g).Z
    Gs = L.transformed_sources(st_, Id, P, st_.rho_d, 1.0 + st_.q_v + st_.q_c + st_.q_r)
    assert np.all(Gs["rho_d"] == 0)


def test_mass_source_independent_transcription():
    g = Grid.cube(8)
    st_ = smooth_state(g, amp=0.2, seed=5)
    m, _ = smooth_map(g)
    rho0 = np.full(g.shape, 0.9)
    Gs = L.transformed_sources(st_, m.Z, P, rho0, 2.0)
    # -(rho - rho0) div u - rho * grad u : (Z^T - Id), with plain loops
    up = G.pad(st_.u, g, DIRICHLET0)
    h = g.spacing
    ref = np.zeros(g.shape)
    for i in range(3):
        for l in range(3):
            sl_p = [slice(1, -1)] * 3
            sl_m = [slice(1, -1)] * 3
            sl_p[l] = slice(2, None)
            sl_m[l] = slice(0, -2)
            dudy = (up[i][tuple(sl_p)] - up[i][tuple(sl_m)]) / (2 * h[l])
            if i == l:
                ref -= (st_.rho_d - rho0) * dudy
            ref -= st_.rho_d * dudy * (m.Z[l, i] - (1.0 if i == l else 0.0))
    assert np.allclose(Gs["rho_d"], ref, atol=1e-13)


def test_sources_vanish_at_equilibrium():
    g = Grid.cube(8)
    eq = equilibrium_state(g, 1.3, 0.7)
    m, _ = smooth_map(g)
    Gs = L.transformed_sources(eq, m.Z, P, eq.rho_d, 2.0)
    assert max(float(np.max(np.abs(a))) for a in Gs.values()) <= 1e-12
    zero = L.shifted_variables(eq, 1.3, 0.7)
    Gz = L.shifted_sources(zero, m.Z, P, 1.3, 0.7)
    assert max(float(np.max(np.abs(a))) for a in Gz.values()) == 0.0


def test_shift_round_trip(grid8):
    st_ = smooth_state(grid8)
    back = L.unshifted_variables(L.shifted_variables(st_, 1.2, 0.4), 1.2, 0.4)
    assert back.max_abs_diff(st_) <= 1e-15


@pytest.mark.parametrize("seed", [0, 1])
def test_shifted_system_equals_unshifted_system(seed):
    """Linear part plus sources agree between the two formulations of the same system."""
    g = Grid.cube(8)
    rb, Tb = 1.0, 1.0
    r = np.random.default_rng(seed)
    z = L.shifted_variables(smooth_state(g, amp=0.2, seed=seed), rb, Tb)
    z = State(g, z.rho_d, z.u, z.T, 0.05 * np.abs(z.q_v), z.q_c, z.q_r)
    st_ = L.unshifted_variables(z, rb, Tb)
    m, _ = smooth_map(g)
    dZ = L.z_derivatives(m.Z, g)
    bcs = L.boundary_bcs(L.transformed_boundary(st_, m.Z))
    dudt = r.standard_normal((3,) + g.shape)
    dTdt = r.standard_normal(g.shape)
    Q0 = 2.0
    kw = dict(dZ=dZ, bcs=bcs, dudt=dudt, dTdt=dTdt)
    G4 = L.transformed_sources(st_, m.Z, P, rb, Q0, **kw)
    full = {
        "rho_d": -rb * G.div(st_.u, g, DIRICHLET0) + G4["rho_d"],
        "u": G.lame(st_.u, g, P.mu, P.lam) / (rb * Q0) + G4["u"],
        "T": G.laplacian(st_.T, g, bcs["T"]) / Q0 + G4["T"],
        **{n: G.laplacian(getattr(st_, n), g, bcs[n]) + G4[n] for n in ("q_v", "q_c", "q_r")},
    }
    Az = L.shifted_operator(z, P, rb, Tb, bcs=bcs)
    G7 = L.shifted_sources(z, m.Z, P, rb, Tb, **kw)
    for n in full:
        assert np.max(np.abs(full[n] - (Az[n] + G7[n]))) <= 1e-11, n


def test_simplified_only():
    g = Grid.cube(8)
    with pytest.raises(ValueError):
        L.LagrangianSolver(equilibrium_state(g), PhysParams(simplified_mode=False))


# -- pull-back and equivalence ------------------------------------------------------

def test_invert_map_round_trip():
    g = Grid.cube(12)
    m, Dsym = smooth_map(g, amp=0.03)
    pts = np.stack([a.ravel() for a in g.mesh])
    yv = L.invert_map(m, pts)
    Xy = yv + np.stack([lam(d)(*yv) for d in Dsym])
    # the interpolated displacement is second-order accurate, so the exact map misses by O(h^2)
    assert np.max(np.abs(Xy - pts)) <= 5e-3


def test_pullback_identity_is_exact(grid8):
    st_ = smooth_state(grid8)
    back = L.pullback(st_, L.LagrangianMap.identity(grid8))
    assert back.max_abs_diff(st_) <= 1e-14


def test_equivalence_without_velocity():
    # uniform pressure and no vapour: the velocity stays zero, rain and cloud water still evolve
    g = Grid.cube(8)
    s = smooth_state(g, amp=0.3)
    st0 = State(g, g.full(1.1), g.zeros(3), g.full(0.9), g.zeros(), s.q_c, s.q_r)
    assert L.equivalence_check(st0, 0.02, P, g, steps=10) <= 1e-10


def test_equivalence_at_equilibrium():
    g = Grid.cube(8)
    assert L.equivalence_check(equilibrium_state(g, 1.2, 0.9), 0.05, P, g, steps=5) <= 1e-12


def test_equivalence_grid_mismatch():
    with pytest.raises(ValueError):
        L.equivalence_check(equilibrium_state(Grid.cube(8)), 0.1, P, Grid.cube(4))


def test_run_lagrangian_equilibrium():
    from moistns.params import RunConfig

    g = Grid.cube(8)
    eq = equilibrium_state(g)
    snaps = []
    final, series = L.run_lagrangian(eq, RunConfig(nx=8, ny=8, nz=8, t_end=0.2, snapshot_every=2), P,
                                     on_snapshot=lambda k, s: snaps.append(k))
    assert final.max_abs_diff(eq) <= 1e-12 and snaps[0] == 0 and len(series) > 0
