import math

import numpy as np
import pytest
from conftest import smooth_state
from hypothesis import given
from hypothesis import strategies as st

from moistns import dynamics as D
from moistns.dynamics import FIELD_NAMES, State, apply_bcs, equilibrium_state, implicit_operator, rhs
from moistns.errors import DomainError
from moistns.grid import Grid
from moistns.microphysics import MicroRates
from moistns.params import PhysParams
from moistns.verify.mms import _compile, coupled_case, coupled_general_case, symbolic_rhs

P = PhysParams()


@pytest.mark.parametrize("rho_bar,T_bar", [(1.0, 1.0), (2.0, 0.0), (0.5, 3.0)])
def test_equilibrium_tendencies_vanish(grid8, rho_bar, T_bar):
    assert rhs(equilibrium_state(grid8, rho_bar, T_bar), P).max_abs() <= 1e-12


def test_dry_constant_state_is_steady(grid8):
    st_ = State.uniform(grid8, rho_d=1.3, T=0.7, q_v=0.0, q_c=0.0, q_r=0.0)
    assert rhs(st_, P).max_abs() == 0.0


def test_domain_errors(grid8):
    st_ = equilibrium_state(grid8)
    with pytest.raises(DomainError):
        rhs(st_.replace(rho_d=st_.rho_d * 0.0), P)
    with pytest.raises(DomainError):
        rhs(st_.replace(q_v=st_.q_v - 3.0), P)


def test_state_shape_checked(grid8):
    with pytest.raises(ValueError):
        State(grid8, np.ones(grid8.shape), np.zeros(grid8.shape), *[np.ones(grid8.shape)] * 4)


def test_implicit_part_is_coefficient_times_operator(grid8):
    st_ = smooth_state(grid8)
    tn = rhs(st_, P)
    for n in ("u", "T", "q_v", "q_c", "q_r"):
        assert np.allclose(tn.implicit[n], tn.coeff[n] * implicit_operator(n, getattr(st_, n), grid8, P),
                           rtol=0, atol=1e-12)
    assert "rho_d" not in tn.implicit


@pytest.mark.parametrize("flux", ["minmod", "centered"])
def test_dry_mass_tendency_sums_to_zero(flux):
    g = Grid(8, 6, 10)
    r = np.random.default_rng(3)
    st_ = smooth_state(g)
    st_ = st_.replace(rho_d=1.0 + 0.3 * r.random(g.shape), u=r.standard_normal((3,) + g.shape))
    d = rhs(st_, P, rho_flux=flux).d_rho_d
    assert abs(d.sum()) * g.cell_volume <= 1e-12


def test_horizontal_translation_equivariance():
    g = Grid.cube(8)
    st_ = smooth_state(g, amp=0.2, seed=4)
    p = PhysParams(q_vs_mode="constant", q_vs=0.05, V_r_mode="profile", V_r_amp=0.2, g=0.3)
    shifted = State(g, **{n: np.roll(a, 1, axis=-3) for n, a in st_.fields().items()})
    a, b = rhs(st_, p).total(), rhs(shifted, p).total()
    for n in FIELD_NAMES:
        assert np.array_equal(np.roll(a[n], 1, axis=-3), b[n])


def test_microphysics_does_not_change_total_water(monkeypatch):
    g = Grid.cube(8)
    st_ = smooth_state(g, amp=0.3, seed=2)
    p = PhysParams(q_vs_mode="constant", q_vs=0.1)

    def water(tn):
        t = tn.total()
        return t["q_v"] + t["q_c"] + t["q_r"]

    with_micro = water(rhs(st_, p))
    monkeypatch.setattr(D, "rates", lambda s, q, pp: MicroRates(*(np.zeros(g.shape),) * 4))
    without = water(rhs(st_, p))
    assert np.max(np.abs(with_micro - without)) <= 1e-13


def test_apply_bcs(grid8):
    g = grid8
    x, _, z = g.mesh
    st_ = equilibrium_state(g).replace(u=np.stack([z * 0.0, z * 0.0, np.sin(2 * np.pi * x) * 0 + z]),
                                       T=np.full(g.shape, 2.0))
    pads = apply_bcs(st_)
    assert np.allclose(pads["u"][2, 1:-1, 1:-1, 0], -g.hz / 2)  # linear extension through u=0
    assert np.all(pads["T"] == 2.0)
    f = np.sin(2 * np.pi * x)
    pq = apply_bcs(st_.replace(q_r=f))["q_r"]
    assert np.array_equal(pq[0, 1:-1, 1:-1], f[-1])


def test_rain_velocity_modes(grid8):
    assert np.all(D.rain_velocity(grid8, P) == 1.0)
    prof = D.rain_velocity(grid8, PhysParams(V_r_mode="profile", V_r=2.0, V_r_amp=0.5))
    z = grid8.mesh[2]
    assert np.allclose(prof, 2.0 * (1 + 0.5 * np.cos(np.pi * z)))


@pytest.mark.parametrize("case_fn", [coupled_case, coupled_general_case])
def test_rhs_matches_symbolic_tendencies(case_fn):
    case = case_fn()
    sym = symbolic_rhs(case.fields, case.params)
    errs = []
    for n in (16, 32):
        g = Grid.cube(n)
        st_ = case.exact_state(g, 0.3)
        num = rhs(st_, case.params, rho_flux="centered").total()
        err = 0.0
        for name in FIELD_NAMES:
            if name == "u":
                ex = np.stack([_compile(c)(g.mesh, 0.3) for c in sym[name]])
            else:
                ex = _compile(sym[name])(g.mesh, 0.3)
            err = max(err, float(np.max(np.abs(num[name] - ex))))
        errs.append(err)
    assert math.log2(errs[0] / errs[1]) >= 1.8, errs


@given(seed=st.integers(0, 2**16), amp=st.floats(0.0, 0.3))
def test_mass_conservation_property(seed, amp):
    g = Grid(4, 5, 6)
    r = np.random.default_rng(seed)
    st_ = equilibrium_state(g).replace(rho_d=1 + amp * r.random(g.shape), u=r.standard_normal((3,) + g.shape))
    assert abs(rhs(st_, P).d_rho_d.sum()) * g.cell_volume <= 1e-12
