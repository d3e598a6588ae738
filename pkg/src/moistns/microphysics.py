"""Warm-rain phase-change rates with exact (unsmoothed) switch terms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .params import PhysParams


def positive_part(f):
    """``max(0, f)``, exact."""
    return np.maximum(0.0, f)


@dataclass
class MicroRates:
    S_ev: np.ndarray
    S_cd: np.ndarray
    S_ac: np.ndarray
    S_cr: np.ndarray


def rates(state, q_vs, params: PhysParams) -> MicroRates:
    """Evaporation, condensation, auto-conversion and collection rates.

    ``state`` needs ``T``, ``q_v``, ``q_c`` and ``q_r``. Negative mixing
    ratios are passed through unchanged.
    """
    T = np.asarray(state.T, float)
    q_v = np.asarray(state.q_v, float)
    q_c = np.asarray(state.q_c, float)
    q_r = np.asarray(state.q_r, float)
    q_vs = np.asarray(q_vs, float)
    Q_m = 1.0 + q_v + q_c + q_r
    if np.any(Q_m <= 0):
        raise DomainError("rates: 1 + q_v + q_c + q_r must be positive")
    if params.simplified_mode:
        return _rates_simplified(T, q_v, q_c, q_r, q_vs, Q_m)
    return _rates_general(T, q_v, q_c, q_r, q_vs, Q_m, params)


def _rates_simplified(T, q_v, q_c, q_r, q_vs, Q_m) -> MicroRates:
    return MicroRates(
        S_ev=T * (1.0 + q_v) / Q_m * positive_part(q_vs - q_v) * q_r,
        S_cd=(q_v - q_vs) * q_c + positive_part(q_v - q_vs),
        S_ac=positive_part(q_c - 1.0),
        S_cr=q_c * q_r,
    )


def _rates_general(T, q_v, q_c, q_r, q_vs, Q_m, p: PhysParams) -> MicroRates:
    return MicroRates(
        S_ev=p.c_ev * T * (p.R_d + p.R_v * q_v) / Q_m * positive_part(q_vs - q_v) * q_r,
        S_cd=p.c_cd * (q_v - q_vs) * q_c + p.c_cn * positive_part(q_v - q_vs) * p.q_cn,
        S_ac=p.c_ac * positive_part(q_c - p.q_ac),
        S_cr=p.c_cr * q_c * q_r,
    )


def evaporation_via_pressure(rho_d, T, q_v, q_c, q_r, q_vs, params: PhysParams):
    """``S_ev`` written as ``c_ev (p / rho) (q_vs - q_v)^+ q_r`` with moist density ``rho``."""
    R_d, R_v = (1.0, 1.0) if params.simplified_mode else (params.R_d, params.R_v)
    c_ev = 1.0 if params.simplified_mode else params.c_ev
    p = rho_d * (R_d + R_v * q_v) * T
    rho = rho_d * (1.0 + q_v + q_c + q_r)
    return c_ev * p / rho * positive_part(q_vs - q_v) * q_r


def moisture_source_vector(r: MicroRates):
    """Phase-change sources ``(src_v, src_c, src_r)``; they sum to zero."""
    src_v = r.S_ev - r.S_cd
    src_c = r.S_cd - (r.S_ac + r.S_cr)
    src_r = (r.S_ac + r.S_cr) - r.S_ev
    return src_v, src_c, src_r


def lipschitz_bounds(params: PhysParams, *, T_max, q_v_max, q_c_max, q_r_max, Q_m_min, q_vs_max=0.0):
    """Lipschitz constants of the rates on a box of states.

    Returns a dict ``{("S_cd", "q_v"): L, ...}``; each ``L`` bounds
    ``|S(a) - S(b)| / |a - b|`` when only the named mixing ratio changes
    inside the box ``0 <= q_* <= q_*_max``, ``0 <= T <= T_max``.
    """
    s = params.simplified_mode
    c_ev = 1.0 if s else params.c_ev
    c_cd = 1.0 if s else params.c_cd
    c_cn = 1.0 if s else params.c_cn
    q_cn = 1.0 if s else params.q_cn
    c_ac = 1.0 if s else params.c_ac
    R_d, R_v = (1.0, 1.0) if s else (params.R_d, params.R_v)
    gas_max = R_d + R_v * q_v_max
    # d/dq_v of (R_d + R_v q_v) / Q_m is (R_v Q_m - R_d - R_v q_v) / Q_m^2
    dfrac = (R_v * (1.0 + q_v_max + q_c_max + q_r_max) + gas_max) / Q_m_min**2
    return {
        ("S_cd", "q_v"): c_cd * q_c_max + c_cn * q_cn,
        ("S_ac", "q_c"): c_ac,
        ("S_ev", "q_v"): c_ev * T_max * q_r_max * (gas_max / Q_m_min + dfrac * q_vs_max),
    }
