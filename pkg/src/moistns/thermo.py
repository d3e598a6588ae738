"""Equation of state and the derived thermodynamic coefficients.

Two coefficient paths exist. The general path evaluates the closures from
the individual heat capacities and gas constants; the simplified path
prescribes the reduced values directly (``Q_th = Q_m``, ``Q_cp = -(1 + q_v)``,
``Q_1 = Q_2 = 1``, unit gas constants, ``kappa = c_1 = 1``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .params import PhysParams, gamma


@dataclass
class ThermoCoeffs:
    Q_m: np.ndarray
    Q_th: np.ndarray
    Q_cp: np.ndarray
    Q_1: np.ndarray | float
    Q_2: float
    c_nu: np.ndarray
    sigma: np.ndarray
    L_T: np.ndarray
    kappa: float
    c_1: float


def gas_constants(params: PhysParams) -> tuple[float, float]:
    if params.simplified_mode:
        return 1.0, 1.0
    return params.R_d, params.R_v


def eos_pressure(rho_d, q_v, T, params: PhysParams) -> np.ndarray:
    """Pressure ``rho_d (R_d + R_v q_v) T``."""
    rho_d, q_v, T = np.asarray(rho_d, float), np.asarray(q_v, float), np.asarray(T, float)
    if np.any(rho_d <= 0):
        raise DomainError("eos_pressure: rho_d must be positive")
    if np.any(T < 0):
        raise DomainError("eos_pressure: T must be non-negative")
    R_d, R_v = gas_constants(params)
    return rho_d * (R_d + R_v * q_v) * T


def temperature_from_potential(theta, p, params: PhysParams) -> np.ndarray:
    """``T = theta (p / p_ref)^((gamma - 1) / gamma)``."""
    p = np.asarray(p, float)
    if np.any(p <= 0):
        raise DomainError("temperature_from_potential: p must be positive")
    if params.p_ref <= 0:
        raise DomainError("temperature_from_potential: p_ref must be positive")
    gm = gamma(params)
    return np.asarray(theta, float) * (p / params.p_ref) ** ((gm - 1.0) / gm)


def potential_from_temperature(T, p, params: PhysParams) -> np.ndarray:
    p = np.asarray(p, float)
    if np.any(p <= 0):
        raise DomainError("potential_from_temperature: p must be positive")
    gm = gamma(params)
    return np.asarray(T, float) * (p / params.p_ref) ** (-(gm - 1.0) / gm)


def moist_density(rho_d, q_v, q_c, q_r):
    return rho_d * (1 + q_v + q_c + q_r)


def q1_long(q_v, params: PhysParams):
    """``Q_1`` through the unsimplified expression (used as a self-check)."""
    p = params
    q_v = np.asarray(q_v, float)
    c_nu, sigma = _cnu_sigma(q_v, 0.0, 0.0, p)
    return p.R_v / (p.R_d + p.R_v * q_v) * (sigma - p.R_d / p.c_pd * c_nu) + p.c_pv - p.c_1


def q1_short(params: PhysParams) -> float:
    return params.c_pv - params.c_1 - params.R_v


def _cnu_sigma(q_v, q_c, q_r, p: PhysParams):
    c_nu = p.c_pd + p.c_pv * q_v + p.c_1 * (q_c + q_r)
    sigma = (p.c_pv / p.c_pd * p.R_d - p.R_v) * q_v + p.c_1 / p.c_pd * p.R_d * (q_c + q_r)
    return c_nu, sigma


def q_th_expanded(q_v, q_c, q_r, p: PhysParams):
    gm = gamma(p)
    return (
        p.c_pd / gm
        + (p.c_pv / gm + p.c_pv / p.c_pd * p.R_d - p.R_v) * q_v
        + (p.c_1 / gm + p.c_1 / p.c_pd * p.R_d) * (q_c + q_r)
    )


def coeffs(state, params: PhysParams) -> ThermoCoeffs:
    """Pointwise thermodynamic coefficients for ``state``.

    ``state`` only needs attributes ``T``, ``q_v``, ``q_c`` and ``q_r``.
    """
    q_v, q_c, q_r, T = state.q_v, state.q_c, state.q_r, state.T
    Q_m = 1.0 + q_v + q_c + q_r
    if params.simplified_mode:
        return ThermoCoeffs(
            Q_m=Q_m,
            Q_th=Q_m,
            Q_cp=-(1.0 + q_v),
            Q_1=1.0,
            Q_2=1.0,
            c_nu=Q_m,
            sigma=q_v + q_c + q_r,
            L_T=params.L_ref + T - params.T_ref,
            kappa=1.0,
            c_1=1.0,
        )
    p = params
    gm = gamma(p)
    c_nu, sigma = _cnu_sigma(q_v, q_c, q_r, p)
    return ThermoCoeffs(
        Q_m=Q_m,
        Q_th=c_nu / gm + sigma,
        Q_cp=sigma - p.R_d / p.c_pd * c_nu,
        Q_1=q1_short(p),
        Q_2=p.L_ref - (p.c_pv - p.c_1) * p.T_ref,
        c_nu=c_nu,
        sigma=sigma,
        L_T=p.L_ref + (p.c_pv - p.c_1) * (T - p.T_ref),
        kappa=p.kappa,
        c_1=p.c_1,
    )


def saturation_mixing_ratio(p, T, params: PhysParams):
    """Saturation mixing ratio ``q_vs(p, T)`` for the configured mode.

    The affine mode is clipped to ``[0, q_vs_star]``; the clip points are
    the only places where it fails to be differentiable.
    """
    shape = np.shape(T)
    if params.q_vs_mode == "zero":
        return np.zeros(shape)
    if params.q_vs_mode == "constant":
        return np.full(shape, params.q_vs)
    raw = params.q_vs + params.q_vs_dp * np.asarray(p) + params.q_vs_dT * np.asarray(T)
    return np.clip(raw, 0.0, params.q_vs_star)
