"""Small-data experiment: a scaled smooth bump on top of the equilibrium."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..dynamics import initial_state
from ..grid import Grid
from ..params import PhysParams, RunConfig
from ..timestepper import StepReport, run


@dataclass
class StabilityReport:
    delta: float
    norm_ratio: float
    rho_ratio: float
    series: list[StepReport] = field(default_factory=list, repr=False)


def stability_experiment(delta: float, t_end: float, params: PhysParams, *, n: int = 32,
                         rho_bar: float = 1.0, T_bar: float = 1.0, scheme: str = "imex2",
                         cfl: float = 0.5) -> StabilityReport:
    """``sup_t |perturbation| / delta`` and ``min_{t,x} rho_d / rho_bar``.

    For ``delta = 0`` the norm ratio is reported as 0.
    """
    if params.g:
        raise ValueError("the experiment is posed without gravity")
    if params.q_vs_mode != "zero" and not (params.q_vs_mode == "constant" and params.q_vs == 0):
        raise ValueError("the experiment is posed with q_vs = 0")
    cfg = RunConfig(nx=n, ny=n, nz=n, t_end=t_end, cfl=cfl, scheme=scheme, rho_bar=rho_bar, T_bar=T_bar,
                    delta=delta, snapshot_every=0).validate()
    st0 = initial_state(Grid(cfg.nx, cfg.ny, cfg.nz), cfg)
    _, series = run(st0, cfg, params)
    rho_min = min([float(st0.rho_d.min())] + [r.min_rho_d for r in series])
    if delta == 0:
        ratio = 0.0
    else:
        ratio = max(r.perturbation_norm for r in series) / delta if series else 1.0
    return StabilityReport(delta, ratio, rho_min / rho_bar, series)

