"""Physical constants, model switches and run configuration.

Configuration files are flat UTF-8 text, one ``key = value`` per line,
``#`` starts a comment. Unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ParseError, ValidationError

V_R_MODES = ("constant", "profile")
Q_VS_MODES = ("zero", "constant", "affine")
RUN_MODES = ("eulerian", "lagrangian", "both")
SCHEMES = ("imex1", "imex2")
RHO_FLUXES = ("minmod", "centered")


@dataclass(frozen=True)
class PhysParams:
    """All physical and microphysical constants plus model switches.

    Defaults put the model in the regime of the small-data theory:
    simplified constants, ``q_vs = 0``, ``V_r = 1`` and no gravity.
    """

    mu: float = 1.0
    lam: float = 0.0
    kappa: float = 1.0
    g: float = 0.0
    R_d: float = 1.0
    R_v: float = 1.0
    c_pd: float = 3.5
    c_pv: float = 2.0
    c_1: float = 1.0
    p_ref: float = 1.0
    T_ref: float = 1.0
    L_ref: float = 2.0
    c_ev: float = 1.0
    c_cd: float = 1.0
    c_cn: float = 1.0
    c_ac: float = 1.0
    c_cr: float = 1.0
    q_cn: float = 1.0
    q_ac: float = 1.0
    q_vs_star: float = 1.0
    simplified_mode: bool = True
    V_r_mode: str = "constant"
    V_r: float = 1.0
    V_r_amp: float = 0.0
    q_vs_mode: str = "zero"
    q_vs: float = 0.0
    q_vs_dp: float = 0.0
    q_vs_dT: float = 0.0

    def validate(self) -> "PhysParams":
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not math.isfinite(v):
                raise ValidationError(f"{f.name} finite", f"got {v}")
        if not self.mu > 0:
            raise ValidationError("mu > 0", f"mu={self.mu}")
        if not 2 * self.mu + self.lam > 0:
            raise ValidationError("2*mu + lambda > 0", f"2*{self.mu}+{self.lam}")
        if not self.c_pd > self.R_d:
            raise ValidationError("c_pd > R_d", f"c_pd={self.c_pd}, R_d={self.R_d}")
        for name in ("kappa", "R_d", "R_v", "c_pv", "c_1", "p_ref", "T_ref", "L_ref"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} > 0", f"{name}={getattr(self, name)}")
        for name in ("c_ev", "c_cd", "c_cn", "c_ac", "c_cr", "q_cn", "q_ac"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} > 0", f"{name}={getattr(self, name)}")
        if not self.q_vs_star >= 0:
            raise ValidationError("0 <= q_vs <= q_vs_star", f"q_vs_star={self.q_vs_star}")
        if self.V_r_mode not in V_R_MODES:
            raise ValidationError(f"V_r_mode in {V_R_MODES}", self.V_r_mode)
        if self.q_vs_mode not in Q_VS_MODES:
            raise ValidationError(f"q_vs_mode in {Q_VS_MODES}", self.q_vs_mode)
        if self.q_vs_mode == "constant" and not 0 <= self.q_vs <= self.q_vs_star:
            raise ValidationError(
                "0 <= q_vs <= q_vs_star", f"q_vs={self.q_vs}, q_vs_star={self.q_vs_star}"
            )
        return self

    @property
    def gamma(self) -> float:
        return gamma(self)

    def replace(self, **changes) -> "PhysParams":
        return dataclasses.replace(self, **changes).validate()

    def as_items(self) -> list[tuple[str, object]]:
        out = []
        for f in fields(self):
            key = "lambda" if f.name == "lam" else f.name
            out.append((key, getattr(self, f.name)))
        return out

    def digest(self) -> str:
        """Short hash identifying this parameter set in output artifacts."""
        text = "\n".join(f"{k}={_fmt(v)}" for k, v in self.as_items())
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class RunConfig:
    nx: int = 16
    ny: int = 16
    nz: int = 16
    t_end: float = 1.0
    dt: float | str = "auto"
    cfl: float = 0.5
    output_dir: str = "out"
    snapshot_every: int = 10
    mode: str = "eulerian"
    scheme: str = "imex1"
    rho_flux: str = "minmod"
    # initial condition: equilibrium (rho_bar, 0, T_bar, 0, 1, 0) plus a
    # bump of amplitude delta and a velocity field of amplitude u_amp
    rho_bar: float = 1.0
    T_bar: float = 1.0
    delta: float = 0.0
    u_amp: float = 0.0

    def validate(self) -> "RunConfig":
        for name in ("nx", "ny", "nz"):
            if getattr(self, name) < 4:
                raise ValidationError("nx, ny, nz >= 4", f"{name}={getattr(self, name)}")
        if not self.t_end > 0:
            raise ValidationError("t_end > 0", f"t_end={self.t_end}")
        if not 0 < self.cfl <= 1:
            raise ValidationError("cfl in (0, 1]", f"cfl={self.cfl}")
        if self.dt != "auto" and not (isinstance(self.dt, float) and self.dt > 0):
            raise ValidationError("dt > 0 or 'auto'", f"dt={self.dt}")
        if self.snapshot_every < 0:
            raise ValidationError("snapshot_every >= 0", f"{self.snapshot_every}")
        if self.mode not in RUN_MODES:
            raise ValidationError(f"mode in {RUN_MODES}", self.mode)
        if self.scheme not in SCHEMES:
            raise ValidationError(f"scheme in {SCHEMES}", self.scheme)
        if self.rho_flux not in RHO_FLUXES:
            raise ValidationError(f"rho_flux in {RHO_FLUXES}", self.rho_flux)
        if not self.rho_bar > 0:
            raise ValidationError("rho_bar > 0", f"rho_bar={self.rho_bar}")
        if not self.T_bar >= 0:
            raise ValidationError("T_bar >= 0", f"T_bar={self.T_bar}")
        return self

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def gamma(p: PhysParams) -> float:
    """Adiabatic exponent ``c_pd / (c_pd - R_d)``."""
    if not p.c_pd > p.R_d:
        raise ValidationError("c_pd > R_d", f"c_pd={p.c_pd}, R_d={p.R_d}")
    return p.c_pd / (p.c_pd - p.R_d)


def _fmt(v: object) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _key_table() -> dict[str, tuple[str, str, type]]:
    table = {}
    for cls, target in ((PhysParams, "phys"), (RunConfig, "run")):
        for f in fields(cls):
            key = "lambda" if f.name == "lam" else f.name
            table[key] = (target, f.name, f.type)
    return table


_KEYS = _key_table()


def _convert(key: str, raw: str, typ: str):
    if typ == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ParseError(f"{key}: expected a boolean, got {raw!r}")
    if typ == "int":
        try:
            return int(raw)
        except ValueError:
            raise ParseError(f"{key}: expected an integer, got {raw!r}") from None
    if typ == "float":
        try:
            return float(raw)
        except ValueError:
            raise ParseError(f"{key}: expected a number, got {raw!r}") from None
    if typ == "float | str":
        if raw == "auto":
            return raw
        try:
            return float(raw)
        except ValueError:
            raise ParseError(f"{key}: expected a number or 'auto', got {raw!r}") from None
    return raw


def parse_config(text: str) -> tuple[dict, dict]:
    """Split config text into raw ``PhysParams`` and ``RunConfig`` keyword dicts."""
    phys: dict = {}
    run: dict = {}
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") or "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if not key or not raw:
            raise ParseError(f"line {lineno}: empty key or value")
        if any(c in key for c in ".[]{} \t"):
            raise ParseError(f"line {lineno}: nested or malformed key {key!r}")
        if raw[0] in "[{":
            raise ParseError(f"line {lineno}: nested values are not supported")
        if key not in _KEYS:
            raise ParseError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ParseError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        target, name, typ = _KEYS[key]
        (phys if target == "phys" else run)[name] = _convert(key, raw, typ)
    return phys, run


def load_config(path: str | Path) -> tuple[PhysParams, RunConfig]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return loads_config(text)


def loads_config(text: str) -> tuple[PhysParams, RunConfig]:
    phys, run = parse_config(text)
    return PhysParams(**phys).validate(), RunConfig(**run).validate()


def dumps_config(params: PhysParams, cfg: RunConfig | None = None) -> str:
    lines = [f"{k} = {_fmt(v)}" for k, v in params.as_items()]
    if cfg is not None:
        lines += [f"{f.name} = {_fmt(getattr(cfg, f.name))}" for f in fields(cfg)]
    return "\n".join(lines) + "\n"
