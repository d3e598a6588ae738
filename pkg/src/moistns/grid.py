"""Cell-centred grid on the unit box and second-order stencil operators.

Fields are plain numpy arrays of shape ``(nx, ny, nz)`` (scalars) or
``(3, nx, ny, nz)`` (vectors). Horizontal directions are periodic; the
vertical walls sit on the faces ``z = 0`` and ``z = 1`` and are handled
through ghost cells filled according to a :class:`BC`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft as sfft


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    nz: int

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 4:
            raise ValueError("grid needs at least 4 cells per direction")

    @classmethod
    def cube(cls, n: int) -> "Grid":
        return cls(n, n, n)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def hx(self) -> float:
        return 1.0 / self.nx

    @property
    def hy(self) -> float:
        return 1.0 / self.ny

    @property
    def hz(self) -> float:
        return 1.0 / self.nz

    @property
    def spacing(self) -> tuple[float, float, float]:
        return (self.hx, self.hy, self.hz)

    @property
    def h(self) -> float:
        return min(self.spacing)

    @property
    def cell_volume(self) -> float:
        return self.hx * self.hy * self.hz

    @cached_property
    def centers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """1-D cell-centre coordinates along x, y, z."""
        return tuple((np.arange(n) + 0.5) / n for n in self.shape)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcast 3-D coordinate arrays ``(X, Y, Z)``."""
        x, y, z = self.centers
        return tuple(np.broadcast_to(a, self.shape).copy() for a in np.meshgrid(x, y, z, indexing="ij"))

    def zeros(self, *lead: int) -> np.ndarray:
        return np.zeros(lead + self.shape)

    def full(self, value: float) -> np.ndarray:
        return np.full(self.shape, float(value))


@dataclass(frozen=True)
class BC:
    """Vertical boundary condition of a field.

    ``neumann``: ``d/dz f = g_l`` on the lower and ``g_u`` on the upper wall
    (scalars or ``(nx, ny)`` arrays). ``dirichlet0``: ``f = 0`` on both walls.
    ``extrap``: no wall condition; ghosts continue the field linearly, used
    for quantities without a boundary condition of their own (``rho_d``).
    """

    kind: str
    g_u: object = 0.0
    g_l: object = 0.0

    def __post_init__(self):
        if self.kind not in ("neumann", "dirichlet0", "extrap", "none"):
            raise ValueError(f"unknown bc kind {self.kind!r}")

    @property
    def homogeneous(self) -> bool:
        if self.kind != "neumann":
            return True
        return not (np.any(self.g_u) or np.any(self.g_l))


NEUMANN0 = BC("neumann")
DIRICHLET0 = BC("dirichlet0")
EXTRAP = BC("extrap")


def pad(f: np.ndarray, grid: Grid, bc: BC, width: int = 1) -> np.ndarray:
    """Return ``f`` extended by ``width`` ghost layers on every side.

    Works on scalars and on stacks of scalars (leading axes are kept).
    """
    if bc.kind == "none":
        raise ValueError("field has no boundary condition; ghost values undefined")
    nx, ny, nz = f.shape[-3:]
    w = width
    lead = f.shape[:-3]
    out = np.empty(lead + (nx + 2 * w, ny + 2 * w, nz + 2 * w))
    c = out[..., w:nx + w, w:ny + w, :]
    c[..., w:nz + w] = f
    hz = grid.hz
    for j in range(1, w + 1):
        lo = f[..., j - 1]
        hi = f[..., nz - j]
        if bc.kind == "dirichlet0":
            c[..., w - j] = -lo
            c[..., nz + w - 1 + j] = -hi
        elif bc.kind == "extrap":
            c[..., w - j] = f[..., 0] + j * (f[..., 0] - f[..., 1])
            c[..., nz + w - 1 + j] = f[..., -1] + j * (f[..., -1] - f[..., -2])
        else:
            d = (2 * j - 1) * hz
            c[..., w - j] = lo - d * np.asarray(bc.g_l)
            c[..., nz + w - 1 + j] = hi + d * np.asarray(bc.g_u)
    # periodic wrap in x, then in y (the y-wrap also fills the corners)
    out[..., :w, w:ny + w, :] = c[..., nx - w:nx, :, :]
    out[..., nx + w:, w:ny + w, :] = c[..., :w, :, :]
    out[..., :, :w, :] = out[..., :, ny:ny + w, :]
    out[..., :, ny + w:, :] = out[..., :, w:2 * w, :]
    return out


def _inner(fp: np.ndarray, w: int = 1) -> tuple:
    return (Ellipsis, slice(w, -w), slice(w, -w), slice(w, -w))


def _shift(w: int, axis: int, s: int) -> tuple:
    sl = [slice(w, -w)] * 3
    sl[axis] = slice(w + s, (-w + s) or None)
    return (Ellipsis, *sl)


def d1(fp: np.ndarray, grid: Grid, axis: int, w: int = 1) -> np.ndarray:
    """Centred first derivative of a padded array along ``axis``."""
    h = grid.spacing[axis]
    return (fp[_shift(w, axis, 1)] - fp[_shift(w, axis, -1)]) / (2 * h)


def d2(fp: np.ndarray, grid: Grid, axis: int, w: int = 1) -> np.ndarray:
    """Compact second derivative of a padded array along ``axis``."""
    h = grid.spacing[axis]
    out = fp[_shift(w, axis, 1)] + fp[_shift(w, axis, -1)]
    out -= 2 * fp[_inner(fp, w)]
    out *= 1.0 / (h * h)
    return out


def dmixed(fp: np.ndarray, grid: Grid, a: int, b: int, w: int = 1) -> np.ndarray:
    """Centred mixed derivative d^2/(da db), a != b, of a padded array."""
    sl = {}
    for sa in (1, -1):
        for sb in (1, -1):
            s = [slice(w, -w)] * 3
            s[a] = slice(w + sa, (-w + sa) or None)
            s[b] = slice(w + sb, (-w + sb) or None)
            sl[sa, sb] = (Ellipsis, *s)
    ha, hb = grid.spacing[a], grid.spacing[b]
    return (fp[sl[1, 1]] - fp[sl[1, -1]] - fp[sl[-1, 1]] + fp[sl[-1, -1]]) / (4 * ha * hb)


def grad(f: np.ndarray, grid: Grid, bc: BC = NEUMANN0) -> np.ndarray:
    """Gradient of a scalar field, shape ``(3, nx, ny, nz)``."""
    fp = pad(f, grid, bc)
    out = np.empty((3,) + f.shape)
    for a in range(3):
        out[a] = d1(fp, grid, a)
    return out


def div(v: np.ndarray, grid: Grid, bc: BC = DIRICHLET0) -> np.ndarray:
    """Divergence of a vector field."""
    vp = pad(v, grid, bc)
    return (d1(vp[0], grid, 0) + d1(vp[1], grid, 1)) + d1(vp[2], grid, 2)


def laplacian(f: np.ndarray, grid: Grid, bc: BC = NEUMANN0) -> np.ndarray:
    """7-point Laplacian; vectors are handled componentwise."""
    fp = pad(f, grid, bc)
    return (d2(fp, grid, 0) + d2(fp, grid, 1)) + d2(fp, grid, 2)


def hessian(f: np.ndarray, grid: Grid, bc: BC = NEUMANN0) -> np.ndarray:
    """Second-derivative tensor ``H[k, l] = d^2 f / dk dl``, shape ``(3, 3, ...)``."""
    fp = pad(f, grid, bc)
    out = np.empty((3, 3) + f.shape)
    for k in range(3):
        out[k, k] = d2(fp, grid, k)
        for l in range(k + 1, 3):
            out[k, l] = out[l, k] = dmixed(fp, grid, k, l)
    return out


def jacobian(v: np.ndarray, grid: Grid, bc: BC = DIRICHLET0) -> np.ndarray:
    """``J[i, l] = d v_i / d x_l`` for a vector field, shape ``(3, 3, ...)``."""
    vp = pad(v, grid, bc)
    out = np.empty((3, 3) + v.shape[1:])
    for i in range(3):
        for l in range(3):
            out[i, l] = d1(vp[i], grid, l)
    return out


def lame(u: np.ndarray, grid: Grid, mu: float, lam: float) -> np.ndarray:
    """``mu * lap(u) + (mu + lam) * grad(div(u))`` for a no-slip velocity."""
    out = mu * laplacian(u, grid, DIRICHLET0)
    if mu + lam != 0:
        out = out + (mu + lam) * grad(div(u, grid, DIRICHLET0), grid, NEUMANN0)
    return out


def neumann_boundary_source(grid: Grid, bc: BC) -> np.ndarray:
    """Affine part of :func:`laplacian` coming from non-zero Neumann data.

    ``laplacian(f, bc) == laplacian(f, NEUMANN0) + neumann_boundary_source(bc)``.
    """
    out = grid.zeros()
    if bc.kind != "neumann":
        return out
    hz = grid.hz
    out[..., 0] -= np.asarray(bc.g_l) / hz
    out[..., -1] += np.asarray(bc.g_u) / hz
    return out


# -- spectral solver for the constant-coefficient Helmholtz operator ---------

def _eig_periodic(n: int, h: float) -> np.ndarray:
    m = np.arange(n)
    return -4.0 / h**2 * np.sin(np.pi * m / n) ** 2


def _eig_wall(n: int, h: float, bc: BC) -> np.ndarray:
    if bc.kind == "neumann":
        m = np.arange(n)
    else:
        m = np.arange(1, n + 1)
    return -4.0 / h**2 * np.sin(np.pi * m / (2 * n)) ** 2


@lru_cache(maxsize=64)
def _helmholtz_symbol(grid: Grid, kind: str) -> np.ndarray:
    bc = BC(kind)
    return (
        _eig_periodic(grid.nx, grid.hx)[:, None, None]
        + _eig_periodic(grid.ny, grid.hy)[: grid.ny // 2 + 1][None, :, None]
        + _eig_wall(grid.nz, grid.hz, bc)[None, None, :]
    )


def helmholtz_spectral(b: np.ndarray, grid: Grid, c: float, bc: BC) -> np.ndarray:
    """Exact solve of ``(I - c * laplacian_h) x = b`` with homogeneous walls.

    Horizontal FFT, vertical DCT-II (mirror ghosts) or DST-II (odd ghosts).
    Vector inputs are solved componentwise.
    """
    tr, itr = (sfft.dct, sfft.idct) if bc.kind == "neumann" else (sfft.dst, sfft.idst)
    lam = _helmholtz_symbol(grid, bc.kind)
    bh = sfft.rfft2(tr(b, type=2, axis=-1, norm="ortho"), axes=(-3, -2))
    bh /= 1.0 - c * lam
    x = sfft.irfft2(bh, s=(grid.nx, grid.ny), axes=(-3, -2))
    return itr(x, type=2, axis=-1, norm="ortho")
