"""Newtonian potential of axisymmetric densities via ring-kernel integration.

B rho(x) = int rho(y)/|x - y| dy with G = 1, so B rho >= 0 for rho >= 0 and
Delta(B rho) = -4 pi rho. The azimuthal integral reduces the 1/|x-y| kernel
to a complete elliptic integral of the first kind; the parameter convention
is m (not the modulus k): K(m) = int_0^{pi/2} dt / sqrt(1 - m sin^2 t).
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import DomainError, SupportViolationError
from .fields import (
    GridSpec,
    ScalarField,
    div_weighted_grad,
    erode_mask,
    gradient_rz,
    integrate_axisym,
)


def thread_count(requested: int | None = None) -> int:
    """Worker count: explicit argument, else ROTSTAR_THREADS, else all cores."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("ROTSTAR_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def complete_elliptic_k(m):
    """K(m) by arithmetic-geometric-mean iteration, 0 <= m < 1.

    Converges quadratically; the loop exits below 1e-15 relative spread,
    comfortably inside the 1e-14 contract.
    """
    m_arr = np.asarray(m, dtype=float)
    if np.any(m_arr < 0.0) or np.any(m_arr >= 1.0):
        raise DomainError("complete_elliptic_k requires 0 <= m < 1")
    a = np.ones_like(m_arr)
    b = np.sqrt(1.0 - m_arr)
    for _ in range(40):
        a, b = 0.5 * (a + b), np.sqrt(a * b)
        if np.max(np.abs(a - b)) <= 1e-16 * np.max(a):
            break
    out = math.pi / (2.0 * a)
    if np.isscalar(m) or np.ndim(m) == 0:
        return float(out)
    return out


@dataclass(frozen=True, eq=False)
class PotentialResult:
    """Potential B rho with its gradient and the source mass int rho dV."""

    potential: ScalarField
    gradient: tuple[ScalarField, ScalarField]
    source_mass: float

    def farfield_relative_error(self) -> float:
        """Max relative deviation of B from M/|x| at the grid corners."""
        g = self.potential.grid
        d = math.hypot(g.rmax, g.zmax)
        ref = self.source_mass / d
        got = [self.potential.values[-1, 0], self.potential.values[-1, -1]]
        return float(max(abs(v - ref) / ref for v in got))


def _ring_kernel_block(rt: float, rs: np.ndarray, dz: np.ndarray,
                       it: int, hr: float, hz: float) -> np.ndarray:
    """Kernel 4 K(m) / sqrt((rt+rs)^2 + dz^2) for one target radius.

    The exact self entry (rs = rt, dz = 0) is replaced by the analytic
    average of the log-singular kernel over a disk of the cell's area,
    which removes the O(h log h) bias of skipping the cell.
    """
    denom2 = (rt + rs[:, None]) ** 2 + dz[None, :] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        m = 4.0 * rt * rs[:, None] / denom2
    jc = dz.size // 2  # index of dz = 0
    self_entry = rt > 0.0
    if self_entry:
        m[it, jc] = 0.0  # placeholder; replaced below
    else:
        m[0, jc] = 0.0  # 0/0 on the axis; zero source weight there anyway
    kvals = complete_elliptic_k(np.clip(m, 0.0, 1.0 - 1e-300))
    with np.errstate(divide="ignore", invalid="ignore"):
        kern = 4.0 * kvals / np.sqrt(denom2)
    if self_entry:
        a_eq = math.sqrt(hr * hz / math.pi)
        kern[it, jc] = (math.log(8.0 * rt / a_eq) + 0.5) / rt
    else:
        kern[0, jc] = 0.0
    return kern


def potential_axisym(rho: ScalarField, threads: int | None = None) -> PotentialResult:
    """B rho at every node by quadrature over source nodes.

    rho must be nonnegative and compactly supported inside the grid (zero on
    the outer two node layers); the integral form imposes the free-space
    boundary condition exactly. Target rows are independent, so the loop
    parallelizes over them with per-row writes (bit-identical results for
    any worker count).
    """
    grid = rho.grid
    vals = rho.values
    if np.any(vals < 0.0):
        raise DomainError("potential_axisym requires nonnegative density")
    if np.any(vals[-2:, :] != 0.0) or np.any(vals[:, :2] != 0.0) \
            or np.any(vals[:, -2:] != 0.0):
        raise SupportViolationError(
            "density support touches the outer two node layers")

    hr, hz = grid.hr, grid.hz
    wr = np.full(grid.nr, hr)
    wr[0] = wr[-1] = 0.5 * hr
    wz = np.full(grid.nz, hz)
    wz[0] = wz[-1] = 0.5 * hz
    src = vals * grid.r[:, None] * wr[:, None] * wz[None, :]

    dz = hz * np.arange(-(grid.nz - 1), grid.nz)
    rs = grid.r

    def rows(block):
        out = np.empty((len(block), grid.nz))
        for k, it in enumerate(block):
            kern = _ring_kernel_block(rs[it], rs, dz, it, hr, hz)
            conv = fftconvolve(src, kern, mode="full", axes=1)
            out[k, :] = conv[:, grid.nz - 1:2 * grid.nz - 1].sum(axis=0)
        return out

    nworkers = thread_count(threads)
    pot = np.empty_like(vals)
    blocks = np.array_split(np.arange(grid.nr), min(nworkers * 4, grid.nr))
    if nworkers == 1:
        results = [rows(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=nworkers) as pool:
            results = list(pool.map(rows, blocks))
    for block, res in zip(blocks, results):
        pot[block, :] = res

    b_field = ScalarField(grid, pot, "even")
    grad = gradient_rz(b_field)
    return PotentialResult(potential=b_field, gradient=grad,
                           source_mass=integrate_axisym(rho))


def poisson_residual(result: PotentialResult, rho: ScalarField) -> float:
    """Interior max of |Delta_axisym(B rho) + 4 pi rho| / (4 pi max rho).

    Restricted to nodes at least 3 cells from the support boundary (on both
    sides) and 3 cells from the grid edge, where the second differences of
    the kernel-integrated potential are meaningful.
    """
    grid = rho.grid
    if result.potential.grid != grid:
        raise DomainError("potential and density grids differ")
    lap = div_weighted_grad(result.potential, ScalarField.constant(grid, 1.0))
    res = np.abs(lap.values + 4.0 * math.pi * rho.values)

    support = rho.values > 0.0
    deep = erode_mask(support, 3) | erode_mask(~support, 3)
    inner = np.zeros_like(support)
    inner[3:-3, 3:-3] = True
    mask = deep & inner
    if not mask.any():
        raise DomainError("no evaluation nodes remain after erosion")
    return float(res[mask].max() / (4.0 * math.pi * rho.values.max()))


# ---------------------------------------------------------------------------
# closed-form references
# ---------------------------------------------------------------------------

def uniform_ball_potential(radius: float, rho0: float, r, z):
    """Shell-theorem potential of a uniform ball (G = 1)."""
    d = np.hypot(np.asarray(r, float), np.asarray(z, float))
    mass = 4.0 / 3.0 * math.pi * rho0 * radius**3
    inside = 2.0 * math.pi * rho0 * (radius**2 - d**2 / 3.0)
    with np.errstate(divide="ignore"):
        outside = mass / np.where(d > 0, d, np.inf)
    return np.where(d <= radius, inside, outside)


def ellipsoid_potential(a: float, b: float, power: float, rho_c: float,
                        r, z, nquad: int = 240):
    """Potential and gradient of rho = rho_c (1 - r^2/a^2 - z^2/b^2)_+^power.

    Homoeoid reduction of the volume integral: with m2(u) = r^2/(a^2+u) +
    z^2/(b^2+u) and Delta(u) = (a^2+u) sqrt(b^2+u),

        B(x)   = pi a^2 b rho_c/(n+1) int_L (1 - m2(u))_+^(n+1) / Delta du,
        B_r(x) = -2 pi a^2 b rho_c r int_L (1 - m2(u))_+^n / ((a^2+u) Delta) du,

    (B_z analogous with b^2+u), where L = 0 inside the body and the
    ellipsoidal coordinate lambda(x) outside. The substitution
    u = L + b^2 tan^2(t) makes the integrand smooth on [0, pi/2); fixed
    Gauss-Legendre quadrature then converges to near machine accuracy.

    Returns (B, B_r, B_z) as arrays shaped like r.
    """
    n = float(power)
    if n < 0:
        raise DomainError("power must be nonnegative")
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    shape = np.broadcast(r, z).shape
    rr = np.broadcast_to(r, shape).ravel()
    zz = np.broadcast_to(z, shape).ravel()

    m2_origin = rr**2 / a**2 + zz**2 / b**2
    lam = np.zeros_like(rr)
    outside = m2_origin > 1.0
    if outside.any():
        p = a**2 + b**2 - rr[outside] ** 2 - zz[outside] ** 2
        qq = a**2 * b**2 - rr[outside] ** 2 * b**2 - zz[outside] ** 2 * a**2
        lam[outside] = 0.5 * (-p + np.sqrt(p * p - 4.0 * qq))

    t, wt = np.polynomial.legendre.leggauss(nquad)
    t = 0.5 * (t + 1.0) * (math.pi / 2.0)
    wt = wt * (math.pi / 4.0)
    tan2 = np.tan(t) ** 2
    dudt = 2.0 * b**2 * np.tan(t) / np.cos(t) ** 2

    pot = np.empty_like(rr)
    gr = np.empty_like(rr)
    gz = np.empty_like(rr)
    pref = math.pi * a**2 * b * rho_c

    chunk = max(1, 2_000_000 // nquad)
    for k0 in range(0, rr.size, chunk):
        sl = slice(k0, k0 + chunk)
        u = lam[sl, None] + b**2 * tan2[None, :]
        au = a**2 + u
        bu = b**2 + u
        delta = au * np.sqrt(bu)
        one_m = np.maximum(1.0 - rr[sl, None] ** 2 / au - zz[sl, None] ** 2 / bu, 0.0)
        base = one_m**n / delta * dudt[None, :]
        pot[sl] = (pref / (n + 1.0)) * (base * one_m) @ wt
        gr[sl] = -2.0 * pref * rr[sl] * ((base / au) @ wt)
        gz[sl] = -2.0 * pref * zz[sl] * ((base / bu) @ wt)

    return pot.reshape(shape), gr.reshape(shape), gz.reshape(shape)


def ellipsoid_mass(a: float, b: float, power: float, rho_c: float = 1.0) -> float:
    """Closed-form mass of rho_c (1 - r^2/a^2 - z^2/b^2)_+^power."""
    n = float(power)
    return (2.0 * math.pi * rho_c * a * a * b
            * math.gamma(1.5) * math.gamma(n + 1.0) / math.gamma(n + 2.5))


def ellipsoid_potential_result(grid: GridSpec, a: float, b: float, power: float,
                               rho_c: float = 1.0, nquad: int = 240) -> PotentialResult:
    """Closed-form PotentialResult for the ellipsoid density family."""
    pot, gr, gz = ellipsoid_potential(a, b, power, rho_c, grid.rmesh, grid.zmesh,
                                      nquad=nquad)
    gr[0, :] = 0.0  # exact on the axis (B is even in r)
    return PotentialResult(
        potential=ScalarField(grid, pot, "even"),
        gradient=(ScalarField(grid, gr, "odd"), ScalarField(grid, gz, "even")),
        source_mass=ellipsoid_mass(a, b, power, rho_c),
    )
