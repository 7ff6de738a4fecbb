"""Lane-Emden polytropes: the independent radial reference solutions.

theta'' + (2/xi) theta' + theta^n = 0, theta(0) = 1, theta'(0) = 0. These
validate the gravity operator and both elliptic solvers in the spherical,
zero-rotation, constant-entropy limit, where the enthalpy-like unknown w is
proportional to theta with the polytropic index n equal to q.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NoZeroCrossingError, NotSphericalError
from .fields import ScalarField

_XI_MAX_DEFAULT = 50.0


@dataclass(frozen=True)
class PolytropeSolution:
    n: float
    xi: np.ndarray
    theta: np.ndarray
    dtheta: np.ndarray
    xi1: float
    dtheta_at_xi1: float

    def theta_at(self, xi) -> np.ndarray:
        """Linear interpolation of theta; zero beyond the first zero."""
        return np.interp(np.asarray(xi, float), self.xi, self.theta,
                         left=1.0, right=0.0)

    def mass_integral(self) -> float:
        """int_0^xi1 theta^n xi^2 dxi by Simpson plus an analytic tail.

        The tail handles the (xi1 - xi)^n behavior of theta^n at the surface,
        where composite rules lose accuracy for fractional n.
        """
        xi, th = self.xi, np.maximum(self.theta, 0.0)
        f = th**self.n * xi * xi
        k = len(xi) - 1 if (len(xi) - 1) % 2 == 0 else len(xi) - 2
        h = xi[1] - xi[0]
        total = h / 3.0 * (f[0] + f[k] + 4.0 * f[1:k:2].sum() + 2.0 * f[2:k:2].sum())
        if k != len(xi) - 1:
            total += 0.5 * (f[k] + f[k + 1]) * h
        # analytic tail over [xi[-1], xi1] with theta ~ |slope| (xi1 - xi)
        gap = self.xi1 - xi[-1]
        if gap > 0:
            slope = abs(self.dtheta_at_xi1)
            total += self.xi1**2 * slope**self.n * gap ** (self.n + 1.0) / (self.n + 1.0)
        return float(total)


def _rhs(xi: float, theta: float, dtheta: float, n: float):
    tn = max(theta, 0.0) ** n
    return dtheta, -2.0 / xi * dtheta - tn


def _rk4_step(xi, theta, dtheta, h, n):
    k1t, k1d = _rhs(xi, theta, dtheta, n)
    k2t, k2d = _rhs(xi + 0.5 * h, theta + 0.5 * h * k1t, dtheta + 0.5 * h * k1d, n)
    k3t, k3d = _rhs(xi + 0.5 * h, theta + 0.5 * h * k2t, dtheta + 0.5 * h * k2d, n)
    k4t, k4d = _rhs(xi + h, theta + h * k3t, dtheta + h * k3d, n)
    return (theta + h / 6.0 * (k1t + 2 * k2t + 2 * k3t + k4t),
            dtheta + h / 6.0 * (k1d + 2 * k2d + 2 * k3d + k4d))


def lane_emden_solve(n: float, step: float = 1e-3,
                     xi_max: float = _XI_MAX_DEFAULT) -> PolytropeSolution:
    """Integrate the Lane-Emden equation to its first zero.

    Fixed-step RK4 with a series start near xi = 0
    (theta = 1 - xi^2/6 + n xi^4/120); the zero is located by bisection on
    a trial RK4 step from the last positive state, to 1e-10 in xi.
    """
    if n < 0:
        raise DomainError("polytropic index must be nonnegative")
    xi0 = step
    theta = 1.0 - xi0**2 / 6.0 + n * xi0**4 / 120.0
    dtheta = -xi0 / 3.0 + n * xi0**3 / 30.0

    xs = [0.0, xi0]
    ts = [1.0, theta]
    ds = [0.0, dtheta]

    xi = xi0
    crossed = False
    while xi < xi_max:
        th_new, dt_new = _rk4_step(xi, theta, dtheta, step, n)
        xi += step
        if th_new <= 0.0:
            crossed = True
            break
        theta, dtheta = th_new, dt_new
        xs.append(xi)
        ts.append(theta)
        ds.append(dtheta)
    if not crossed:
        raise NoZeroCrossingError(
            f"theta never crossed zero up to xi = {xi_max} (n = {n})")

    # bisect the step length from the last positive state
    lo, hi = 0.0, step
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        th_mid, _ = _rk4_step(xs[-1], ts[-1], ds[-1], mid, n)
        if th_mid > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    h_star = 0.5 * (lo + hi)
    xi1 = xs[-1] + h_star
    _, dtheta1 = _rk4_step(xs[-1], ts[-1], ds[-1], h_star, n)

    return PolytropeSolution(
        n=n, xi=np.asarray(xs), theta=np.asarray(ts), dtheta=np.asarray(ds),
        xi1=float(xi1), dtheta_at_xi1=float(dtheta1))


def scale_factor(sol: PolytropeSolution, w_center: float, eos,
                 s_const: float = 0.0) -> float:
    """A in w(x) = w_c theta(A |x|): substituting into
    Delta w + K exp(-2 s) w^q = 0 gives A^2 = K exp(-2 s) w_c^(q-1)."""
    return math.sqrt(eos.kconst * math.exp(-2.0 * s_const)
                     * w_center ** (eos.q - 1.0))


def compare_with_field(sol: PolytropeSolution, w: ScalarField, eos,
                       s_const: float = 0.0,
                       spherical_tol: float = 0.01) -> float:
    """Max relative deviation of w from the scaled polytrope inside half the
    star radius (normalized by the central value).

    Requires an approximately spherical field: the equatorial and axial
    profiles must agree within spherical_tol * w_center, exploiting the
    solver grids' common hr = hz spacing.
    """
    if sol.n != eos.q:
        raise DomainError("polytrope index must equal q of the active EOS")
    grid = w.grid
    if grid.nz % 2 == 0:
        raise DomainError("comparison needs a node at z = 0")
    jc = grid.nz // 2
    w_c = float(w.values[0, jc])
    if w_c <= 0.0:
        raise DomainError("field must be positive at the center")

    a_scale = scale_factor(sol, w_c, eos, s_const)
    r_star = sol.xi1 / a_scale

    if abs(grid.hr - grid.hz) > 1e-12 * grid.hr:
        raise DomainError("sphericity check expects hr = hz")
    ncmp = min(grid.nr, grid.nz - jc)
    eq_prof = w.values[:ncmp, jc]
    ax_prof = 0.5 * (w.values[0, jc:jc + ncmp] + w.values[0, jc::-1][:ncmp])
    inside = grid.r[:ncmp] <= r_star
    dev_sph = float(np.max(np.abs(eq_prof[inside] - ax_prof[inside]))) / w_c
    if dev_sph > spherical_tol:
        raise NotSphericalError(
            f"field deviates from spherical symmetry by {dev_sph:.3g}")

    half = grid.radius_mesh <= 0.5 * r_star
    oracle = w_c * sol.theta_at(a_scale * grid.radius_mesh[half])
    return float(np.max(np.abs(w.values[half] - oracle)) / w_c)
