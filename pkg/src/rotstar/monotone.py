"""Monotone (sub/supersolution) solver for the prescribed-entropy equation

    div(e^s grad w) + K e^(-s) w^q - f = 0,   0 < q < 1,

with zero boundary data on a ball. The ball radius and a positive radial
subsolution come from shooting on the radial comparison problem
u'' + (2/r) u' + A1 u^q - A2 = 0; a supersolution is built from a truncated
auxiliary problem; the solution is the limit of a nondecreasing shifted
fixed-point iteration bracketed between the two.

s here is the effective entropy (alpha already absorbed).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .eos import EosParams, RotationProfile
from .errors import (
    ConvergenceError,
    DomainError,
    HypothesisViolationError,
    RadiusNotFoundError,
    ShiftTooSmallError,
)
from .fields import (
    GridSpec,
    ScalarField,
    assemble_stiffness,
    fv_node_volumes,
    gradient_rz,
)


@dataclass
class MonotoneConfig:
    """Iteration controls plus the comparison-problem constants.

    a1 must bound K e^(-2s) from below and a2 must bound e^(-s) f from
    above; both are computed from field extrema when left unset. The shift
    makes the iteration map monotone; the automatic choice evaluates the
    nonlinearity's derivative at the smallest positive subsolution value.
    """

    tol: float = 1e-8
    max_iters: int = 200_000
    u0_multiplier: float = 4.0
    u0: float | None = None
    ball_radius_hint: float | None = None
    shooting_step: float = 1e-3
    a1: float | None = None
    a2: float | None = None
    shift: float | None = None
    pad_cells: int = 4
    ineq_check_coeff: float = 50.0
    symmetrize: bool | None = None


@dataclass
class MonotoneReport:
    iterations: int
    residual_history: list[float]
    bracket_gap: float
    solution: ScalarField
    positive: bool
    final_residual: float
    shift: float
    radius: float
    converged: bool
    extra: dict = field(default_factory=dict)


@dataclass
class SubsolutionResult:
    radius: float
    grid: GridSpec
    field: ScalarField
    a1: float
    a2: float
    u0: float
    check_tol: float
    min_inequality_residual: float


def shoot_radial_comparison(q: float, beta: float, step: float = 1e-3,
                            x_max: float = 60.0):
    """Integrate y'' + (2/x) y' + y^q - beta = 0, y(0) = 1, y'(0) = 0 to its
    first zero. Returns (x1, x_samples, y_samples); the profile is strictly
    decreasing, so x . grad y < 0 as the construction requires."""
    def rhs(x, y, dy):
        return dy, -2.0 / x * dy - max(y, 0.0) ** q + beta

    def rk4(x, y, dy, h):
        k1y, k1d = rhs(x, y, dy)
        k2y, k2d = rhs(x + h / 2, y + h / 2 * k1y, dy + h / 2 * k1d)
        k3y, k3d = rhs(x + h / 2, y + h / 2 * k2y, dy + h / 2 * k2d)
        k4y, k4d = rhs(x + h, y + h * k3y, dy + h * k3d)
        return (y + h / 6 * (k1y + 2 * k2y + 2 * k3y + k4y),
                dy + h / 6 * (k1d + 2 * k2d + 2 * k3d + k4d))

    ypp0 = (beta - 1.0) / 3.0
    x = step
    y = 1.0 + 0.5 * ypp0 * x * x
    dy = ypp0 * x
    xs, ys = [0.0, x], [1.0, y]
    crossed = False
    while x < x_max:
        y_new, dy_new = rk4(x, y, dy, step)
        if y_new <= 0.0:
            crossed = True
            break
        x += step
        y, dy = y_new, dy_new
        xs.append(x)
        ys.append(y)
    if not crossed:
        return None
    lo, hi = 0.0, step
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        ym, _ = rk4(x, y, dy, mid)
        if ym > 0.0:
            lo = mid
        else:
            hi = mid
    x1 = x + 0.5 * (lo + hi)
    xs.append(x1)
    ys.append(0.0)
    return x1, np.asarray(xs), np.asarray(ys)


def check_entropy_monotonicity(s: ScalarField) -> float:
    """Max of x . grad s on the grid; raises when positive beyond rounding."""
    s_r, s_z = gradient_rz(s)
    xds = s.grid.rmesh * s_r.values + s.grid.zmesh * s_z.values
    worst = float(xds.max())
    scale = float(np.abs(xds).max())
    if worst > 1e-8 * max(1.0, scale):
        raise HypothesisViolationError(
            f"entropy must satisfy x . grad s <= 0 (max violation {worst:.3g})")
    return worst


def _probe_box(fn, length: float, npts: int = 161) -> np.ndarray:
    r = np.linspace(0.0, length, npts)
    z = np.linspace(-length, length, 2 * npts - 1)
    return np.asarray(fn(r[:, None], z[None, :]), dtype=float)


def fitted_grid(radius: float, nr_inside: int, pad_cells: int) -> GridSpec:
    """Grid with the ball boundary exactly on a node and hr = hz, padded so
    emitted densities stay compactly supported inside the grid."""
    hr = radius / (nr_inside - 1)
    nr = nr_inside + pad_cells
    rmax = hr * (nr - 1)
    nz = 2 * (nr - 1) + 1
    return GridSpec(nr=nr, nz=nz, rmax=rmax, zmax=rmax)


def build_subsolution(s_eff_fn, f_fn, eos: EosParams,
                      config: MonotoneConfig | None = None,
                      nr_inside: int = 65) -> SubsolutionResult:
    """Ball radius and positive radial subsolution by shooting.

    s_eff_fn(r, z) and f_fn(r, z) are the effective-entropy and forcing
    rules. The constants A1 <= min K e^(-2s) and A2 >= max e^(-s) f are
    taken from extrema over a probe box that is re-tightened around the
    shot radius; the central amplitude is u0_multiplier times the smallest
    value with positive primitive, t* = ((q+1) A2 / A1)^(1/q).
    """
    config = config or MonotoneConfig()
    q = eos.q
    if not (0.0 < q < 1.0):
        raise DomainError("monotone solver requires 0 < q < 1 (gamma > 2)")

    box = config.ball_radius_hint or 10.0
    radius = None
    for _ in range(12):
        s_vals = _probe_box(s_eff_fn, box)
        f_vals = _probe_box(f_fn, box)
        a1 = config.a1 if config.a1 is not None else \
            eos.kconst * float(np.exp(-2.0 * s_vals).min())
        a2 = config.a2 if config.a2 is not None else \
            max(float((np.exp(-s_vals) * f_vals).max()), 0.0)
        if a2 > 0.0:
            t_star = ((q + 1.0) * a2 / a1) ** (1.0 / q)
            u0 = config.u0 if config.u0 is not None \
                else config.u0_multiplier * t_star
        else:
            u0 = config.u0 if config.u0 is not None else 1.0
        beta = a2 / (a1 * u0**q)
        shot = shoot_radial_comparison(q, beta, step=config.shooting_step)
        if shot is None:
            raise RadiusNotFoundError(
                f"radial shooting found no zero (u0 = {u0:.3g}, beta = {beta:.3g})")
        x1, xs, ys = shot
        length = 1.0 / math.sqrt(a1 * u0 ** (q - 1.0))
        radius = length * x1
        # retighten the probe box around the shot ball: the bounds stay valid
        # as long as the ball fits inside the box
        target_box = 1.5 * radius
        if radius <= box and abs(target_box - box) <= 0.1 * box:
            break
        if config.a1 is not None and config.a2 is not None and radius <= box:
            break
        box = target_box
    if radius > box:
        raise RadiusNotFoundError(
            "probe box did not settle around the shot ball radius")

    grid = fitted_grid(radius, nr_inside, config.pad_cells)
    u_vals = u0 * np.interp(grid.radius_mesh / length, xs, ys, right=0.0)
    u_vals = np.maximum(u_vals, 0.0)
    u_vals[grid.radius_mesh >= radius] = 0.0
    sub = ScalarField(grid, u_vals, "even")

    s_field = ScalarField.from_function(grid, s_eff_fn)
    f_field = ScalarField.from_function(grid, f_fn)
    check_entropy_monotonicity(s_field)

    scale_res = a1 * u0**q + a2
    h_rel = grid.hr / radius
    check_tol = config.ineq_check_coeff * h_rel**2 * scale_res
    res_min = _equation_residual_min(sub, s_field, f_field, eos, radius)
    if res_min < -check_tol:
        raise ConvergenceError(
            f"discrete subsolution inequality fails: min residual {res_min:.3g} "
            f"< -{check_tol:.3g}")

    return SubsolutionResult(radius=radius, grid=grid, field=sub, a1=a1, a2=a2,
                             u0=u0, check_tol=check_tol,
                             min_inequality_residual=res_min)


def _ball_mask(grid: GridSpec, radius: float) -> np.ndarray:
    return grid.radius_mesh < radius * (1.0 - 1e-12)


def _masked_operator(grid: GridSpec, s_vals: np.ndarray, radius: float):
    free = _ball_mask(grid, radius).ravel()
    s_mat = assemble_stiffness(grid, np.exp(s_vals))
    nu = fv_node_volumes(grid).ravel()
    return free, s_mat, nu


def _equation_residual_field(w: ScalarField, s: ScalarField, f: ScalarField,
                             eos: EosParams) -> np.ndarray:
    grid = w.grid
    s_mat = assemble_stiffness(grid, np.exp(s.values))
    nu = fv_node_volumes(grid).ravel()
    lap = (s_mat @ w.values.ravel()) / nu
    nonlin = eos.kconst * np.exp(-s.values.ravel()) \
        * np.maximum(w.values.ravel(), 0.0) ** eos.q
    return (lap + nonlin - f.values.ravel()).reshape(grid.nr, grid.nz)


def _equation_residual_min(w, s, f, eos, radius) -> float:
    res = _equation_residual_field(w, s, f, eos)
    mask = _ball_mask(w.grid, radius)
    return float(res[mask].min())


def hermite_truncated_power(t, c: float, q: float):
    """Smooth monotone g with g(t) = t^q for t >= c, 0 for t <= 0, and a
    cubic Hermite bridge on (0, c) whose slope stays within [0, 2 c^(q-1)]."""
    t = np.asarray(t, dtype=float)
    x = np.clip(t / c, 0.0, 1.0)
    bridge = c**q * ((3.0 - 2.0 * x) * x * x + q * (x * x * x - x * x))
    out = np.where(t >= c, np.maximum(t, c) ** q, bridge)
    return np.where(t <= 0.0, 0.0, out)


def build_supersolution(sub: ScalarField, s: ScalarField, f: ScalarField,
                        eos: EosParams, radius: float,
                        config: MonotoneConfig | None = None) -> ScalarField:
    """Supersolution u + C from the truncated auxiliary problem
    div(e^s grad u) + K e^(-s) g(u + C) + M = 0, u = 0 on the ball boundary,
    with C = max sub and M = max |f|, solved by Picard iteration on direct
    linear solves. The result dominates sub pointwise."""
    config = config or MonotoneConfig()
    q = eos.q
    grid = sub.grid
    c_cap = float(sub.values.max())
    if c_cap <= 0.0:
        raise DomainError("subsolution must be positive somewhere")
    m_cap = float(np.abs(f.values).max())

    free, s_mat, nu = _masked_operator(grid, s.values, radius)
    a_ff = s_mat[free][:, free].tocsc()
    solver = spla.splu(a_ff)

    ks = eos.kconst * np.exp(-s.values.ravel())[free]
    u = np.zeros(free.sum())
    prev_change = None
    stall = 0
    for _ in range(500):
        rhs = -(nu[free] * (ks * hermite_truncated_power(u + c_cap, c_cap, q)
                            + m_cap))
        u_new = solver.solve(rhs)
        change = float(np.abs(u_new - u).max())
        u = u_new
        if change <= 1e-13 * (1.0 + float(np.abs(u).max())):
            break
        if prev_change is not None and change > 0.99 * prev_change:
            stall += 1
            if stall >= 20:
                raise ConvergenceError(
                    "supersolution Picard iteration stagnated")
        else:
            stall = 0
        prev_change = change
    else:
        raise ConvergenceError("supersolution Picard iteration did not settle")

    if u.min() < -1e-10 * (1.0 + c_cap):
        raise ConvergenceError("auxiliary solution went negative")
    vals = np.full(grid.nr * grid.nz, c_cap)
    vals[free] += np.maximum(u, 0.0)
    super_field = ScalarField(grid, vals.reshape(grid.nr, grid.nz), "even")
    if np.any(super_field.values < sub.values):
        raise ConvergenceError("supersolution fails to dominate subsolution")
    return super_field


def monotone_solve(sub: ScalarField, super_: ScalarField, s: ScalarField,
                   f: ScalarField, eos: EosParams, radius: float,
                   config: MonotoneConfig | None = None) -> MonotoneReport:
    """Shifted monotone iteration from the subsolution.

    Each sweep solves (div(e^s grad .) - shift) w_new =
    -K e^(-s) w^q + f - shift w with zero boundary data; the iterates are
    nondecreasing and stay below the supersolution (hard-checked every
    sweep). Inner solves use a sparse direct factorization of the fixed
    shifted operator, well below the 1e-10 accuracy contract.
    """
    config = config or MonotoneConfig()
    grid = sub.grid
    q = eos.q

    if np.any(sub.values > super_.values):
        raise DomainError("bracket requires sub <= super pointwise")
    gap0 = float((super_.values - sub.values).max())
    if gap0 == 0.0:
        return MonotoneReport(
            iterations=0, residual_history=[], bracket_gap=0.0, solution=sub,
            positive=bool(np.all(sub.values[_ball_mask(grid, radius)] > 0.0)),
            final_residual=_equation_residual_abs(sub, s, f, eos, radius),
            shift=0.0, radius=radius, converged=True)

    free, s_mat, nu = _masked_operator(grid, s.values, radius)
    free2d = free.reshape(grid.nr, grid.nz)

    sub_free = sub.values.ravel()[free]
    positive_vals = sub_free[sub_free > 0.0]
    if config.shift is not None:
        shift = config.shift
    else:
        t_min = float(positive_vals.min()) if positive_vals.size else \
            float(super_.values.max())
        shift = q * eos.kconst * float(np.exp(-s.values).max()) \
            * t_min ** (q - 1.0)

    a_ff = (s_mat[free][:, free] - shift * sp.diags(nu[free])).tocsc()
    solver = spla.splu(a_ff)

    symmetrize = config.symmetrize
    if symmetrize is None:
        symmetrize = (s.z_even_defect() == 0.0 and f.z_even_defect() == 0.0)

    ks = eos.kconst * np.exp(-s.values.ravel())[free]
    f_free = f.values.ravel()[free]
    super_free = super_.values.ravel()[free]
    slack = 1e-10 * max(1.0, float(super_.values.max()))

    w_full = sub.values.copy().ravel()
    w = w_full[free]
    history: list[float] = []
    final_res = math.inf
    converged = False
    it = 0
    while it < config.max_iters:
        it += 1
        rhs = nu[free] * (-ks * np.maximum(w, 0.0) ** q + f_free - shift * w)
        w_new = solver.solve(rhs)
        if symmetrize:
            tmp = np.zeros_like(w_full)
            tmp[free] = w_new
            tmp2d = tmp.reshape(grid.nr, grid.nz)
            tmp2d = 0.5 * (tmp2d + tmp2d[:, ::-1])
            w_new = tmp2d.ravel()[free]
        drop = float((w - w_new).max())
        if drop > slack:
            raise ShiftTooSmallError(
                f"monotonicity violated by {drop:.3g}; retry with a larger shift",
                suggested_shift=4.0 * shift)
        over = float((w_new - super_free).max())
        if over > slack:
            raise ConvergenceError(
                f"iterate exceeded the supersolution by {over:.3g} (operator bug)")
        increment = float(np.abs(w_new - w).max())
        history.append(increment)
        w = w_new
        if increment <= config.tol:
            w_full[free] = w
            sol = ScalarField(grid, w_full.reshape(grid.nr, grid.nz), "even")
            final_res = _equation_residual_abs(sol, s, f, eos, radius)
            if final_res <= 10.0 * config.tol:
                converged = True
                break
    w_full[free] = w
    solution = ScalarField(grid, w_full.reshape(grid.nr, grid.nz), "even")
    if not converged:
        final_res = _equation_residual_abs(solution, s, f, eos, radius)
        raise ConvergenceError(
            f"monotone iteration did not reach residual 10*tol "
            f"(residual {final_res:.3g} after {it} sweeps)")

    return MonotoneReport(
        iterations=it,
        residual_history=history,
        bracket_gap=float((super_.values - solution.values).max()),
        solution=solution,
        positive=bool(np.all(solution.values[free2d] > 0.0)),
        final_residual=final_res,
        shift=shift,
        radius=radius,
        converged=True,
    )


def _equation_residual_abs(w, s, f, eos, radius) -> float:
    res = _equation_residual_field(w, s, f, eos)
    mask = _ball_mask(w.grid, radius)
    return float(np.abs(res[mask]).max())


def solve_monotone_problem(s_eff_fn, rotation: RotationProfile, eos: EosParams,
                           nr_inside: int = 65,
                           config: MonotoneConfig | None = None,
                           iteration_callback=None):
    """End-to-end pipeline: shoot the ball, build the bracket, iterate.

    Returns (report, context) where context carries the sampled fields and
    the bracket for downstream diagnostics.
    """
    config = config or MonotoneConfig()
    if rotation.kind == "sampled":
        raise DomainError("the monotone pipeline needs a rule-based rotation "
                          "profile (constant, rigid-squared, rational)")

    def f_fn(r, z):
        om2 = rotation.omega2_rule(r)
        dom2 = rotation.domega2_dr_rule(r) if rotation.domega2_dr_rule is not None \
            else _numeric_radial_derivative(rotation.omega2_rule, r)
        return np.broadcast_to(2.0 * om2 + r * dom2, np.broadcast(r, z).shape)

    sub_res = build_subsolution(s_eff_fn, f_fn, eos, config, nr_inside)
    grid = sub_res.grid
    s_field = ScalarField.from_function(grid, s_eff_fn)
    f_field = rotation.forcing_on(grid)
    super_field = build_supersolution(sub_res.field, s_field, f_field, eos,
                                      sub_res.radius, config)
    report = monotone_solve(sub_res.field, super_field, s_field, f_field, eos,
                            sub_res.radius, config)
    if iteration_callback is not None:
        for k, inc in enumerate(report.residual_history):
            iteration_callback(k, inc)
    context = {
        "sub": sub_res,
        "super": super_field,
        "s_field": s_field,
        "f_field": f_field,
        "grid": grid,
    }
    return report, context


def _numeric_radial_derivative(rule, r, h: float = 1e-6):
    r = np.asarray(r, dtype=float)
    return (np.asarray(rule(r + h)) - np.asarray(rule(np.maximum(r - h, 0.0)))) \
        / (h + np.minimum(r, h))
