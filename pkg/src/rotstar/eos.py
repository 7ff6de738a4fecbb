"""Polytropic equation of state, the w <-> rho change of variables, rotation
profiles with their induced forcing, and the isentropic Bernoulli diagnostic.

Units fix the gravitational constant G = 1 throughout. Solvers work with an
"effective entropy" (the user entropy scaled by alpha = 1/gamma); the pure
EOS maps below take the user entropy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, HypothesisViolationError
from .fields import GridSpec, ScalarField, StarDomain, gradient_rz, _check_same_grid

REGIME_MONOTONE = "monotone"
REGIME_VARIATIONAL = "variational"
REGIME_UNSUPPORTED = "unsupported"


@dataclass(frozen=True)
class EosParams:
    """Adiabatic index gamma and the derived constants q, alpha, K."""

    gamma: float
    q: float
    alpha: float
    kconst: float
    regime: str

    def __post_init__(self):
        if not (self.q > 0 and self.alpha > 0 and self.kconst > 0):
            raise DomainError("q, alpha, kconst must be strictly positive")


def derived_constants(gamma: float) -> EosParams:
    """Constants of the change of variables: q = 1/(g-1), alpha = 1/g,
    K = 4 pi ((g-1)/g)^(1/(g-1)), with the solver regime flag."""
    gamma = float(gamma)
    if gamma <= 1.0:
        raise DomainError("adiabatic index must satisfy gamma > 1")
    q = 1.0 / (gamma - 1.0)
    alpha = 1.0 / gamma
    kconst = 4.0 * math.pi * ((gamma - 1.0) / gamma) ** q
    if 0.0 < q < 1.0:
        regime = REGIME_MONOTONE
    elif 1.0 < q < 3.0:
        regime = REGIME_VARIATIONAL
    else:
        regime = REGIME_UNSUPPORTED
    return EosParams(gamma=gamma, q=q, alpha=alpha, kconst=kconst, regime=regime)


def _entropy_values(s, grid: GridSpec) -> np.ndarray:
    if isinstance(s, ScalarField):
        if s.grid != grid:
            raise DomainError("entropy field lives on a different grid")
        return s.values
    return np.full((grid.nr, grid.nz), float(s))


def rho_to_w(rho: ScalarField, s, eos: EosParams) -> ScalarField:
    """w = g/(g-1) exp(((g-1)/g) s) rho^(g-1); zero exactly where rho is."""
    if np.any(rho.values < 0.0):
        raise DomainError("rho_to_w requires nonnegative density")
    g = eos.gamma
    sv = _entropy_values(s, rho.grid)
    w = (g / (g - 1.0)) * np.exp((g - 1.0) / g * sv) * rho.values ** (g - 1.0)
    return rho.with_values(w)


def w_to_rho(w: ScalarField, s, eos: EosParams) -> ScalarField:
    """Inverse transform; exact round trip with rho_to_w up to rounding."""
    if np.any(w.values < 0.0):
        raise DomainError("w_to_rho requires nonnegative w")
    g = eos.gamma
    sv = _entropy_values(s, w.grid)
    rho = ((g - 1.0) / g * np.exp(-(g - 1.0) / g * sv) * w.values) ** eos.q
    return w.with_values(rho)


def pressure_from_state(rho: ScalarField, s, eos: EosParams) -> ScalarField:
    """p = exp(s) rho^gamma."""
    if np.any(rho.values < 0.0):
        raise DomainError("pressure_from_state requires nonnegative density")
    sv = _entropy_values(s, rho.grid)
    return rho.with_values(np.exp(sv) * rho.values ** eos.gamma)


class RotationProfile:
    """Angular-velocity-squared Omega^2(r, z) plus its induced forcing
    f = 2 Omega^2 + r d_r Omega^2.

    Built from an analytic rule (preferred, differentiated symbolically) or
    a sampled field (differentiated by finite differences). The forcing is
    cached per grid.
    """

    def __init__(self, kind: str, omega2_rule=None, domega2_dr_rule=None,
                 omega2_field: ScalarField | None = None, label: str = ""):
        if kind not in ("constant", "radial", "sampled"):
            raise DomainError(f"unknown rotation profile kind {kind!r}")
        self.kind = kind
        self.omega2_rule = omega2_rule
        self.domega2_dr_rule = domega2_dr_rule
        self.omega2_field = omega2_field
        self.label = label or kind
        self._forcing_cache: dict[GridSpec, ScalarField] = {}
        self._omega2_cache: dict[GridSpec, ScalarField] = {}
        if kind == "sampled":
            if omega2_field is None:
                raise DomainError("sampled rotation profile needs a field")
            if np.any(omega2_field.values < 0.0):
                raise DomainError("Omega^2 must be nonnegative")

    # -- constructors -------------------------------------------------------

    @staticmethod
    def constant_omega(omega: float) -> "RotationProfile":
        v = float(omega) ** 2
        return RotationProfile(
            "constant", omega2_rule=lambda r: np.full_like(np.asarray(r, float), v),
            domega2_dr_rule=lambda r: np.zeros_like(np.asarray(r, float)),
            label=f"constant:{omega}")

    @staticmethod
    def rigid_squared(omega2: float) -> "RotationProfile":
        if omega2 < 0.0:
            raise DomainError("Omega^2 must be nonnegative")
        v = float(omega2)
        return RotationProfile(
            "constant", omega2_rule=lambda r: np.full_like(np.asarray(r, float), v),
            domega2_dr_rule=lambda r: np.zeros_like(np.asarray(r, float)),
            label=f"rigid-squared:{omega2}")

    @staticmethod
    def rational(a: float, b: float) -> "RotationProfile":
        """Omega^2 = a / (1 + b r^2)."""
        if a < 0.0 or b < 0.0:
            raise DomainError("rational profile needs a, b >= 0")
        return RotationProfile(
            "radial",
            omega2_rule=lambda r: a / (1.0 + b * np.asarray(r, float) ** 2),
            domega2_dr_rule=lambda r: -2.0 * a * b * np.asarray(r, float)
            / (1.0 + b * np.asarray(r, float) ** 2) ** 2,
            label=f"rational:{a},{b}")

    @staticmethod
    def radial(omega2_rule, domega2_dr_rule=None, label="radial") -> "RotationProfile":
        return RotationProfile("radial", omega2_rule=omega2_rule,
                               domega2_dr_rule=domega2_dr_rule, label=label)

    @staticmethod
    def sampled(field: ScalarField) -> "RotationProfile":
        return RotationProfile("sampled", omega2_field=field, label="sampled")

    # -- queries -------------------------------------------------------------

    @property
    def z_independent(self) -> bool:
        if self.kind in ("constant", "radial"):
            return True
        f = self.omega2_field
        return f.z_even_defect() == 0.0 and np.all(f.values == f.values[:, :1])

    def omega2_on(self, grid: GridSpec) -> ScalarField:
        if grid in self._omega2_cache:
            return self._omega2_cache[grid]
        if self.kind == "sampled":
            if self.omega2_field.grid != grid:
                raise DomainError("sampled rotation profile on a different grid")
            field = self.omega2_field
        else:
            vals = np.broadcast_to(
                np.asarray(self.omega2_rule(grid.r), float)[:, None],
                (grid.nr, grid.nz)).copy()
            if np.any(vals < 0.0):
                raise DomainError("Omega^2 must be nonnegative")
            field = ScalarField(grid, vals, "even")
        self._omega2_cache[grid] = field
        return field

    def forcing_on(self, grid: GridSpec) -> ScalarField:
        """f = 2 Omega^2 + r d_r Omega^2, cached per grid."""
        if grid in self._forcing_cache:
            return self._forcing_cache[grid]
        om2 = self.omega2_on(grid)
        if self.kind != "sampled" and self.domega2_dr_rule is not None:
            dvals = np.asarray(self.domega2_dr_rule(grid.r), float)[:, None]
            f = 2.0 * om2.values + grid.r[:, None] * dvals
            field = ScalarField(grid, np.broadcast_to(f, (grid.nr, grid.nz)).copy(),
                                "even")
        else:
            d_r, _ = gradient_rz(om2)
            field = ScalarField(
                grid, 2.0 * om2.values + grid.rmesh * d_r.values, "even")
        self._forcing_cache[grid] = field
        return field


def bernoulli_residual(rho: ScalarField, grav_potential: ScalarField,
                       profile: RotationProfile, eos: EosParams,
                       domain: StarDomain, s_const: float = 0.0) -> float:
    """Standard deviation over the domain of A(rho) - B rho - J(r).

    A(rho) = g/(g-1) exp(s) rho^(g-1) is the closed-form enthalpy of the
    power-law EOS and J(r) the centrifugal integral; the deviation is zero
    (to discretization) iff the Bernoulli relation holds for some constant.
    grav_potential is the attractive Newtonian potential B rho (>= 0 for
    rho >= 0); requires a z-independent rotation profile and constant
    entropy.
    """
    _check_same_grid(rho, grav_potential)
    if domain.grid != rho.grid:
        raise DomainError("domain lives on a different grid")
    if not profile.z_independent:
        raise HypothesisViolationError(
            "Bernoulli relation needs Omega^2 depending on r only")
    if np.any(rho.values[domain.mask] <= 0.0):
        raise DomainError("rho must be positive on the evaluation domain")
    grid = rho.grid
    g = eos.gamma
    a_vals = (g / (g - 1.0)) * math.exp(s_const) * rho.values ** (g - 1.0)

    om2 = profile.omega2_on(grid).values[:, 0]
    integrand = grid.r * om2
    j_of_r = np.concatenate(
        ([0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * grid.hr)))

    dev = a_vals - grav_potential.values - j_of_r[:, None]
    sample = dev[domain.mask]
    return float(np.std(sample))
