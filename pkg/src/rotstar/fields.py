"""Axisymmetric grids, scalar fields, finite-difference operators, quadrature.

Coordinates are cylindrical (r, z) with the symmetry axis at r = 0 and the
z-range symmetric about the equator. Every field carries an explicit parity
describing its behavior under r -> -r; the axis stencils rely on it instead
of ghost-cell heuristics. All reductions run in a fixed row-major order so
results are bit-reproducible regardless of worker count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, GridMismatchError

PARITIES = ("even", "odd")

AXIFIELD_MAGIC = "AXIFIELD v1"


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid on [0, rmax] x [-zmax, zmax]."""

    nr: int
    nz: int
    rmax: float
    zmax: float

    def __post_init__(self):
        if self.nr < 8 or self.nz < 8:
            raise DomainError("grid needs nr >= 8 and nz >= 8")
        if not (self.rmax > 0.0 and self.zmax > 0.0):
            raise DomainError("grid extents must be positive")

    @property
    def zmin(self) -> float:
        return -self.zmax

    @property
    def hr(self) -> float:
        return self.rmax / (self.nr - 1)

    @property
    def hz(self) -> float:
        return (self.zmax - self.zmin) / (self.nz - 1)

    @cached_property
    def r(self) -> np.ndarray:
        r = np.linspace(0.0, self.rmax, self.nr)
        r.setflags(write=False)
        return r

    @cached_property
    def z(self) -> np.ndarray:
        z = np.linspace(self.zmin, self.zmax, self.nz)
        z.setflags(write=False)
        return z

    @cached_property
    def rmesh(self) -> np.ndarray:
        m = np.broadcast_to(self.r[:, None], (self.nr, self.nz)).copy()
        m.setflags(write=False)
        return m

    @cached_property
    def zmesh(self) -> np.ndarray:
        m = np.broadcast_to(self.z[None, :], (self.nr, self.nz)).copy()
        m.setflags(write=False)
        return m

    @cached_property
    def radius_mesh(self) -> np.ndarray:
        m = np.hypot(self.rmesh, self.zmesh)
        m.setflags(write=False)
        return m


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatchError("fields live on different grids")


def _combine_parity(pa: str, pb: str, op: str) -> str:
    if op == "add":
        if pa != pb:
            raise DomainError(f"cannot add fields of parity {pa!r} and {pb!r}")
        return pa
    # pointwise product
    return "even" if pa == pb else "odd"


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Sampled axisymmetric function on a GridSpec, immutable after creation.

    values has shape (nr, nz); parity is the behavior under r -> -r. An
    odd field must vanish exactly on the r = 0 column.
    """

    grid: GridSpec
    values: np.ndarray
    parity: str = "even"

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape == (self.grid.nr * self.grid.nz,):
            vals = vals.reshape(self.grid.nr, self.grid.nz)
        if vals.shape != (self.grid.nr, self.grid.nz):
            raise DomainError(
                f"values shape {vals.shape} does not match grid "
                f"({self.grid.nr}, {self.grid.nz})"
            )
        if not np.all(np.isfinite(vals)):
            raise DomainError("field values must be finite")
        if self.parity not in PARITIES:
            raise DomainError(f"parity must be one of {PARITIES}")
        if self.parity == "odd" and np.any(vals[0, :] != 0.0):
            raise DomainError("odd-parity field must be exactly 0 at r = 0")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    # -- constructors -------------------------------------------------------

    @staticmethod
    def zeros(grid: GridSpec, parity: str = "even") -> "ScalarField":
        return ScalarField(grid, np.zeros((grid.nr, grid.nz)), parity)

    @staticmethod
    def constant(grid: GridSpec, c: float) -> "ScalarField":
        return ScalarField(grid, np.full((grid.nr, grid.nz), float(c)), "even")

    @staticmethod
    def from_function(grid: GridSpec, fn, parity: str = "even") -> "ScalarField":
        vals = np.asarray(fn(grid.rmesh, grid.zmesh), dtype=float)
        vals = np.broadcast_to(vals, (grid.nr, grid.nz)).copy()
        if parity == "odd":
            vals[0, :] = 0.0
        return ScalarField(grid, vals, parity)

    def with_values(self, values, parity: str | None = None) -> "ScalarField":
        return ScalarField(self.grid, values, parity or self.parity)

    # -- algebra ------------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, ScalarField):
            _check_same_grid(self, other)
            parity = _combine_parity(self.parity, other.parity, "add")
            return ScalarField(self.grid, self.values + other.values, parity)
        return ScalarField(self.grid, self.values + float(other), self.parity)

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            _check_same_grid(self, other)
            parity = _combine_parity(self.parity, other.parity, "add")
            return ScalarField(self.grid, self.values - other.values, parity)
        return ScalarField(self.grid, self.values - float(other), self.parity)

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            _check_same_grid(self, other)
            parity = _combine_parity(self.parity, other.parity, "mul")
            return ScalarField(self.grid, self.values * other.values, parity)
        return ScalarField(self.grid, self.values * float(other), self.parity)

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values, self.parity)

    def map_values(self, fn, parity: str | None = None) -> "ScalarField":
        return ScalarField(self.grid, fn(self.values), parity or self.parity)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def flip_z(self) -> "ScalarField":
        return ScalarField(self.grid, self.values[:, ::-1], self.parity)

    def z_even_defect(self) -> float:
        """Max absolute deviation from evenness in z."""
        return float(np.max(np.abs(self.values - self.values[:, ::-1])))


@dataclass(frozen=True, eq=False)
class StarDomain:
    """Support region bounded by an equator-symmetric height psi(r)."""

    grid: GridSpec
    psi: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=float)
        if psi.shape != (self.grid.nr,):
            raise DomainError("psi must have one entry per radial node")
        if np.any(psi < 0.0):
            raise DomainError("psi must be nonnegative")
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != (self.grid.nr, self.grid.nz):
            raise DomainError("mask shape does not match grid")
        if np.any(mask & (psi[:, None] <= 0.0)):
            raise DomainError("mask is true on a column with psi = 0")
        if np.any(mask != mask[:, ::-1]):
            raise DomainError("mask must be symmetric under z -> -z")
        psi = psi.copy()
        mask = mask.copy()
        psi.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "mask", mask)

    @staticmethod
    def from_psi(grid: GridSpec, psi) -> "StarDomain":
        psi = np.asarray(psi, dtype=float)
        mask = np.abs(grid.zmesh) < psi[:, None]
        return StarDomain(grid, psi, mask)

    @staticmethod
    def from_ball(grid: GridSpec, radius: float) -> "StarDomain":
        psi = np.sqrt(np.maximum(radius**2 - grid.r**2, 0.0))
        return StarDomain.from_psi(grid, psi)

    @staticmethod
    def from_density(rho: ScalarField, floor: float = 0.0) -> "StarDomain":
        """Extract psi per column by linear interpolation of the zero level set."""
        grid = rho.grid
        nzh = grid.nz // 2  # first node with z >= 0
        psi = np.zeros(grid.nr)
        z = grid.z
        for i in range(grid.nr):
            col = rho.values[i, :]
            upper = col[nzh:]
            pos = upper > floor
            if not pos[0]:
                continue
            stop = len(pos) if pos.all() else int(np.argmin(pos))
            j = nzh + stop - 1
            if j + 1 >= grid.nz:
                psi[i] = z[-1]
            else:
                f0, f1 = col[j] - floor, col[j + 1] - floor
                psi[i] = z[j] + grid.hz * f0 / (f0 - f1)
        return StarDomain.from_psi(grid, psi)

    def interior(self, ncells: int = 1) -> np.ndarray:
        """Mask eroded by ncells (4-neighbor erosion)."""
        return erode_mask(self.mask, ncells)


def erode_mask(mask: np.ndarray, ncells: int) -> np.ndarray:
    """4-neighbor binary erosion; the axis column keeps its axis side."""
    out = mask.copy()
    for _ in range(ncells):
        inner = out.copy()
        inner[1:, :] &= out[:-1, :]
        inner[:-1, :] &= out[1:, :]
        inner[:, 1:] &= out[:, :-1]
        inner[:, :-1] &= out[:, 1:]
        inner[-1, :] = False
        inner[:, 0] = False
        inner[:, -1] = False
        out = inner
    return out


# ---------------------------------------------------------------------------
# finite-difference operators
# ---------------------------------------------------------------------------

def gradient_rz(field: ScalarField) -> tuple[ScalarField, ScalarField]:
    """Central-difference gradient (d/dr, d/dz), parity-aware at the axis.

    Interior stencils are central; the outer edges use one-sided
    second-order stencils. At r = 0 the r-derivative of an even field is 0
    and that of an odd field uses the even extension across the axis.
    """
    g = field.grid
    v = field.values
    hr, hz = g.hr, g.hz

    dr = np.empty_like(v)
    dr[1:-1, :] = (v[2:, :] - v[:-2, :]) / (2.0 * hr)
    dr[-1, :] = (3.0 * v[-1, :] - 4.0 * v[-2, :] + v[-3, :]) / (2.0 * hr)
    if field.parity == "even":
        dr[0, :] = 0.0
        dr_parity = "odd"
    else:
        dr[0, :] = v[1, :] / hr  # (f(h) - f(-h)) / 2h with f(-h) = -f(h)
        dr_parity = "even"

    dz = np.empty_like(v)
    dz[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / (2.0 * hz)
    dz[:, 0] = (-3.0 * v[:, 0] + 4.0 * v[:, 1] - v[:, 2]) / (2.0 * hz)
    dz[:, -1] = (3.0 * v[:, -1] - 4.0 * v[:, -2] + v[:, -3]) / (2.0 * hz)
    if field.parity == "odd":
        dz[0, :] = 0.0

    return (ScalarField(g, dr, dr_parity), ScalarField(g, dz, field.parity))


def odd_over_r(field: ScalarField) -> ScalarField:
    """Pointwise f/r for an odd field, with the axis value f_r(0, z).

    The ratio of an odd function to r extends evenly across the axis; its
    limiting value there is the r-derivative.
    """
    if field.parity != "odd":
        raise DomainError("odd_over_r requires an odd-parity field")
    g = field.grid
    out = np.empty_like(field.values)
    out[1:, :] = field.values[1:, :] / g.r[1:, None]
    out[0, :] = field.values[1, :] / g.hr
    return ScalarField(g, out, "even")


def div_weighted_grad(w: ScalarField, weight: ScalarField) -> ScalarField:
    """Discrete axisymmetric divergence (1/r) d_r(r a d_r w) + d_z(a d_z w).

    Finite-volume flux form in the interior; the axis column uses the
    even-extension limit 2 a w_rr; the outer edges fall back to one-sided
    stencils of the expanded operator.
    """
    _check_same_grid(w, weight)
    if w.parity != "even" or weight.parity != "even":
        raise DomainError("div_weighted_grad requires even-parity fields")
    if np.any(weight.values <= 0.0):
        raise DomainError("weight must be strictly positive")

    g = w.grid
    hr, hz = g.hr, g.hz
    a = weight.values
    v = w.values
    r = g.r

    dr_w, dz_w = gradient_rz(w)
    dr_a, dz_a = gradient_rz(weight)

    # radial part
    r_part = np.empty_like(v)
    rf = 0.5 * (r[:-1] + r[1:])
    af_r = 0.5 * (a[:-1, :] + a[1:, :])
    flux_r = rf[:, None] * af_r * (v[1:, :] - v[:-1, :]) / hr  # (nr-1, nz)
    r_part[1:-1, :] = (flux_r[1:, :] - flux_r[:-1, :]) / (r[1:-1, None] * hr)
    # axis: finite-volume cell [0, hr/2] with volume integral hr^2/8 per unit z
    r_part[0, :] = flux_r[0, :] / (hr * hr / 8.0)
    w_rr_edge = (2.0 * v[-1, :] - 5.0 * v[-2, :] + 4.0 * v[-3, :] - v[-4, :]) / hr**2
    r_part[-1, :] = (
        a[-1, :] * (w_rr_edge + dr_w.values[-1, :] / r[-1])
        + dr_a.values[-1, :] * dr_w.values[-1, :]
    )

    # axial part
    z_part = np.empty_like(v)
    af_z = 0.5 * (a[:, :-1] + a[:, 1:])
    flux_z = af_z * (v[:, 1:] - v[:, :-1]) / hz  # (nr, nz-1)
    z_part[:, 1:-1] = (flux_z[:, 1:] - flux_z[:, :-1]) / hz
    w_zz_lo = (2.0 * v[:, 0] - 5.0 * v[:, 1] + 4.0 * v[:, 2] - v[:, 3]) / hz**2
    w_zz_hi = (2.0 * v[:, -1] - 5.0 * v[:, -2] + 4.0 * v[:, -3] - v[:, -4]) / hz**2
    z_part[:, 0] = a[:, 0] * w_zz_lo + dz_a.values[:, 0] * dz_w.values[:, 0]
    z_part[:, -1] = a[:, -1] * w_zz_hi + dz_a.values[:, -1] * dz_w.values[:, -1]

    return ScalarField(g, r_part + z_part, "even")


def div_weighted_grad_wide(w: ScalarField, weight: ScalarField) -> ScalarField:
    """Same operator evaluated by composing central differences.

    A deliberately independent stencil (wide, non-conservative) used to
    cross-check fields produced with the flux-form discretization.
    """
    _check_same_grid(w, weight)
    if np.any(weight.values <= 0.0):
        raise DomainError("weight must be strictly positive")
    dr_w, dz_w = gradient_rz(w)
    flux_r = weight * dr_w  # odd
    flux_z = weight * dz_w
    dfr, _ = gradient_rz(flux_r)
    _, dfz = gradient_rz(flux_z)
    return dfr + odd_over_r(flux_r) + dfz


def trapezoid_weights(grid: GridSpec) -> np.ndarray:
    """Tensor-product trapezoid weights including the 2 pi r volume factor.

    The r = 0 column carries zero weight, which sidesteps any axis
    singularity decisions.
    """
    wr = np.full(grid.nr, grid.hr)
    wr[0] = wr[-1] = 0.5 * grid.hr
    wz = np.full(grid.nz, grid.hz)
    wz[0] = wz[-1] = 0.5 * grid.hz
    return 2.0 * math.pi * grid.r[:, None] * wr[:, None] * wz[None, :]


def integrate_axisym(field: ScalarField, domain: StarDomain | None = None) -> float:
    """Volume integral of field * 2 pi r dr dz, optionally masked."""
    if domain is not None and domain.grid != field.grid:
        raise GridMismatchError("domain mask lives on a different grid")
    w = trapezoid_weights(field.grid)
    vals = field.values * w
    if domain is not None:
        vals = np.where(domain.mask, vals, 0.0)
    return float(np.sum(vals))


def curl_theta_residual(p: ScalarField, rho: ScalarField, omega2,
                        floor: float = 0.0) -> ScalarField:
    """Pointwise defect of the curl identity.

    Returns (p_z rho_r - p_r rho_z)/rho^2 - r d_z(Omega^2); zero (to
    discretization order) certifies consistency of (p, rho, Omega^2).
    Nodes with rho <= floor are masked out (set to zero), not an error.
    """
    _check_same_grid(p, rho)
    grid = p.grid
    from .eos import RotationProfile  # local import to avoid a cycle

    if isinstance(omega2, RotationProfile):
        om2 = omega2.omega2_on(grid)
    else:
        om2 = omega2
        _check_same_grid(p, om2)
    p_r, p_z = gradient_rz(p)
    rho_r, rho_z = gradient_rz(rho)
    _, dz_om2 = gradient_rz(om2)
    mask = rho.values > floor
    num = p_z.values * rho_r.values - p_r.values * rho_z.values
    out = np.zeros_like(num)
    out[mask] = num[mask] / rho.values[mask] ** 2
    out -= grid.rmesh * dz_om2.values
    out[~mask] = 0.0
    parity = "odd" if (p.parity == "even" and rho.parity == "even") else "even"
    if parity == "odd":
        out[0, :] = 0.0
    return ScalarField(grid, out, parity)


# ---------------------------------------------------------------------------
# finite-volume machinery shared by the solvers
# ---------------------------------------------------------------------------

def fv_node_volumes(grid: GridSpec) -> np.ndarray:
    """Finite-volume node volumes (2 pi int r dr dz over each node's cell).

    Identical to the trapezoid weights at interior nodes; the axis column
    carries the exact cell volume pi (hr/2)^2 hz instead of zero so that
    discrete variational identities stay consistent with the stiffness form.
    """
    hr, hz = grid.hr, grid.hz
    ar = grid.r * hr
    ar[0] = hr * hr / 8.0
    ar[-1] = grid.r[-1] * hr / 2.0 - hr * hr / 8.0
    wz = np.full(grid.nz, hz)
    wz[0] = wz[-1] = hz / 2.0
    return 2.0 * math.pi * ar[:, None] * wz[None, :]


def face_conductances(grid: GridSpec, weight_vals: np.ndarray):
    """Face conductances c of the flux-form operator (2 pi included).

    The energy of a field is sum(c * dw^2) over faces and the stiffness
    matrix couples face neighbors with +c.
    """
    hr, hz = grid.hr, grid.hz
    r = grid.r
    zrow = np.full(grid.nz, hz)
    zrow[0] = zrow[-1] = hz / 2.0
    rf = 0.5 * (r[:-1] + r[1:])
    c_r = (2.0 * math.pi / hr) * rf[:, None] \
        * 0.5 * (weight_vals[:-1, :] + weight_vals[1:, :]) * zrow[None, :]
    ar = r * hr
    ar[0] = hr * hr / 8.0
    ar[-1] = r[-1] * hr / 2.0 - hr * hr / 8.0
    c_z = (2.0 * math.pi / hz) * ar[:, None] \
        * 0.5 * (weight_vals[:, :-1] + weight_vals[:, 1:])
    return c_r, c_z


def dirichlet_energy(grid: GridSpec, weight_vals: np.ndarray,
                     w_vals: np.ndarray) -> float:
    """Integral of weight * |grad w|^2 * 2 pi r dr dz via the face form.

    Exactly equals -w^T S w for the matrix from assemble_stiffness, which
    keeps discrete scaling identities exact.
    """
    c_r, c_z = face_conductances(grid, weight_vals)
    dw_r = w_vals[1:, :] - w_vals[:-1, :]
    dw_z = w_vals[:, 1:] - w_vals[:, :-1]
    return float(np.sum(c_r * dw_r * dw_r) + np.sum(c_z * dw_z * dw_z))


def assemble_stiffness(grid: GridSpec, weight_vals: np.ndarray) -> sp.csr_matrix:
    """Sparse symmetric stiffness S with w^T S w = -dirichlet_energy(...).

    S/v approximates div(weight grad .) at every node, v = fv_node_volumes;
    rows sum to zero, so constants are in the kernel.
    """
    nr, nz = grid.nr, grid.nz
    n = nr * nz
    c_r, c_z = face_conductances(grid, weight_vals)
    idx = np.arange(n).reshape(nr, nz)

    rows, cols, vals = [], [], []

    def add_faces(i0, i1, c):
        i0 = i0.ravel()
        i1 = i1.ravel()
        c = c.ravel()
        rows.extend((i0, i1, i0, i1))
        cols.extend((i1, i0, i0, i1))
        vals.extend((c, c, -c, -c))

    add_faces(idx[:-1, :], idx[1:, :], c_r)
    add_faces(idx[:, :-1], idx[:, 1:], c_z)

    s = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return s.tocsr()


# ---------------------------------------------------------------------------
# AXIFIELD serialization
# ---------------------------------------------------------------------------

def write_axifield(path, field: ScalarField) -> None:
    """Write a field in the AXIFIELD v1 format (17 significant digits)."""
    g = field.grid
    header = (
        f"{AXIFIELD_MAGIC} nr={g.nr} nz={g.nz} rmax={g.rmax:.17g} "
        f"zmin={g.zmin:.17g} zmax={g.zmax:.17g} parity={field.parity}"
    )
    flat = field.values.ravel()  # row-major, z varies fastest
    lines = [header]
    per_line = 8
    for k in range(0, flat.size, per_line):
        lines.append(" ".join(f"{x:.17g}" for x in flat[k:k + per_line]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_axifield(path) -> ScalarField:
    with open(path) as fh:
        header = fh.readline().strip()
        body = fh.read()
    parts = header.split()
    if " ".join(parts[:2]) != AXIFIELD_MAGIC:
        raise DomainError(f"not an AXIFIELD v1 file: {path}")
    kv = dict(p.split("=", 1) for p in parts[2:])
    grid = GridSpec(nr=int(kv["nr"]), nz=int(kv["nz"]),
                    rmax=float(kv["rmax"]), zmax=float(kv["zmax"]))
    if float(kv["zmin"]) != -float(kv["zmax"]):
        raise DomainError("AXIFIELD zmin must equal -zmax")
    vals = np.array(body.split(), dtype=float)
    if vals.size != grid.nr * grid.nz:
        raise DomainError("AXIFIELD value count does not match header")
    return ScalarField(grid, vals.reshape(grid.nr, grid.nz), kv["parity"])
