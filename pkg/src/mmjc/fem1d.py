"""One-dimensional frequency-domain finite elements.

Linear nodal (Whitney-0) elements on a graded 1D mesh, complex-coordinate
PML, Ohmic walls and PEC intervals.  All quantities are in natural units
(c = eps0 = mu0 = hbar = 1), so the free-space wavenumber equals the angular
frequency.

The discrete operator is ``A = S - k^2 M`` with

    S_ij = int W_i' W_j' / s dx,     M_ij = int eps_r s W_i W_j dx,

where ``s(x) = 1 + i sigma_pml(x) / omega`` is the PML stretch.  ``A`` is
complex-symmetric and tridiagonal.  With this sign convention the Green's
function of ``G'' + k^2 eps_r G = -delta(x - x')`` solves ``A g = W(x')``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

VACUUM = "vacuum"
WALL = "wall"
PML_LEFT = "pml-left"
PML_RIGHT = "pml-right"

RESIDUAL_TOL = 1e-10


class MeshError(ValueError):
    """Inconsistent geometry or region definition."""


class SingularSystemError(RuntimeError):
    """Banded LU broke down (or failed its residual check) at ``omega``."""

    def __init__(self, omega, message):
        super().__init__(f"omega={omega!r}: {message}")
        self.omega = omega


@dataclass(frozen=True)
class Wall:
    """Ohmic conductor occupying ``[start, end]`` with conductivity ``sigma``."""

    start: float
    end: float
    sigma: float


@dataclass(frozen=True)
class PML:
    """Polynomially graded stretch ``sigma(d) = sigma_max (d / L)^order``.

    ``sigma_max`` defaults to the value giving a theoretical normal-incidence
    round-trip reflection of ``reflection``.
    """

    left: float = 0.0
    right: float = 0.0
    order: int = 3
    reflection: float = 1e-6
    sigma_max: float | None = None

    def strength(self, thickness):
        if self.sigma_max is not None:
            return self.sigma_max
        if thickness <= 0:
            return 0.0
        return (self.order + 1) * np.log(1.0 / self.reflection) / (2.0 * thickness)


@dataclass(frozen=True)
class Domain:
    """Physical extent ``[x_min, x_max]`` plus material layout.

    PML layers are attached outside the physical extent.  ``omega_ref`` sets
    the wavelength used by the vacuum resolution policy and the skin depth
    used inside walls.  ``sigma_design`` overrides the conductivity used for
    wall meshing, so a sweep over conductivities can share one mesh.
    """

    x_min: float
    x_max: float
    omega_ref: float
    walls: tuple[Wall, ...] = ()
    pec: tuple[tuple[float, float], ...] = ()
    pml: PML = PML()
    points_per_wavelength: float = 40.0
    points_per_skin_depth: float = 10.0
    min_wall_elements: int = 4
    sigma_design: float | None = None

    @property
    def wavelength(self):
        return 2 * np.pi / self.omega_ref

    def profile(self):
        return MediumProfile(
            walls=self.walls,
            pec=self.pec,
            pml=self.pml,
            x_min=self.x_min,
            x_max=self.x_max,
        )


@dataclass
class Mesh1D:
    nodes: np.ndarray
    regions: np.ndarray  # one tag per element

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.regions = np.asarray(self.regions, dtype=object)
        if self.nodes.ndim != 1 or len(self.nodes) < 2:
            raise MeshError("a mesh needs at least two nodes")
        if np.any(np.diff(self.nodes) <= 0):
            raise MeshError("mesh nodes must be strictly increasing")
        if len(self.regions) != len(self.nodes) - 1:
            raise MeshError("exactly one region tag per element is required")

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def h(self):
        return np.diff(self.nodes)

    @property
    def midpoints(self):
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])

    @property
    def extent(self):
        return self.nodes[0], self.nodes[-1]

    def wall_nodes(self):
        """Indices of nodes touching at least one wall element."""
        is_wall = self.regions == WALL
        touch = np.zeros(self.n_nodes, dtype=bool)
        touch[:-1] |= is_wall
        touch[1:] |= is_wall
        return np.flatnonzero(touch)

    def node_index(self, x, atol=1e-12):
        i = int(np.argmin(np.abs(self.nodes - x)))
        if abs(self.nodes[i] - x) > atol * max(1.0, abs(x)):
            raise MeshError(f"x={x!r} is not a mesh node")
        return i


@dataclass(frozen=True)
class MediumProfile:
    walls: tuple[Wall, ...] = ()
    pec: tuple[tuple[float, float], ...] = ()
    pml: PML = PML()
    x_min: float = -np.inf
    x_max: float = np.inf

    def __post_init__(self):
        for w in self.walls:
            if not w.end > w.start:
                raise MeshError(f"wall {w} has non-positive thickness")
            if w.sigma < 0:
                raise MeshError(f"wall {w} has negative conductivity")
            if w.start < self.x_min or w.end > self.x_max:
                raise MeshError(f"wall {w} overlaps the PML or leaves the domain")
        segs = sorted([(w.start, w.end) for w in self.walls] + list(self.pec))
        for (a0, b0), (a1, b1) in zip(segs[:-1], segs[1:]):
            if a1 < b0:
                raise MeshError(f"segments [{a0}, {b0}] and [{a1}, {b1}] overlap")

    def wall_sigma(self, x):
        """Conductivity at ``x`` (zero outside walls)."""
        x = np.asarray(x, dtype=float)
        sigma = np.zeros_like(x)
        for w in self.walls:
            sigma = np.where((x > w.start) & (x < w.end), w.sigma, sigma)
        return sigma

    def eps_r(self, x, omega):
        return 1.0 + 1j * self.wall_sigma(x) / omega

    def chi(self, x, omega):
        return self.eps_r(x, omega) - 1.0

    def chi_imag(self, x, omega):
        return self.wall_sigma(x) / omega

    def pml_sigma(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        p = self.pml
        if p.left > 0:
            d = np.clip(self.x_min - x, 0.0, None)
            out = out + p.strength(p.left) * (d / p.left) ** p.order
        if p.right > 0:
            d = np.clip(x - self.x_max, 0.0, None)
            out = out + p.strength(p.right) * (d / p.right) ** p.order
        return out

    def stretch(self, x, omega):
        return 1.0 + 1j * self.pml_sigma(x) / omega

    def pec_nodes(self, mesh):
        mask = np.zeros(mesh.n_nodes, dtype=bool)
        tol = 1e-12 * max(1.0, float(np.max(np.abs(mesh.nodes))))
        for a, b in self.pec:
            mask |= (mesh.nodes >= a - tol) & (mesh.nodes <= b + tol)
        return mask


def build_mesh(domain: Domain) -> Mesh1D:
    """Graded mesh with nodes on every segment boundary.

    Vacuum and PML segments get ``points_per_wavelength`` elements per
    reference wavelength; walls get elements no larger than
    ``skin_depth / points_per_skin_depth``.
    """
    profile = domain.profile()  # validates the layout
    lam = domain.wavelength
    h_vac = lam / domain.points_per_wavelength
    pml = domain.pml
    left = domain.x_min - pml.left
    right = domain.x_max + pml.right

    for a, b in domain.pec:
        if b < a:
            raise MeshError(f"PEC interval [{a}, {b}] is reversed")
        if a < left or b > right:
            raise MeshError(f"PEC interval [{a}, {b}] leaves the domain")

    breaks = {left, domain.x_min, domain.x_max, right}
    for w in domain.walls:
        breaks.update((w.start, w.end))
    for a, b in domain.pec:
        breaks.update((a, b))
    breaks = np.array(sorted(breaks))

    sigma_mesh = domain.sigma_design
    if sigma_mesh is None:
        sigma_mesh = max((w.sigma for w in domain.walls), default=0.0)

    pieces = []
    tags = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        length = b - a
        if length <= 0:
            continue
        mid = 0.5 * (a + b)
        if mid < domain.x_min:
            tag = PML_LEFT
        elif mid > domain.x_max:
            tag = PML_RIGHT
        elif profile.wall_sigma(mid) > 0 or any(w.start < mid < w.end for w in domain.walls):
            tag = WALL
        else:
            tag = VACUUM
        if tag == WALL:
            if sigma_mesh > 0:
                delta = skin_depth(domain.omega_ref, sigma_mesh)
                n = int(np.ceil(length / (delta / domain.points_per_skin_depth) - 1e-9))
            else:
                n = 1
            n = max(n, domain.min_wall_elements, int(np.ceil(length / h_vac - 1e-9)))
        else:
            n = max(1, int(np.ceil(length / h_vac - 1e-9)))
        pieces.append(np.linspace(a, b, n + 1)[:-1])
        tags.extend([tag] * n)
    nodes = np.concatenate(pieces + [[breaks[-1]]])
    return Mesh1D(nodes, np.array(tags, dtype=object))


def skin_depth(omega, sigma):
    return np.sqrt(2.0 / (omega * sigma))


@dataclass
class BandedComplexSystem:
    """Tridiagonal complex-symmetric system in LAPACK band storage.

    ``ab[0, 1:]`` is the super-diagonal, ``ab[1]`` the diagonal and
    ``ab[2, :-1]`` the sub-diagonal.  Dirichlet nodes are eliminated
    symmetrically when the system is solved.
    """

    ab: np.ndarray
    omega: float
    dirichlet: np.ndarray = field(default=None)  # bool mask
    rhs: np.ndarray | None = None

    @property
    def n(self):
        return self.ab.shape[1]

    def to_dense(self):
        n = self.n
        A = np.diag(self.ab[1]).astype(complex)
        A[np.arange(n - 1), np.arange(1, n)] = self.ab[0, 1:]
        A[np.arange(1, n), np.arange(n - 1)] = self.ab[2, :-1]
        return A

    def matvec(self, x):
        x = np.asarray(x)
        y = self.ab[1][:, None] * x.reshape(self.n, -1)
        xx = x.reshape(self.n, -1)
        y[:-1] += self.ab[0, 1:, None] * xx[1:]
        y[1:] += self.ab[2, :-1, None] * xx[:-1]
        return y.reshape(x.shape)

    def with_rhs(self, rhs):
        return BandedComplexSystem(self.ab, self.omega, self.dirichlet, rhs)


def assemble_system(mesh: Mesh1D, profile: MediumProfile, omega: float) -> BandedComplexSystem:
    """Assemble ``S - k^2 M`` with element-midpoint material sampling."""
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega!r}")
    k2 = omega * omega
    h = mesh.h
    mid = mesh.midpoints
    eps = profile.eps_r(mid, omega)
    s = profile.stretch(mid, omega)
    ke = 1.0 / (s * h)
    me = eps * s * h / 6.0
    diag = np.zeros(mesh.n_nodes, dtype=complex)
    diag[:-1] += ke - 2.0 * k2 * me
    diag[1:] += ke - 2.0 * k2 * me
    off = -ke - k2 * me
    ab = np.zeros((3, mesh.n_nodes), dtype=complex)
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    dirichlet = profile.pec_nodes(mesh)
    # outer PML faces are terminated by E = 0
    if profile.pml.left > 0:
        dirichlet[0] = True
    if profile.pml.right > 0:
        dirichlet[-1] = True
    return BandedComplexSystem(ab, float(omega), dirichlet)


def mass_matrix_rhs(mesh: Mesh1D, coef_per_element, values):
    """``b_i = sum_e int coef_e W_i v dx`` with ``v`` interpolated from nodes.

    ``values`` may be (n_nodes,) or (n_nodes, m).
    """
    v = np.asarray(values)
    c = np.asarray(coef_per_element) * mesh.h / 6.0
    if v.ndim == 2:
        c = c[:, None]
    out = np.zeros(v.shape, dtype=complex)
    out[:-1] += c * (2.0 * v[:-1] + v[1:])
    out[1:] += c * (v[:-1] + 2.0 * v[1:])
    return out


def solve_banded(system: BandedComplexSystem, rhs=None, dirichlet_values=None):
    """Direct banded LU solve with partial pivoting and a residual check.

    ``rhs`` may carry several columns.  ``dirichlet_values`` gives the
    prescribed field on Dirichlet nodes (zero when omitted).
    """
    b = system.rhs if rhs is None else rhs
    if b is None:
        raise ValueError("no right-hand side given")
    b = np.array(b, dtype=complex)
    squeeze = b.ndim == 1
    if squeeze:
        b = b[:, None]
    ab = system.ab.copy()
    n = system.n
    mask = system.dirichlet if system.dirichlet is not None else np.zeros(n, dtype=bool)
    idx = np.flatnonzero(mask)
    if len(idx):
        vals = np.zeros((len(idx), b.shape[1]), dtype=complex)
        if dirichlet_values is not None:
            dv = np.asarray(dirichlet_values, dtype=complex)
            vals = (dv if dv.ndim == 2 else dv[:, None]) * np.ones((1, b.shape[1]))
        for i, v in zip(idx, vals):
            # move the known column to the right-hand side, keep symmetry
            if i > 0 and not mask[i - 1]:
                b[i - 1] -= ab[0, i] * v
            if i < n - 1 and not mask[i + 1]:
                b[i + 1] -= ab[2, i] * v
        ab[1, idx] = 1.0
        up = idx[idx > 0]
        ab[0, up] = 0.0  # A[i-1, i]
        ab[2, up - 1] = 0.0  # A[i, i-1]
        lo = idx[idx < n - 1]
        ab[2, lo] = 0.0  # A[i+1, i]
        ab[0, lo + 1] = 0.0  # A[i, i+1]
        b[idx] = vals
    try:
        x = scipy.linalg.solve_banded((1, 1), ab, b, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(system.omega, str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError(system.omega, "non-finite solution")
    reduced = BandedComplexSystem(ab, system.omega)
    # normwise backward error |Ax - b| / (|A| |x| + |b|): resonant fields are
    # large, so this is the meaningful quality measure rather than |r| / |b|
    res = np.linalg.norm(reduced.matvec(x) - b, axis=0)
    a_norm = float(np.max(np.sum(np.abs(ab), axis=0)))
    scale = a_norm * np.linalg.norm(x, axis=0) + np.linalg.norm(b, axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    worst = float(np.max(res / scale))
    if worst > RESIDUAL_TOL:
        raise SingularSystemError(system.omega, f"backward error {worst:.3e} exceeds {RESIDUAL_TOL}")
    return x[:, 0] if squeeze else x


def hat_values(mesh: Mesh1D, x):
    """Element index and the two nonzero hat-function values at ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lo, hi = mesh.extent
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    if np.any(x < lo - tol) or np.any(x > hi + tol):
        raise ValueError(f"points outside the mesh extent [{lo}, {hi}]")
    e = np.clip(np.searchsorted(mesh.nodes, x, side="right") - 1, 0, mesh.n_nodes - 2)
    t = (x - mesh.nodes[e]) / (mesh.nodes[e + 1] - mesh.nodes[e])
    t = np.clip(t, 0.0, 1.0)
    return e, 1.0 - t, t


def point_load(mesh: Mesh1D, x):
    """Load vector ``W_i(x)`` of a unit point source."""
    e, w0, w1 = hat_values(mesh, x)
    b = np.zeros(mesh.n_nodes, dtype=complex)
    b[e[0]] += w0[0]
    b[e[0] + 1] += w1[0]
    return b


def evaluate_field(coeffs, mesh: Mesh1D, x):
    """Interpolate ``sum_i e_i W_i(x)``; ``coeffs`` may carry trailing columns."""
    c = np.asarray(coeffs)
    scalar = np.ndim(x) == 0
    e, w0, w1 = hat_values(mesh, x)
    if c.ndim == 1:
        out = w0 * c[e] + w1 * c[e + 1]
    else:
        out = w0[:, None] * c[e] + w1[:, None] * c[e + 1]
    return out[0] if scalar else out


def free_space_green(x, xp, k):
    """Outgoing 1D Green's function ``(i / 2k) exp(ik|x - x'|)``."""
    return 1j / (2 * k) * np.exp(1j * k * np.abs(np.asarray(x) - xp))
