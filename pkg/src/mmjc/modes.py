"""Boundary-assisted (BA) and medium-assisted (MA) field modes.

BA modes are plane waves plus the field they scatter off the lossy
segments; MA modes are fields radiated by noise point currents sitting on
the nodes of lossy segments.  Both are sampled on a frequency grid and
coarse-grained into discrete modes whose fields carry the square root of
their mode volume.
"""

from __future__ import annotations

import csv
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import fem1d
from .fem1d import Mesh1D, MediumProfile

log = logging.getLogger(__name__)

BA = "BA"
MA = "MA"
BRIGHT = "BRIGHT"

CACHE_HEADER = ["omega", "kind", "label", "D", "node_index", "re", "im"]


@dataclass(frozen=True)
class DegeneracyLabel:
    """Which member of a degenerate family a mode is.

    BA modes carry ``direction`` (+1 for incidence along +x, -1 along -x).
    MA modes carry the source ``node`` and its coordinate ``x``, plus the
    dual-cell length ``dx`` the node represents inside the lossy segment.
    Bright modes (see :func:`compress_degenerate`) carry their rank ``index``.
    """

    kind: str
    direction: int | None = None
    node: int | None = None
    x: float | None = None
    dx: float | None = None
    index: int | None = None

    def __str__(self):
        if self.kind == BA:
            return "+x" if self.direction > 0 else "-x"
        if self.kind == MA:
            return f"n{self.node}"
        return f"b{self.index}"

    @classmethod
    def parse(cls, kind, text):
        if kind == BA:
            return cls(BA, direction=1 if text == "+x" else -1)
        if kind == MA:
            return cls(MA, node=int(text[1:]))
        return cls(kind, index=int(text[1:]))


@dataclass
class DiscreteMode:
    omega: float
    label: DegeneracyLabel
    field: np.ndarray  # complex samples at mesh nodes
    volume: float | None = None
    cell: int | None = None

    @property
    def kind(self):
        return self.label.kind

    def __post_init__(self):
        self.field = np.asarray(self.field, dtype=complex)
        if not np.all(np.isfinite(self.field)):
            raise ValueError(f"non-finite field samples in mode at omega={self.omega}")
        if self.volume is not None and not self.volume > 0:
            raise ValueError("mode volume must be positive")


# --------------------------------------------------------------------------
# single-frequency solves


def ba_directions(profile: MediumProfile):
    """Directions from which a plane wave can enter the domain.

    A side closed by PEC (no PML there) admits no incident wave.
    """
    out = []
    if profile.pml.left > 0:
        out.append(+1)
    if profile.pml.right > 0:
        out.append(-1)
    return out


def _discrete_wavenumber(k, h):
    """Wavenumber of a linear-element plane wave on a uniform mesh of size ``h``."""
    return np.arccos((1 - (k * h) ** 2 / 3) / (1 + (k * h) ** 2 / 6)) / h


def _ba_total(mesh, profile, omega, direction, system):
    """Total field of a unit plane wave incident along ``direction``.

    Without scatterers the analytic plane wave is returned.  Otherwise the
    wave is launched by a point source on the PML interface of the incidence
    side and the total field is solved directly, so incident and scattered
    parts share one discretization.  (Adding an analytic incident wave to a
    discrete scattered wave leaves a dispersion mismatch of ~(kh)^2 that
    shows up as spurious transmission through highly reflecting walls.)
    The source amplitude uses the exact discrete Green's function of a
    uniform vacuum mesh, so the launched wave has unit amplitude and the
    phase of exp(i k x) at the interface.
    """
    k = omega
    chi = profile.chi(mesh.midpoints, omega)
    pec = profile.pec_nodes(mesh)
    if not np.any(chi != 0) and not np.any(pec):
        return np.exp(1j * direction * k * mesh.nodes)
    x_s = profile.x_min if direction > 0 else profile.x_max
    i = int(np.argmin(np.abs(mesh.nodes - x_s)))
    h = mesh.h[i] if direction > 0 else mesh.h[i - 1]
    kh = _discrete_wavenumber(k, h)
    a_d = 2.0 / h - 2.0 * k * k * h / 3.0
    a_o = -1.0 / h - k * k * h / 6.0
    g0 = 1.0 / (a_d + 2.0 * a_o * np.exp(1j * kh * h))
    rhs = np.zeros(mesh.n_nodes, dtype=complex)
    rhs[i] = np.exp(1j * direction * k * mesh.nodes[i]) / g0
    return fem1d.solve_banded(system, rhs)


def solve_ba_mode(mesh: Mesh1D, profile: MediumProfile, omega, direction, system=None) -> DiscreteMode:
    """Plane-wave scattering solve; returns the BA mode without its volume."""
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    if system is None:
        system = fem1d.assemble_system(mesh, profile, omega)
    total = _ba_total(mesh, profile, omega, direction, system)
    pref = 1j / np.sqrt(2 * np.pi) * np.sqrt(omega / 2.0)
    return DiscreteMode(float(omega), DegeneracyLabel(BA, direction=direction), pref * total)


def ma_sources(mesh: Mesh1D, profile: MediumProfile, omega):
    """Lossy nodes with their dual-cell length and nodal ``chi_I``.

    The dual cell of node ``i`` is half of each adjacent lossy element, so
    ``sum_i dx_i chi_i`` reproduces ``int chi_I dx`` exactly.
    """
    chi_i = profile.chi_imag(mesh.midpoints, omega)
    lossy = chi_i > 0
    half = 0.5 * mesh.h * lossy
    dx = np.zeros(mesh.n_nodes)
    w = np.zeros(mesh.n_nodes)
    dx[:-1] += half
    dx[1:] += half
    w[:-1] += half * chi_i
    w[1:] += half * chi_i
    nodes = np.flatnonzero(dx > 0)
    pec = profile.pec_nodes(mesh)
    nodes = nodes[~pec[nodes]]
    return nodes, dx[nodes], w[nodes] / dx[nodes]


def solve_ma_modes(mesh: Mesh1D, profile: MediumProfile, omega, nodes=None, system=None):
    """Point-source radiation solves for MA sources at ``nodes``.

    Returns a list of DiscreteMode (no volume yet).  All sources at one
    frequency share a single banded factorization.
    """
    src, dx, chi_n = ma_sources(mesh, profile, omega)
    lookup = {int(n): i for i, n in enumerate(src)}
    if nodes is None:
        nodes = src
    nodes = np.atleast_1d(np.asarray(nodes, dtype=int))
    for n in nodes:
        if int(n) not in lookup:
            raise ValueError(f"node {int(n)} (x={mesh.nodes[n]!r}) is not inside a lossy segment")
    if len(nodes) == 0:
        return []
    if system is None:
        system = fem1d.assemble_system(mesh, profile, omega)
    sel = np.array([lookup[int(n)] for n in nodes])
    k2 = omega * omega
    # strong-form source -i k^2 sqrt(chi_I/pi) delta(x - x') becomes +... in S - k^2 M form
    amp = 1j * k2 * np.sqrt(chi_n[sel] / np.pi)
    rhs = np.zeros((mesh.n_nodes, len(nodes)), dtype=complex)
    rhs[nodes, np.arange(len(nodes))] = amp
    fields = fem1d.solve_banded(system, rhs)
    return [
        DiscreteMode(
            float(omega),
            DegeneracyLabel(MA, node=int(n), x=float(mesh.nodes[n]), dx=float(dx[j])),
            fields[:, c],
        )
        for c, (n, j) in enumerate(zip(nodes, sel))
    ]


def solve_ma_mode(mesh: Mesh1D, profile: MediumProfile, omega, node, system=None) -> DiscreteMode:
    return solve_ma_modes(mesh, profile, omega, [node], system=system)[0]


def green_function(mesh: Mesh1D, profile: MediumProfile, omega, x_source, system=None):
    """Nodal coefficients of ``G(., x_source)`` for a unit point source."""
    if system is None:
        system = fem1d.assemble_system(mesh, profile, omega)
    return fem1d.solve_banded(system, fem1d.point_load(mesh, x_source))


# --------------------------------------------------------------------------
# spectral response and the adaptive frequency grid


class ResponseProbe:
    """Classical unit point drive: ``omega -> G(x_p, x_p, omega)``.

    Several probe points give a vector amplitude (one drive per point).
    """

    def __init__(self, mesh: Mesh1D, profile: MediumProfile, x_probe):
        self.mesh = mesh
        self.profile = profile
        self.x_probe = np.atleast_1d(np.asarray(x_probe, dtype=float))
        self._loads = np.stack([fem1d.point_load(mesh, x) for x in self.x_probe], axis=1)

    def __call__(self, omega):
        system = fem1d.assemble_system(self.mesh, self.profile, omega)
        g = fem1d.solve_banded(system, self._loads)
        vals = np.array([fem1d.evaluate_field(g[:, i], self.mesh, x) for i, x in enumerate(self.x_probe)])
        return vals


@dataclass
class SpectralResponse:
    omegas: np.ndarray
    amplitudes: np.ndarray  # (n,) or (n, n_probe)
    omega_c: float | None = None
    fwhm: float | None = None
    reliable: bool = False
    notes: list = field(default_factory=list)

    @property
    def kappa(self):
        """Half width at half maximum of ``|A|^2`` (cavity field decay rate)."""
        return None if self.fwhm is None else 0.5 * self.fwhm

    @property
    def quality_factor(self):
        if self.fwhm is None or self.omega_c is None:
            return None
        return self.omega_c / self.fwhm

    @property
    def power(self):
        a = np.asarray(self.amplitudes)
        return np.abs(a) ** 2 if a.ndim == 1 else np.abs(a[:, 0]) ** 2

    def __post_init__(self):
        self.omegas = np.asarray(self.omegas, dtype=float)
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if np.any(np.diff(self.omegas) <= 0):
            raise ValueError("frequency samples must be strictly increasing")
        if self.omega_c is None and len(self.omegas) > 2:
            self._peak_stats()

    def _peak_stats(self):
        p = self.power
        w = self.omegas
        i = int(np.argmax(p))
        if i == 0 or i == len(p) - 1:
            self.notes.append("peak on band edge")
            self.omega_c = None
            self.fwhm = None
            self.reliable = False
            return
        self.omega_c = float(w[i])
        half = 0.5 * p[i]
        left = i
        while left > 0 and p[left - 1] >= half:
            left -= 1
        right = i
        while right < len(p) - 1 and p[right + 1] >= half:
            right += 1
        if left == 0 or right == len(p) - 1:
            self.notes.append("half maximum not bracketed inside the band")
            self.fwhm = None
            self.reliable = False
            return
        wl = np.interp(half, [p[left - 1], p[left]], [w[left - 1], w[left]])
        wr = np.interp(half, [p[right + 1], p[right]], [w[right + 1], w[right]])
        self.fwhm = float(wr - wl)
        self.reliable = True


def spectral_response(mesh: Mesh1D, profile: MediumProfile, band, x_probe, n=201, omegas=None) -> SpectralResponse:
    """Sweep a unit point drive over ``band`` and record the field at the probe."""
    lo, hi = band
    if not lo > 0:
        raise ValueError("band must start above zero")
    if omegas is None:
        omegas = np.linspace(lo, hi, n)
    probe = ResponseProbe(mesh, profile, x_probe)
    amps = np.array([probe(w) for w in omegas])
    if amps.shape[1] == 1:
        amps = amps[:, 0]
    return SpectralResponse(omegas, amps)


@dataclass
class FrequencyGrid:
    omegas: np.ndarray
    weights: np.ndarray  # midpoint-rule cell widths
    amplitudes: np.ndarray | None = None
    max_error: float = 0.0
    warning: str | None = None

    def __len__(self):
        return len(self.omegas)

    def __iter__(self):
        return iter(zip(self.omegas, self.weights))

    def response(self):
        return SpectralResponse(self.omegas, self.amplitudes)


def midpoint_weights(omegas):
    w = np.asarray(omegas, dtype=float)
    if len(w) == 1:
        return np.array([0.0])
    gaps = np.diff(w)
    out = np.zeros_like(w)
    out[:-1] += 0.5 * gaps
    out[1:] += 0.5 * gaps
    return out


def uniform_grid(band, n):
    w = np.linspace(band[0], band[1], n)
    return FrequencyGrid(w, midpoint_weights(w))


def _jumps(amps):
    a = np.asarray(amps)
    d = np.diff(a, axis=0)
    return np.abs(d) if a.ndim == 1 else np.linalg.norm(d, axis=1)


def _magnitude(amps):
    a = np.asarray(amps)
    return np.abs(a) if a.ndim == 1 else np.linalg.norm(a, axis=1)


def adaptive_frequency_grid(evaluate, band, budget=400, tol=0.05, n_coarse=32) -> FrequencyGrid:
    """Greedy bisection driven by the complex amplitude jump between samples.

    Each round bisects every interval whose jump exceeds ``tol * max|A|``,
    largest jumps first, until the budget runs out.
    """
    if budget < 16:
        raise ValueError("budget must allow at least 16 samples")
    lo, hi = band
    omegas = list(np.linspace(lo, hi, min(n_coarse, budget)))
    amps = [np.asarray(evaluate(w)) for w in omegas]
    while True:
        scale = float(np.max(_magnitude(amps)))
        jumps = _jumps(amps)
        bad = np.flatnonzero(jumps > tol * scale)
        room = budget - len(omegas)
        if len(bad) == 0 or room <= 0:
            break
        order = bad[np.argsort(-jumps[bad], kind="stable")][:room]
        new_w = [0.5 * (omegas[i] + omegas[i + 1]) for i in sorted(order)]
        new_a = [np.asarray(evaluate(w)) for w in new_w]
        merged = sorted(zip(omegas + new_w, range(len(omegas) + len(new_w))), key=lambda p: p[0])
        all_a = amps + new_a
        omegas = [p[0] for p in merged]
        amps = [all_a[p[1]] for p in merged]
    omegas = np.array(omegas)
    amps = np.array(amps)
    scale = float(np.max(_magnitude(amps)))
    err = float(np.max(_jumps(amps)) / scale) if scale > 0 else 0.0
    note = None
    if err > 10 * tol:
        note = f"budget exhausted with max relative jump {err:.3g} > {10 * tol:.3g}"
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    if amps.ndim == 2 and amps.shape[1] == 1:
        amps = amps[:, 0]
    return FrequencyGrid(omegas, midpoint_weights(omegas), amps, err, note)


# --------------------------------------------------------------------------
# coarse graining


def coarse_grain(raw_modes, grid: FrequencyGrid):
    """Assign mode volumes and absorb their square roots into the fields."""
    out = []
    for m in raw_modes:
        if m.cell is None:
            raise ValueError("raw mode is not tagged with its grid cell")
        dw = float(grid.weights[m.cell])
        vol = dw if m.kind == BA else dw * m.label.dx
        out.append(replace(m, field=m.field * np.sqrt(vol), volume=vol))
    return out


def variant_filter(modes, variant):
    """Keep the mode kinds allowed by ``variant`` (bama, ma or ba)."""
    v = variant.lower()
    if v == "bama":
        kept = list(modes)
    elif v == "ma":
        kept = [m for m in modes if m.kind == MA]
    elif v == "ba":
        kept = [m for m in modes if m.kind == BA]
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if not kept:
        raise ValueError(f"variant {variant!r} leaves no field modes")
    return kept


def coupling_matrix(mesh: Mesh1D, fields, positions, dipoles):
    """``gamma[j, l] = d_j E_l(x_j)`` for fields stored column-wise."""
    vals = fem1d.evaluate_field(fields, mesh, np.asarray(positions, dtype=float))
    vals = np.atleast_2d(vals)
    return np.asarray(dipoles, dtype=float)[:, None] * vals


def compress_degenerate(modes, mesh: Mesh1D, positions, dipoles, rtol=1e-12):
    """Rotate each degenerate frequency cell onto the modes the atoms see.

    Within a cell every mode has the same frequency, so any unitary mixing of
    them leaves the field Hamiltonian unchanged.  An SVD of the cell's
    coupling matrix isolates at most ``n_atoms`` bright combinations; the rest
    have exactly zero coupling and never leave the vacuum, so they are
    dropped.  Fields of the bright modes are the same unitary combination.
    """
    groups = {}
    for m in modes:
        groups.setdefault(m.cell if m.cell is not None else m.omega, []).append(m)
    out = []
    for key in sorted(groups, key=lambda c: groups[c][0].omega):
        group = groups[key]
        F = np.stack([m.field for m in group], axis=1)
        gam = coupling_matrix(mesh, F, positions, dipoles)
        _, s, vh = np.linalg.svd(gam, full_matrices=False)
        if len(s) == 0 or s[0] == 0:
            continue
        r = int(np.sum(s > rtol * s[0]))
        bright = F @ vh[:r].conj().T
        m0 = group[0]
        cell_width = m0.volume if m0.kind != MA else m0.volume / m0.label.dx
        for i in range(r):
            out.append(DiscreteMode(m0.omega, DegeneracyLabel(BRIGHT, index=i), bright[:, i], volume=cell_width, cell=m0.cell))
    return out


def _cell_modes(mesh, profile, omega, cell, weight, variant):
    system = fem1d.assemble_system(mesh, profile, omega)
    raw = []
    if variant in ("bama", "ba"):
        for d in ba_directions(profile):
            raw.append(solve_ba_mode(mesh, profile, omega, d, system=system))
    if variant in ("bama", "ma"):
        src, _, _ = ma_sources(mesh, profile, omega)
        if len(src):
            raw.extend(solve_ma_modes(mesh, profile, omega, src, system=system))
    for m in raw:
        m.cell = cell
    return raw


def extract_modes(mesh, profile, grid: FrequencyGrid, variant="bama", atoms=None, compress=False, threads=1):
    """Solve, coarse-grain and optionally compress all modes on ``grid``.

    Frequencies are processed independently; with ``compress`` each cell is
    reduced right after it is solved so the full MA family is never held in
    memory.  Output order is (omega, kind, label).
    """
    variant = variant.lower()
    if compress and atoms is None:
        raise ValueError("compression needs the atom positions and dipoles")

    def work(cell):
        omega = float(grid.omegas[cell])
        raw = _cell_modes(mesh, profile, omega, cell, grid.weights[cell], variant)
        modes = [m for m in coarse_grain(raw, grid) if m.volume > 0]
        if compress and modes:
            modes = compress_degenerate(modes, mesh, [a.x for a in atoms], [a.d_eg for a in atoms])
        return modes

    cells = range(len(grid))
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(work, cells))
    else:
        chunks = [work(c) for c in cells]
    modes = [m for chunk in chunks for m in chunk]
    if not modes:
        raise ValueError(f"variant {variant!r} leaves no field modes")
    return modes


# --------------------------------------------------------------------------
# mode cache


def write_mode_cache(path, modes):
    """Text table, one row per (mode, node), floats at 17 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CACHE_HEADER)
        for m in modes:
            head = [f"{m.omega:.17g}", m.kind, str(m.label), f"{m.volume:.17g}"]
            for i, v in enumerate(m.field):
                w.writerow(head + [str(i), f"{v.real:.17g}", f"{v.imag:.17g}"])


def read_mode_cache(path):
    modes = []
    current = None
    rows = []

    def flush():
        if current is not None:
            omega, kind, label, vol = current
            modes.append(
                DiscreteMode(omega, DegeneracyLabel.parse(kind, label), np.array(rows, dtype=complex), volume=vol)
            )

    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != CACHE_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in r:
            key = (float(row[0]), row[1], row[2], float(row[3]))
            if int(row[4]) == 0:
                flush()
                current = key
                rows = []
            rows.append(complex(float(row[5]), float(row[6])))
    flush()
    # restore cell indices from the frequency ordering
    cells = {w: i for i, w in enumerate(sorted({m.omega for m in modes}))}
    for m in modes:
        m.cell = cells[m.omega]
    return modes
