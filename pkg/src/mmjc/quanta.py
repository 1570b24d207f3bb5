"""Quanta-number basis and the multimode Tavis-Cummings Hamiltonian.

The rotating-wave Hamiltonian conserves the number of quanta (atomic
excitations plus photons), so it is block diagonal with one block per quanta
number.  Blocks are stored as sparse matrices; the two-quanta block of a
two-atom system with a few hundred modes already has tens of thousands of
states.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, combinations_with_replacement
from math import comb

import numpy as np
import scipy.sparse as sp

from . import fem1d


@dataclass(frozen=True)
class AtomSpec:
    omega_a: float
    d_eg: float
    x: float

    def __post_init__(self):
        if not self.omega_a > 0:
            raise ValueError("transition frequency must be positive")
        if not self.d_eg > 0:
            raise ValueError("dipole moment must be positive")


def check_atoms(atoms, mesh: fem1d.Mesh1D):
    """Atoms must sit in vacuum, inside the mesh."""
    lo, hi = mesh.extent
    for a in atoms:
        if not lo <= a.x <= hi:
            raise ValueError(f"atom at x={a.x} lies outside the mesh")
        e, _, _ = fem1d.hat_values(mesh, a.x)
        tags = {mesh.regions[e[0]]}
        # a node shared with a neighbour element counts for both
        if e[0] + 1 < len(mesh.regions) and np.isclose(a.x, mesh.nodes[e[0] + 1]):
            tags.add(mesh.regions[e[0] + 1])
        if e[0] > 0 and np.isclose(a.x, mesh.nodes[e[0]]):
            tags.add(mesh.regions[e[0] - 1])
        if tags - {fem1d.VACUUM}:
            raise ValueError(f"atom at x={a.x} is not in vacuum (regions {sorted(tags)})")


def reference_rabi_period(atom: AtomSpec):
    """``pi / g`` for an ideal half-wavelength cavity with the atom at the antinode.

    The single-mode coupling there is ``g = d sqrt(omega / L) = d omega / sqrt(pi)``.
    """
    g = atom.d_eg * atom.omega_a / np.sqrt(np.pi)
    return np.pi / g


def free_space_rate(atom: AtomSpec):
    """Spontaneous emission rate of a 1D two-level atom in vacuum."""
    return atom.d_eg**2 * atom.omega_a


@dataclass(frozen=True)
class BareState:
    """``atoms`` is a 0/1 tuple; ``field`` is a sorted tuple of occupied mode indices
    (a mode appears once per photon)."""

    atoms: tuple
    field: tuple = ()

    @property
    def quanta(self):
        return sum(self.atoms) + len(self.field)

    def occupation(self, mode):
        return self.field.count(mode)

    def __str__(self):
        a = "".join("e" if b else "g" for b in self.atoms)
        f = ",".join(str(l) for l in self.field) or "0"
        return f"|{a};{f}>"


@dataclass
class Basis:
    states: list
    n_atoms: int
    n_modes: int
    max_quanta: int
    index: dict = field(repr=False, default_factory=dict)
    blocks: dict = field(default_factory=dict)  # q -> slice

    def __len__(self):
        return len(self.states)

    @property
    def quanta(self):
        return np.array([s.quanta for s in self.states])

    def block_slice(self, q):
        return self.blocks[q]

    def block_size(self, q):
        s = self.blocks[q]
        return s.stop - s.start

    def find(self, atoms, field=()):
        return self.index[(tuple(atoms), tuple(sorted(field)))]

    def ground(self):
        return self.find((0,) * self.n_atoms)

    def single_excitation(self, atom):
        a = [0] * self.n_atoms
        a[atom] = 1
        return self.find(a)

    def photon(self, mode):
        return self.find((0,) * self.n_atoms, (mode,))

    def zero(self):
        return np.zeros(len(self), dtype=complex)


def _atom_patterns(n_atoms, k):
    """All 0/1 tuples with ``k`` ones, earlier atoms excited first."""
    out = []
    for idx in combinations(range(n_atoms), k):
        out.append(tuple(1 if i in idx else 0 for i in range(n_atoms)))
    return out


def block_dimension(n_atoms, n_modes, q):
    """Number of bare states with exactly ``q`` quanta."""
    def multichoose(n, r):
        return 1 if r == 0 else comb(n + r - 1, r)

    return sum(comb(n_atoms, k) * multichoose(n_modes, q - k) for k in range(0, min(q, n_atoms) + 1))


def enumerate_basis(n_atoms: int, n_modes: int, max_quanta: int) -> Basis:
    """Ordered by quanta number; within a block atomic excitations come first."""
    if n_atoms < 1:
        raise ValueError("need at least one atom")
    if n_modes < 0:
        raise ValueError("negative mode count")
    if max_quanta not in (0, 1, 2):
        raise ValueError("supported quanta truncations are 0, 1 and 2")
    states = []
    blocks = {}
    for q in range(max_quanta + 1):
        start = len(states)
        for k in range(min(q, n_atoms), -1, -1):
            for atoms in _atom_patterns(n_atoms, k):
                for fld in combinations_with_replacement(range(n_modes), q - k):
                    states.append(BareState(atoms, fld))
        blocks[q] = slice(start, len(states))
    index = {(s.atoms, s.field): i for i, s in enumerate(states)}
    return Basis(states, n_atoms, n_modes, max_quanta, index, blocks)


def coupling_strengths(atoms, modes, mesh: fem1d.Mesh1D):
    """``gamma[j, l] = d_j E_l(x_j)``."""
    if not modes:
        return np.zeros((len(atoms), 0), dtype=complex)
    F = np.stack([m.field for m in modes], axis=1)
    x = np.array([a.x for a in atoms])
    d = np.array([a.d_eg for a in atoms])
    vals = np.atleast_2d(fem1d.evaluate_field(F, mesh, x))
    return d[:, None] * vals


@dataclass
class HamiltonianMatrix:
    blocks: dict  # q -> csr_matrix
    basis: Basis
    energy_shift: dict = field(default_factory=dict)  # q -> c_q removed from the block

    @property
    def dim(self):
        return len(self.basis)

    def block(self, q):
        return self.blocks[q]

    def matrix(self):
        return sp.block_diag([self.blocks[q] for q in sorted(self.blocks)], format="csr")

    def toarray(self):
        return self.matrix().toarray()

    def hermitian_defect(self):
        worst = 0.0
        for b in self.blocks.values():
            d = b - b.getH()
            if d.nnz:
                worst = max(worst, float(np.max(np.abs(d.data))))
        return worst

    def shifted(self, shifts):
        """Subtract ``shifts[q] * I`` from each block (an exact frame change)."""
        new = {}
        for q, b in self.blocks.items():
            c = shifts.get(q, 0.0) - self.energy_shift.get(q, 0.0)
            new[q] = (b - c * sp.identity(b.shape[0], dtype=complex, format="csr")).tocsr()
        return HamiltonianMatrix(new, self.basis, dict(shifts))


def assemble_hamiltonian(basis: Basis, atoms, mode_omegas, gamma) -> HamiltonianMatrix:
    """Bare energies on the diagonal, ``-gamma`` between states one photon apart.

    ``H[excited, lowered + photon l] = -gamma[j, l] sqrt(n_l + 1)``.

    Atom energies are ``+-omega_a / 2``; each photon in mode ``l`` adds
    ``omega_l``.
    """
    w = np.asarray([m.omega if hasattr(m, "omega") else m for m in mode_omegas], dtype=float)
    gamma = np.asarray(gamma, dtype=complex).reshape(len(atoms), len(w))
    if len(atoms) != basis.n_atoms or len(w) != basis.n_modes:
        raise ValueError("basis does not match the atoms/modes given")
    wa = np.array([a.omega_a for a in atoms])
    blocks = {}
    for q, sl in basis.blocks.items():
        n = sl.stop - sl.start
        diag = np.empty(n)
        rows, cols, vals = [], [], []
        for p in range(sl.start, sl.stop):
            s = basis.states[p]
            a = np.array(s.atoms)
            diag[p - sl.start] = float(np.sum(np.where(a == 1, 0.5, -0.5) * wa) + sum(w[l] for l in s.field))
            # s -> lower atom j, add a photon in mode l
            for j in np.flatnonzero(a):
                lowered = list(s.atoms)
                lowered[j] = 0
                lowered = tuple(lowered)
                for l in range(len(w)):
                    g = gamma[j, l]
                    if g == 0:
                        continue
                    target = basis.index[(lowered, tuple(sorted(s.field + (l,))))]
                    # -(gamma sigma+ b + gamma* sigma- b^dag): <target|H|p> = -gamma* sqrt(n+1)
                    amp = -np.conj(g) * np.sqrt(s.field.count(l) + 1)
                    rows.append(target - sl.start)
                    cols.append(p - sl.start)
                    vals.append(amp)
                    rows.append(p - sl.start)
                    cols.append(target - sl.start)
                    vals.append(np.conj(amp))
        off = sp.coo_matrix((vals, (rows, cols)), shape=(n, n), dtype=complex)
        blocks[q] = (off + sp.diags(diag.astype(complex))).tocsr()
    return HamiltonianMatrix(blocks, basis)


def rotating_frame(H: HamiltonianMatrix, atoms, omega_ref):
    """Remove ``E_ground + q omega_ref`` from block ``q``.

    This commutes with ``H``, so populations and all intra-block phases are
    unchanged.  Stored amplitudes relate to lab-frame ones through
    ``psi_lab = exp(-i c_q t) psi_stored``.
    """
    e_g = -0.5 * sum(a.omega_a for a in atoms)
    return H.shifted({q: e_g + q * omega_ref for q in H.blocks})


def expectation_quanta(psi, basis: Basis):
    psi = np.asarray(psi)
    p = np.abs(psi) ** 2
    nrm = p.sum()
    if nrm == 0:
        raise ValueError("zero state")
    return float(np.dot(p, basis.quanta) / nrm)
