from itertools import product
from math import comb

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from mmjc import fem1d, modes, quanta

OMEGA = 50.0
LAM = 2 * np.pi / OMEGA


def brute_force_count(n_atoms, n_modes, q):
    """Count occupation patterns by exhaustive search (occupations 0..q per mode)."""
    count = 0
    for a in product((0, 1), repeat=n_atoms):
        rest = q - sum(a)
        if rest < 0:
            continue
        count += sum(1 for occ in product(range(rest + 1), repeat=n_modes) if sum(occ) == rest)
    return count


def test_two_atoms_three_modes_single_quantum():
    b = quanta.enumerate_basis(2, 3, 1)
    names = [str(s) for s in b.states[b.block_slice(1)]]
    assert names == ["|eg;0>", "|ge;0>", "|gg;0>", "|gg;1>", "|gg;2>"]


def test_two_atoms_three_modes_two_quanta():
    b = quanta.enumerate_basis(2, 3, 2)
    assert b.block_size(2) == 13
    assert b.block_size(0) == 1
    assert len(b) == 1 + 5 + 13


def test_single_atom_no_modes():
    b = quanta.enumerate_basis(1, 0, 1)
    assert [s.atoms for s in b.states] == [(0,), (1,)]


@pytest.mark.parametrize("n_atoms", [1, 2, 3, 4])
@pytest.mark.parametrize("n_modes", [0, 1, 2, 3, 4, 5, 6])
def test_block_counts_match_brute_force(n_atoms, n_modes):
    b = quanta.enumerate_basis(n_atoms, n_modes, 2)
    for q in range(3):
        n = brute_force_count(n_atoms, n_modes, q)
        assert b.block_size(q) == n == quanta.block_dimension(n_atoms, n_modes, q)
    # closed forms
    assert b.block_size(1) == n_atoms + n_modes
    assert b.block_size(2) == comb(n_atoms, 2) + n_atoms * n_modes + comb(n_modes + 1, 2)
    # complete and duplicate-free
    keys = {(s.atoms, s.field) for s in b.states}
    assert len(keys) == len(b)


def test_basis_ordering_deterministic():
    a = quanta.enumerate_basis(3, 4, 2)
    b = quanta.enumerate_basis(3, 4, 2)
    assert a.states == b.states
    q = a.quanta
    assert np.all(np.diff(q) >= 0)
    for i, s in enumerate(a.states):
        assert a.find(s.atoms, s.field) == i


def test_unsupported_truncation():
    with pytest.raises(ValueError):
        quanta.enumerate_basis(2, 3, 3)


def test_bare_state_quanta():
    s = quanta.BareState((1, 0, 1), (2, 2, 5))
    assert s.quanta == 5
    assert s.occupation(2) == 2 and s.occupation(0) == 0


# --- couplings ---------------------------------------------------------------

def vacuum_modes(n=5):
    dom = fem1d.Domain(-LAM, LAM, OMEGA, pml=fem1d.PML(1.75 * LAM, 1.75 * LAM))
    mesh = fem1d.build_mesh(dom)
    prof = dom.profile()
    grid = modes.uniform_grid((45.0, 55.0), n)
    return mesh, modes.extract_modes(mesh, prof, grid, "ba")


def test_coupling_is_dipole_times_field():
    mesh, ms = vacuum_modes()
    a = quanta.AtomSpec(OMEGA, 0.1, 0.013)
    g = quanta.coupling_strengths([a], ms, mesh)
    for l, m in enumerate(ms):
        assert g[0, l] == pytest.approx(0.1 * fem1d.evaluate_field(m.field, mesh, 0.013))
    g2 = quanta.coupling_strengths([quanta.AtomSpec(OMEGA, 0.2, 0.013)], ms, mesh)
    assert np.allclose(np.abs(g2), 2 * np.abs(g), rtol=1e-14)


def test_coupling_vanishes_at_mirror():
    x_m = 2 * LAM
    dom = fem1d.Domain(0.0, x_m, OMEGA, pec=((x_m, x_m),), pml=fem1d.PML(1.75 * LAM, 0.0))
    mesh, prof = fem1d.build_mesh(dom), dom.profile()
    ms = modes.extract_modes(mesh, prof, modes.uniform_grid((45.0, 55.0), 5), "ba")
    assert np.all(quanta.coupling_strengths([quanta.AtomSpec(OMEGA, 0.1, x_m)], ms, mesh) == 0)


def test_coupling_translation_invariance():
    def gam(shift):
        dom = fem1d.Domain(-LAM + shift, LAM + shift, OMEGA, walls=(fem1d.Wall(0.4 * LAM + shift, 0.6 * LAM + shift, 50.0),),
                           pml=fem1d.PML(1.75 * LAM, 1.75 * LAM))
        mesh, prof = fem1d.build_mesh(dom), dom.profile()
        ms = modes.extract_modes(mesh, prof, modes.uniform_grid((45.0, 55.0), 3), "bama")
        return np.abs(quanta.coupling_strengths([quanta.AtomSpec(OMEGA, 0.1, 0.1 * LAM + shift)], ms, mesh))

    a, b = gam(0.0), gam(0.37 * LAM)
    assert np.max(np.abs(a - b)) <= 1e-3 * np.max(a)


def test_atom_validation():
    with pytest.raises(ValueError):
        quanta.AtomSpec(0.0, 0.1, 0.0)
    dom = fem1d.Domain(-LAM, LAM, OMEGA, walls=(fem1d.Wall(0.05, 0.08, 1.0),), pml=fem1d.PML(LAM, LAM))
    mesh = fem1d.build_mesh(dom)
    with pytest.raises(ValueError):
        quanta.check_atoms([quanta.AtomSpec(OMEGA, 0.1, 0.06)], mesh)  # inside the wall
    with pytest.raises(ValueError):
        quanta.check_atoms([quanta.AtomSpec(OMEGA, 0.1, LAM + 0.5 * LAM)], mesh)  # inside the PML
    quanta.check_atoms([quanta.AtomSpec(OMEGA, 0.1, 0.0)], mesh)


def test_reference_scales():
    a = quanta.AtomSpec(50.0, 0.075, 0.0)
    assert quanta.free_space_rate(a) == pytest.approx(0.28125)
    assert quanta.reference_rabi_period(a) == pytest.approx(np.pi / (0.075 * 50 / np.sqrt(np.pi)))


# --- Hamiltonian -----------------------------------------------------------------

def test_two_level_block_and_rabi_gap():
    atoms = [quanta.AtomSpec(OMEGA, 1.0, 0.0)]
    b = quanta.enumerate_basis(1, 1, 1)
    gam = 0.3 + 0.4j
    H = quanta.assemble_hamiltonian(b, atoms, [OMEGA], [[gam]])
    blk = H.block(1).toarray()
    e, g1 = b.single_excitation(0) - 1, b.photon(0) - 1
    assert blk[e, e] == OMEGA / 2
    assert blk[g1, g1] == -OMEGA / 2 + OMEGA
    assert blk[e, g1] == -gam
    assert blk[g1, e] == -np.conj(gam)
    ev = np.linalg.eigvalsh(blk)
    assert ev[1] - ev[0] == pytest.approx(2 * abs(gam), rel=1e-14)
    assert H.block(0).toarray()[0, 0] == -OMEGA / 2


def brute_force_hamiltonian(n_modes, omegas, gam, wa, nmax=2):
    """Dense H in a full tensor-product space (atom x modes with occupations 0..nmax)."""
    sm = np.array([[0, 1], [0, 0]], dtype=complex)  # sigma^- = |g><e| in (g, e) ordering
    a = np.diag(np.sqrt(np.arange(1, nmax + 1)), 1).astype(complex)
    dims = [2] + [nmax + 1] * n_modes

    def op(single, slot):
        mats = [np.eye(d) for d in dims]
        mats[slot] = single
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        return out

    sz = np.diag([-1.0, 1.0])
    H = 0.5 * wa * op(sz, 0)
    for l in range(n_modes):
        bl = op(a, l + 1)
        H = H + omegas[l] * bl.conj().T @ bl
        H = H - (gam[l] * op(sm.conj().T, 0) @ bl + np.conj(gam[l]) * op(sm, 0) @ bl.conj().T)
    return H, dims


def tensor_index(state, dims):
    occ = [state.atoms[0]] + [state.occupation(l) for l in range(len(dims) - 1)]
    return int(np.ravel_multi_index(occ, dims))


def test_hamiltonian_matches_brute_force_operators():
    omegas = [49.0, 51.5]
    gam = [0.2 - 0.1j, -0.35 + 0.05j]
    wa = 50.0
    atoms = [quanta.AtomSpec(wa, 1.0, 0.0)]
    b = quanta.enumerate_basis(1, 2, 2)
    H = quanta.assemble_hamiltonian(b, atoms, omegas, [gam]).toarray()
    Hb, dims = brute_force_hamiltonian(2, omegas, gam, wa)
    idx = [tensor_index(s, dims) for s in b.states]
    assert np.allclose(H, Hb[np.ix_(idx, idx)], rtol=0, atol=1e-13)
    # two photons in mode 0 couple to (e, one photon) with sqrt(2) gamma
    i = b.find((0,), (0, 0))
    j = b.find((1,), (0,))
    assert H[j, i] == pytest.approx(-np.sqrt(2) * gam[0])


def random_setup(seed, n_atoms=2, n_modes=4, M=2):
    rng = np.random.default_rng(seed)
    atoms = [quanta.AtomSpec(50.0 + rng.normal(), 0.1, 0.0) for _ in range(n_atoms)]
    omegas = 50.0 + rng.normal(size=n_modes)
    gam = rng.normal(size=(n_atoms, n_modes)) + 1j * rng.normal(size=(n_atoms, n_modes))
    b = quanta.enumerate_basis(n_atoms, n_modes, M)
    return b, quanta.assemble_hamiltonian(b, atoms, omegas, gam), atoms


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(0, 6))
def test_hermitian_and_block_diagonal(seed, n_atoms, n_modes):
    b, H, _ = random_setup(seed, n_atoms, n_modes)
    assert H.hermitian_defect() == 0.0
    full = H.toarray()
    q = b.quanta
    assert np.all(full[q[:, None] != q[None, :]] == 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 2))
def test_block_vectors_stay_in_block(seed, q):
    b, H, _ = random_setup(seed)
    rng = np.random.default_rng(seed + 1)
    psi = b.zero()
    sl = b.block_slice(q)
    psi[sl] = rng.normal(size=sl.stop - sl.start) + 1j * rng.normal(size=sl.stop - sl.start)
    out = H.matrix() @ psi
    mask = np.ones(len(b), dtype=bool)
    mask[sl] = False
    assert np.linalg.norm(out[mask]) == 0.0


def test_zero_coupling_is_diagonal():
    b = quanta.enumerate_basis(2, 3, 2)
    atoms = [quanta.AtomSpec(50.0, 0.1, 0.0)] * 2
    H = quanta.assemble_hamiltonian(b, atoms, [49.0, 50.0, 51.0], np.zeros((2, 3)))
    full = H.toarray()
    assert np.count_nonzero(full - np.diag(np.diag(full))) == 0


def test_rotating_frame_is_a_block_shift():
    b, H, atoms = random_setup(3)
    R = quanta.rotating_frame(H, atoms, 50.0)
    e_g = -0.5 * sum(a.omega_a for a in atoms)
    for q in H.blocks:
        d = (H.block(q) - R.block(q)).toarray()
        assert np.allclose(d, (e_g + q * 50.0) * np.eye(d.shape[0]), rtol=0, atol=1e-12)
        assert R.energy_shift[q] == e_g + q * 50.0
    assert sp.issparse(R.block(1))


def test_expectation_quanta():
    b = quanta.enumerate_basis(2, 3, 2)
    psi = b.zero()
    psi[b.find((1, 0))] = 1
    assert quanta.expectation_quanta(psi, b) == 1.0
    psi = b.zero()
    psi[b.find((1, 0))] = psi[b.photon(1)] = 1 / np.sqrt(2)
    assert quanta.expectation_quanta(psi, b) == pytest.approx(1.0)
    psi = b.zero()
    psi[b.find((1, 1))] = 1
    assert quanta.expectation_quanta(psi, b) == 2.0
    with pytest.raises(ValueError):
        quanta.expectation_quanta(b.zero(), b)
