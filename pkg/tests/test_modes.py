import numpy as np
import pytest

from mmjc import fem1d, modes, quanta

OMEGA = 50.0
LAM = 2 * np.pi / OMEGA
PML = fem1d.PML(1.75 * LAM, 1.75 * LAM)


def vacuum(ppw=40.0):
    dom = fem1d.Domain(-LAM, LAM, OMEGA, pml=PML, points_per_wavelength=ppw)
    return fem1d.build_mesh(dom), dom.profile()


def cavity(sigma, ppw=200.0, sigma_design=None):
    a, w = LAM / 4, LAM / 1e4
    walls = (fem1d.Wall(-a - w, -a, sigma), fem1d.Wall(a, a + w, sigma))
    dom = fem1d.Domain(-1.25 * LAM, 1.25 * LAM, OMEGA, walls=walls, pml=PML,
                       points_per_wavelength=ppw, sigma_design=sigma_design)
    return fem1d.build_mesh(dom), dom.profile()


def slab(sigmas=(2e3, 5e3)):
    walls = (fem1d.Wall(-0.6 * LAM, -0.4 * LAM, sigmas[0]), fem1d.Wall(0.3 * LAM, 0.45 * LAM, sigmas[1]))
    dom = fem1d.Domain(-LAM, LAM, OMEGA, walls=walls, pml=PML, points_per_wavelength=80)
    return fem1d.build_mesh(dom), dom.profile()


def transfer_matrix_field(layers, omega, x_eval):
    """Field of a unit wave incident from the left on a stack of (x0, x1, eps) layers.

    In region n the field is A_n exp(ik_n (x - l_n)) + B_n exp(-ik_n (x - r_n)),
    with l_n, r_n the region edges, so no exponential overflows in lossy layers.
    """
    bounds = [l[0] for l in layers] + [layers[-1][1]]
    eps = [1.0] + [l[2] for l in layers] + [1.0]
    k = [omega * np.sqrt(complex(e)) for e in eps]
    n = len(eps)
    left = [bounds[0]] + bounds
    right = bounds + [bounds[-1]]

    def basis(i, x, deriv):
        f = np.array([np.exp(1j * k[i] * (x - left[i])), np.exp(-1j * k[i] * (x - right[i]))])
        return f * np.array([1j * k[i], -1j * k[i]]) if deriv else f

    M = np.zeros((2 * n, 2 * n), dtype=complex)
    rhs = np.zeros(2 * n, dtype=complex)
    row = 0
    for i, xb in enumerate(bounds):
        for deriv in (0, 1):
            M[row, 2 * i:2 * i + 2] += basis(i, xb, deriv)
            M[row, 2 * i + 2:2 * i + 4] -= basis(i + 1, xb, deriv)
            row += 1
    M[row, 0] = 1.0  # incident amplitude (referenced to the first boundary)
    rhs[row] = 1.0
    M[row + 1, 2 * n - 1] = 1.0  # nothing incoming from the right
    coef = np.linalg.solve(M, rhs)
    region = np.searchsorted(bounds, x_eval)
    return np.array([coef[2 * r:2 * r + 2] @ basis(r, x, 0) for r, x in zip(region, x_eval)])


# --- BA modes ----------------------------------------------------------------

def test_vacuum_ba_amplitude_uniform():
    mesh, prof = vacuum()
    for d in (1, -1):
        m = modes.solve_ba_mode(mesh, prof, OMEGA, d)
        assert np.allclose(np.abs(m.field), np.sqrt(OMEGA / 2) / np.sqrt(2 * np.pi), rtol=1e-13)
        assert m.volume is None


def test_pec_mirror_standing_wave():
    x_m = 2 * LAM
    dom = fem1d.Domain(0.0, x_m, OMEGA, pec=((x_m, x_m),), pml=fem1d.PML(1.75 * LAM, 0.0),
                       points_per_wavelength=200)
    mesh, prof = fem1d.build_mesh(dom), dom.profile()
    assert modes.ba_directions(prof) == [1]
    m = modes.solve_ba_mode(mesh, prof, OMEGA, 1)
    assert m.field[-1] == 0
    x = mesh.nodes[(mesh.nodes >= 0) & (mesh.nodes < x_m - 0.05 * LAM)]
    e = fem1d.evaluate_field(m.field, mesh, x)
    ref = np.sin(OMEGA * (x_m - x))
    c = np.vdot(ref, e) / np.vdot(ref, ref)
    assert np.linalg.norm(e - c * ref) / np.linalg.norm(e) < 2e-3
    # amplitude of a fully reflected standing wave: 2 |prefactor|
    assert abs(c) == pytest.approx(2 * np.sqrt(OMEGA / 2) / np.sqrt(2 * np.pi), rel=2e-3)


def test_wall_shielding_matches_transfer_matrix():
    sigma = 1e11
    mesh, prof = cavity(sigma)
    omega = 47.0
    m = modes.solve_ba_mode(mesh, prof, omega, 1)
    pref = 1j / np.sqrt(2 * np.pi) * np.sqrt(omega / 2)
    inner = mesh.nodes[np.abs(mesh.nodes) < LAM / 4 * 0.9]
    outer = mesh.nodes[(mesh.nodes < -LAM / 4 - 0.1 * LAM) & (mesh.nodes > -1.25 * LAM)]
    e_in = fem1d.evaluate_field(m.field, mesh, inner) / pref
    e_out = fem1d.evaluate_field(m.field, mesh, outer) / pref
    assert np.max(np.abs(e_in)) < 1e-3 * np.max(np.abs(e_out))
    w = LAM / 1e4
    eps = 1 + 1j * sigma / omega
    layers = [(-LAM / 4 - w, -LAM / 4, eps), (-LAM / 4, LAM / 4, 1.0), (LAM / 4, LAM / 4 + w, eps)]
    phase = np.exp(1j * omega * layers[0][0])
    ref_out = transfer_matrix_field(layers, omega, outer) * phase
    assert np.linalg.norm(e_out - ref_out) / np.linalg.norm(ref_out) < 2e-3
    # the interior field is attenuated by ~20 skin depths on a 10-points-per-skin-depth
    # wall mesh; the discrete decay constant then carries a few-percent error overall
    ref_in = transfer_matrix_field(layers, omega, inner) * phase
    assert np.max(np.abs(ref_in)) < 1e-10 * np.max(np.abs(ref_out))
    assert np.linalg.norm(e_in - ref_in) / np.linalg.norm(ref_in) < 0.1


def test_ba_direction_validated():
    mesh, prof = vacuum()
    with pytest.raises(ValueError):
        modes.solve_ba_mode(mesh, prof, OMEGA, 0)


# --- MA modes ----------------------------------------------------------------

def test_ma_at_source_is_scaled_green_function():
    mesh, prof = slab()
    nodes, dx, chi = modes.ma_sources(mesh, prof, OMEGA)
    n = nodes[len(nodes) // 3]
    m = modes.solve_ma_mode(mesh, prof, OMEGA, n)
    g = modes.green_function(mesh, prof, OMEGA, mesh.nodes[n])
    amp = 1j * OMEGA**2 * np.sqrt(chi[len(nodes) // 3] / np.pi)
    assert m.field[n] == pytest.approx(amp * g[n], rel=1e-12)
    assert m.label.kind == modes.MA and m.label.node == n and m.label.dx == dx[len(nodes) // 3]


def test_ma_reciprocity_between_walls():
    mesh, prof = slab()
    nodes, _, chi = modes.ma_sources(mesh, prof, OMEGA)
    i, j = 3, len(nodes) - 4  # one source in each wall
    mi = modes.solve_ma_mode(mesh, prof, OMEGA, nodes[i])
    mj = modes.solve_ma_mode(mesh, prof, OMEGA, nodes[j])
    a = mi.field[nodes[j]] / np.sqrt(chi[i])
    b = mj.field[nodes[i]] / np.sqrt(chi[j])
    assert abs(a - b) <= 1e-8 * abs(a)
    assert chi[i] != pytest.approx(chi[j])


def test_ma_vanishes_with_conductivity():
    norms = []
    for s in (1e2, 1e0, 1e-2):
        mesh, prof = slab((s, s))
        ms = modes.solve_ma_modes(mesh, prof, OMEGA)
        norms.append(max(np.max(np.abs(m.field)) for m in ms))
    assert norms[1] / norms[0] == pytest.approx(0.1, rel=0.05)
    assert norms[2] / norms[1] == pytest.approx(0.1, rel=0.01)


def test_ma_source_outside_wall_rejected():
    mesh, prof = slab()
    with pytest.raises(ValueError):
        modes.solve_ma_mode(mesh, prof, OMEGA, int(np.argmin(np.abs(mesh.nodes))))


def test_no_ma_sources_without_loss():
    mesh, prof = cavity(0.0, ppw=40)
    nodes, _, _ = modes.ma_sources(mesh, prof, OMEGA)
    assert len(nodes) == 0
    assert modes.solve_ma_modes(mesh, prof, OMEGA) == []


def test_ma_dual_cells_cover_walls():
    mesh, prof = cavity(1e11, ppw=40)
    _, dx, _ = modes.ma_sources(mesh, prof, OMEGA)
    assert dx.sum() == pytest.approx(2 * LAM / 1e4, rel=1e-10)


# --- spectral response and grids ----------------------------------------------

def test_free_space_response_is_flat():
    mesh, prof = vacuum()
    sp = modes.spectral_response(mesh, prof, (45.0, 55.0), 0.0, n=41)
    assert sp.fwhm is None and sp.kappa is None
    assert not sp.reliable
    assert sp.notes


def test_response_requires_positive_band():
    mesh, prof = vacuum()
    with pytest.raises(ValueError):
        modes.spectral_response(mesh, prof, (0.0, 1.0), 0.0)


def test_lorentzian_peak_stats():
    w = np.linspace(49, 51, 2001)
    f = 0.2
    a = 1 / (w - 50.0 + 0.5j * f)
    sp = modes.SpectralResponse(w, a)
    assert sp.omega_c == pytest.approx(50.0)
    assert sp.fwhm == pytest.approx(f, rel=1e-4)
    assert sp.kappa == pytest.approx(f / 2, rel=1e-4)
    assert sp.quality_factor == pytest.approx(50.0 / f, rel=1e-4)


def test_peak_on_band_edge_flagged():
    w = np.linspace(49, 51, 101)
    sp = modes.SpectralResponse(w, 1 / (w - 48.0 + 0.1j))
    assert sp.omega_c is None and "peak on band edge" in sp.notes


def test_nonincreasing_samples_rejected():
    with pytest.raises(ValueError):
        modes.SpectralResponse([1.0, 1.0, 2.0], [1, 2, 3])


def lorentz(w0=50.003, f=0.001):
    return lambda w: 1.0 / (w - w0 + 0.5j * f)


def test_adaptive_grid_resolves_lorentzian():
    f = 0.001
    grid = modes.adaptive_frequency_grid(lorentz(f=f), (45.0, 55.0), budget=400, tol=0.05)
    inside = np.sum(np.abs(grid.omegas - 50.003) <= f)
    assert inside >= 8
    assert grid.warning is None


def test_flat_response_keeps_uniform_grid():
    grid = modes.adaptive_frequency_grid(lambda w: 1.0 + 0j, (45.0, 55.0))
    assert np.array_equal(grid.omegas, np.linspace(45.0, 55.0, 32))


def test_grid_partition_exact():
    grid = modes.adaptive_frequency_grid(lorentz(), (45.0, 55.0))
    assert grid.weights.sum() == pytest.approx(10.0, rel=1e-12)
    u = modes.uniform_grid((10.0, 90.0), 801)
    assert u.weights.sum() == pytest.approx(80.0, rel=1e-12)


@pytest.mark.filterwarnings("ignore:budget exhausted:RuntimeWarning")  # small budgets run out by design
def test_refinement_monotone_in_budget():
    errs = [modes.adaptive_frequency_grid(lorentz(f=0.01), (45.0, 55.0), budget=b).max_error
            for b in (40, 80, 160, 320)]
    assert all(b <= a for a, b in zip(errs[:-1], errs[1:]))


def test_budget_floor_and_exhaustion_warning():
    with pytest.raises(ValueError):
        modes.adaptive_frequency_grid(lorentz(), (45.0, 55.0), budget=15)
    with pytest.warns(RuntimeWarning):
        g = modes.adaptive_frequency_grid(lorentz(f=1e-4), (45.0, 55.0), budget=34, tol=0.01)
    assert g.warning


def test_cavity_grid_dense_near_resonance():
    mesh, prof = cavity(1e11, ppw=40)
    grid = modes.adaptive_frequency_grid(modes.ResponseProbe(mesh, prof, 0.0), (45.0, 55.0))
    gaps = np.diff(grid.omegas)
    imin = np.argmin(gaps)
    assert abs(grid.omegas[imin] - 50.0) < 0.2
    assert gaps.max() / gaps.min() > 100


# --- coarse graining --------------------------------------------------------------

def raw_ba(n_freq=5):
    mesh, prof = vacuum()
    grid = modes.uniform_grid((45.0, 55.0), n_freq)
    raw = []
    for cell, w in enumerate(grid.omegas):
        for d in modes.ba_directions(prof):
            m = modes.solve_ba_mode(mesh, prof, w, d)
            m.cell = cell
            raw.append(m)
    return mesh, prof, grid, raw


def test_coarse_grain_ba_count_and_scaling():
    mesh, prof, grid, raw = raw_ba()
    cg = modes.coarse_grain(raw, grid)
    assert len(cg) == 2 * len(grid)
    for r, m in zip(raw, cg):
        assert m.volume == grid.weights[r.cell]
        assert np.allclose(m.field, r.field * np.sqrt(m.volume))


def test_doubled_volume_scales_by_sqrt2():
    _, _, grid, raw = raw_ba()
    a = modes.coarse_grain(raw, grid)
    g2 = modes.FrequencyGrid(grid.omegas, 2 * grid.weights)
    b = modes.coarse_grain(raw, g2)
    assert np.allclose(b[3].field, np.sqrt(2) * a[3].field, rtol=1e-14)


def test_untagged_mode_rejected():
    _, _, grid, raw = raw_ba()
    raw[0].cell = None
    with pytest.raises(ValueError):
        modes.coarse_grain(raw, grid)


def test_ma_volume_includes_dual_cell():
    mesh, prof = slab()
    grid = modes.uniform_grid((49.0, 51.0), 3)
    ms = modes.extract_modes(mesh, prof, grid, "ma")
    for m in ms:
        assert m.volume == pytest.approx(grid.weights[m.cell] * m.label.dx)


def test_full_mode_count():
    mesh, prof = cavity(1e11, ppw=40)
    grid = modes.uniform_grid((45.0, 55.0), 4)
    ms = modes.extract_modes(mesh, prof, grid, "bama")
    n_ma = len(modes.ma_sources(mesh, prof, OMEGA)[0])
    assert len(ms) == 4 * (2 + n_ma)
    key = [(m.omega, m.kind) for m in ms]
    assert key == sorted(key, key=lambda k: k[0])


def test_variant_filter():
    mesh, prof = slab()
    grid = modes.uniform_grid((49.0, 51.0), 3)
    ms = modes.extract_modes(mesh, prof, grid, "bama")
    assert len(modes.variant_filter(ms, "bama")) == len(ms)
    assert all(m.kind == modes.MA for m in modes.variant_filter(ms, "ma"))
    assert all(m.kind == modes.BA for m in modes.variant_filter(ms, "ba"))
    ba_only = modes.variant_filter(ms, "ba")
    with pytest.raises(ValueError):
        modes.variant_filter(ba_only, "ma")
    with pytest.raises(ValueError):
        modes.variant_filter(ms, "xyz")


def test_ma_variant_without_loss_errors():
    mesh, prof = cavity(0.0, ppw=40)
    with pytest.raises(ValueError):
        modes.extract_modes(mesh, prof, modes.uniform_grid((49.0, 51.0), 3), "ma")


def test_discrete_mode_validation():
    with pytest.raises(ValueError):
        modes.DiscreteMode(1.0, modes.DegeneracyLabel(modes.BA, direction=1), [np.nan])
    with pytest.raises(ValueError):
        modes.DiscreteMode(1.0, modes.DegeneracyLabel(modes.BA, direction=1), [1.0], volume=0.0)


def test_label_roundtrip():
    for lab in (modes.DegeneracyLabel(modes.BA, direction=1), modes.DegeneracyLabel(modes.BA, direction=-1),
                modes.DegeneracyLabel(modes.MA, node=17), modes.DegeneracyLabel(modes.BRIGHT, index=1)):
        back = modes.DegeneracyLabel.parse(lab.kind, str(lab))
        assert str(back) == str(lab)


# --- compression ---------------------------------------------------------------

def test_compression_preserves_coupling_gram():
    mesh, prof = slab()
    grid = modes.uniform_grid((49.0, 51.0), 3)
    atoms = [quanta.AtomSpec(OMEGA, 0.05, -0.1 * LAM), quanta.AtomSpec(OMEGA, 0.07, 0.1 * LAM)]
    full = modes.extract_modes(mesh, prof, grid, "bama")
    comp = modes.extract_modes(mesh, prof, grid, "bama", atoms=atoms, compress=True)
    assert len(comp) == 2 * len(grid)
    gf = quanta.coupling_strengths(atoms, full, mesh)
    gc = quanta.coupling_strengths(atoms, comp, mesh)
    for cell in range(len(grid)):
        sf = [i for i, m in enumerate(full) if m.cell == cell]
        sc = [i for i, m in enumerate(comp) if m.cell == cell]
        a = gf[:, sf] @ gf[:, sf].conj().T
        b = gc[:, sc] @ gc[:, sc].conj().T
        assert np.allclose(a, b, rtol=1e-10, atol=0)
        assert all(comp[i].omega == grid.omegas[cell] for i in sc)
        assert all(comp[i].volume == grid.weights[cell] for i in sc)


def test_compression_needs_atoms():
    mesh, prof = vacuum()
    with pytest.raises(ValueError):
        modes.extract_modes(mesh, prof, modes.uniform_grid((49.0, 51.0), 3), compress=True)


def test_threads_give_identical_modes():
    mesh, prof = slab()
    grid = modes.uniform_grid((49.0, 51.0), 5)
    a = modes.extract_modes(mesh, prof, grid, "bama", threads=1)
    b = modes.extract_modes(mesh, prof, grid, "bama", threads=3)
    assert all(np.array_equal(x.field, y.field) and x.omega == y.omega for x, y in zip(a, b))


# --- cache ----------------------------------------------------------------

def test_mode_cache_roundtrip(tmp_path):
    mesh, prof = slab()
    grid = modes.uniform_grid((49.0, 51.0), 3)
    ms = modes.extract_modes(mesh, prof, grid, "bama")
    path = tmp_path / "modes.csv"
    modes.write_mode_cache(path, ms)
    with open(path, encoding="utf-8") as fh:
        assert fh.readline().strip() == "omega,kind,label,D,node_index,re,im"
    back = modes.read_mode_cache(path)
    assert len(back) == len(ms)
    for a, b in zip(ms, back):
        assert a.omega == b.omega and a.volume == b.volume and a.kind == b.kind and a.cell == b.cell
        assert np.array_equal(a.field, b.field)


def test_mode_cache_bad_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n")
    with pytest.raises(ValueError):
        modes.read_mode_cache(p)
