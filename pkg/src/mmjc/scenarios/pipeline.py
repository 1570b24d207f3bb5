"""End-to-end scenario execution: geometry to observables."""

from __future__ import annotations

import json
import logging
import os
import time
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .. import dynamics, fem1d, modes, observables, quanta
from .config import ScenarioConfig

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name and its parameters."""

    def __init__(self, stage, params, cause):
        super().__init__(f"stage '{stage}' failed ({params}): {cause}")
        self.stage = stage
        self.params = params
        self.cause = cause


@dataclass
class RunRecord:
    config_hash: str
    config: ScenarioConfig
    cache_path: str | None = None
    outputs: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    diagnostics: dict = field(default_factory=dict)
    # in-memory results (not serialized)
    series: dict = field(default_factory=dict, repr=False)
    fields: dict = field(default_factory=dict, repr=False)
    spectrum: object = field(default=None, repr=False)
    summary: dict = field(default_factory=dict)


class _Stage:
    def __init__(self, name, **params):
        self.name = name
        self.params = params

    def __enter__(self):
        log.info("stage %s", self.name)
        return self

    def __exit__(self, typ, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, self.params, exc) from exc
        return False


# in-process mode memo so sweeps do not re-read large cache files; mode
# sets can be ~100 MB, so only the most recent few are kept
_MEMO = OrderedDict()
MEMO_SIZE = 2


def _remember(key, value):
    _MEMO[key] = value
    _MEMO.move_to_end(key)
    while len(_MEMO) > MEMO_SIZE:
        _MEMO.popitem(last=False)


def domain_of(cfg: ScenarioConfig):
    g = cfg.geometry
    return fem1d.Domain(
        g.x_min, g.x_max, cfg.atoms.omega_a,
        walls=tuple(fem1d.Wall(*w) for w in g.walls),
        pec=tuple(tuple(p) for p in g.pec),
        pml=fem1d.PML(g.pml_left, g.pml_right),
        points_per_wavelength=g.points_per_wavelength,
        points_per_skin_depth=g.points_per_skin_depth,
        min_wall_elements=g.min_wall_elements,
    )


def atom_specs(cfg: ScenarioConfig):
    return [quanta.AtomSpec(cfg.atoms.omega_a, cfg.atoms.d_eg, x) for x in cfg.atoms.positions]


MODE_FORMAT = 2  # bump when the mode solvers change their output


def mode_cache_key(cfg: ScenarioConfig):
    """Hash of everything the mode set depends on.

    Compressed modes also depend on the atoms (they are rotated onto the
    atoms' couplings), so atoms join the key only then.
    """
    parts = ["geometry", "band", "refinement", "model"]
    if cfg.model.compress:
        parts.append("atoms")
    adaptive = cfg.refinement.mode == "adaptive" and cfg.refinement.recurrence_margin > 0
    extra = cfg.propagation.t_final if adaptive else 0.0  # sets the coarse spacing
    return f"v{MODE_FORMAT}-" + cfg.digest(*parts) + f"-{extra:.6g}"


def frequency_grid(cfg: ScenarioConfig, mesh, profile):
    ref = cfg.refinement
    band = cfg.band_limits
    if ref.mode == "uniform":
        return modes.uniform_grid(band, ref.n_uniform), None
    n_coarse = ref.n_coarse
    if ref.recurrence_margin > 0:
        # coarse spacing small enough that discrete-mode recurrences
        # (period 2 pi / d_omega) fall beyond the simulated time
        dw_max = 2 * np.pi / (ref.recurrence_margin * cfg.propagation.t_final)
        n_coarse = max(n_coarse, int(np.ceil((band[1] - band[0]) / dw_max)) + 1)
    budget = max(ref.budget, n_coarse)
    probe = modes.ResponseProbe(mesh, profile, list(cfg.atoms.positions))
    grid = modes.adaptive_frequency_grid(probe, band, budget=budget, tol=ref.tol, n_coarse=n_coarse)
    return grid, grid.response()


def _load_or_build_modes(cfg, mesh, profile, atoms, cache_dir, threads, diag):
    key = mode_cache_key(cfg)
    path = os.path.join(cache_dir, f"modes-{key}.csv") if cache_dir else None
    meta_path = path[:-4] + ".json" if path else None
    if key in _MEMO:
        diag["mode_source"] = "memory"
        _MEMO.move_to_end(key)
        return _MEMO[key] + (path,)
    if path and os.path.exists(path) and os.path.exists(meta_path):
        ms = modes.read_mode_cache(path)
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
        spec = None
        if meta.get("spectrum"):
            s = meta["spectrum"]
            amps = np.array(s["re"]) + 1j * np.array(s["im"])
            spec = modes.SpectralResponse(np.array(s["omega"]), amps)
        grid_n = meta["grid_size"]
        diag["mode_source"] = "cache"
        _remember(key, (ms, spec, grid_n))
        return ms, spec, grid_n, path
    with _Stage("spectral", band=cfg.band_limits, mode=cfg.refinement.mode):
        grid, spec = frequency_grid(cfg, mesh, profile)
        if grid.warning:
            diag.setdefault("warnings", []).append(grid.warning)
    with _Stage("modes", n_freq=len(grid), variant=cfg.model.variant, compress=cfg.model.compress):
        ms = modes.extract_modes(mesh, profile, grid, cfg.model.variant, atoms=atoms,
                                 compress=cfg.model.compress, threads=threads)
    diag["mode_source"] = "solved"
    if path:
        os.makedirs(cache_dir, exist_ok=True)
        modes.write_mode_cache(path, ms)
        meta = {"grid_size": len(grid), "spectrum": None}
        if spec is not None:
            a = spec.amplitudes
            a = a if a.ndim == 1 else a[:, 0]
            meta["spectrum"] = {"omega": spec.omegas.tolist(), "re": a.real.tolist(), "im": a.imag.tolist()}
        with open(meta_path, "w", encoding="utf-8") as fh:
            json.dump(meta, fh)
        # make the in-process result identical to a cached one
        ms = modes.read_mode_cache(path)
        if spec is not None:
            spec = modes.SpectralResponse(spec.omegas, a)
    elif spec is not None and spec.amplitudes.ndim == 2:
        spec = modes.SpectralResponse(spec.omegas, spec.amplitudes[:, 0])
    _remember(key, (ms, spec, len(grid)))
    return ms, spec, len(grid), path


def clear_memo():
    _MEMO.clear()


def initial_state(cfg: ScenarioConfig, basis: quanta.Basis):
    """A single state vector, or a MixtureEnsemble for the ESD start."""
    ini = cfg.initial
    if ini.kind == "excited":
        bits = [0] * basis.n_atoms
        for j in ini.excited:
            bits[j] = 1
        psi = basis.zero()
        psi[basis.find(bits)] = 1.0
        return psi
    if ini.kind == "dicke":
        psi = basis.zero()
        for j in range(basis.n_atoms):
            psi[basis.single_excitation(j)] = 1.0
        return psi / np.linalg.norm(psi)
    a = ini.esd_a
    rho = np.array([[a, 0, 0, 0], [0, 1, 1, 0], [0, 1, 1, 0], [0, 0, 0, 1 - a]]) / 3.0
    embed = [basis.find(s) for s in observables.ATOM_ORDER]
    return dynamics.mixture_from_density(rho, basis, embed)


class _FieldCapture:
    """Observer storing the full state at the requested times only."""

    def __init__(self, times, spacing):
        self.want = sorted(times)
        self.spacing = spacing
        self.got_t = []
        self.got_psi = []

    def __call__(self, t, psi):
        while self.want and t >= self.want[0] - 0.5 * self.spacing:
            self.want.pop(0)
            self.got_t.append(t)
            self.got_psi.append(psi.copy())
        return {}


def run(cfg: ScenarioConfig, out_dir=None, cache_dir=None, threads=1, emit=True) -> RunRecord:
    """Execute the full pipeline; returns the populated RunRecord."""
    start = time.perf_counter()
    cfg.validate()
    rec = RunRecord(cfg.digest(), cfg)
    diag = rec.diagnostics

    with _Stage("mesh", x_min=cfg.geometry.x_min, x_max=cfg.geometry.x_max):
        dom = domain_of(cfg)
        mesh = fem1d.build_mesh(dom)
        profile = dom.profile()
        atoms = atom_specs(cfg)
        quanta.check_atoms(atoms, mesh)
    diag["n_nodes"] = int(mesh.n_nodes)
    diag["n_wall_nodes"] = int(len(mesh.wall_nodes()))

    ms, spec, n_grid, rec.cache_path = _load_or_build_modes(cfg, mesh, profile, atoms, cache_dir, threads, diag)
    rec.spectrum = spec
    diag["n_frequencies"] = int(n_grid)
    diag["n_modes"] = len(ms)

    with _Stage("hamiltonian", n_atoms=len(atoms), n_modes=len(ms), max_quanta=cfg.model.max_quanta):
        gamma = quanta.coupling_strengths(atoms, ms, mesh)
        basis = quanta.enumerate_basis(len(atoms), len(ms), cfg.model.max_quanta)
        H = quanta.assemble_hamiltonian(basis, atoms, ms, gamma)
        H = quanta.rotating_frame(H, atoms, cfg.atoms.omega_a)
    diag["basis_size"] = len(basis)

    prop = cfg.propagation
    t_rabi = quanta.reference_rabi_period(atoms[0])
    dt = prop.dt or dynamics.choose_time_step(t_rabi, [m.omega for m in ms], cfg.atoms.omega_a,
                                              prop.steps_per_period)
    n_steps = int(np.ceil(prop.t_final / dt - 1e-9))
    stride = prop.stride or max(1, n_steps // 3000)
    n_steps = stride * int(np.ceil(n_steps / stride))  # last snapshot reaches t_final
    diag.update(dt=dt, n_steps=n_steps, stride=stride, t_rabi=t_rabi, scheme=prop.scheme)

    with _Stage("propagate", dt=dt, n_steps=n_steps, scheme=prop.scheme):
        psi0 = initial_state(cfg, basis)
        if isinstance(psi0, dynamics.MixtureEnsemble):
            pop = observables.population_observer(basis)
            dens = observables.density_observer(basis)
            obs = lambda t, v: {**pop(t, v), **dens(t, v)}
            comps = dynamics.evolve_mixture(H, psi0, dt, n_steps, scheme=prop.scheme, stride=stride,
                                            keep_states=False, observe=obs)
            capture = None
        else:
            pop = observables.population_observer(basis)
            capture = _FieldCapture(cfg.outputs.field_times, dt * stride) if cfg.outputs.field_times else None

            def obs(t, v):
                if capture is not None:
                    capture(t, v)
                return pop(t, v)

            tr = dynamics.propagate(H, psi0, dt, n_steps, scheme=prop.scheme, stride=stride,
                                    keep_states=False, observe=obs)
            comps = [(1.0, tr)]
    diag["norm_drift"] = max(float(tr.norm_drift) for _, tr in comps)
    for _, tr in comps:
        diag.setdefault("warnings", []).extend(tr.warnings)

    with _Stage("observables"):
        times = comps[0][1].times
        series = {"t": times}
        for j in range(len(atoms)):
            series[f"P{j + 1}"] = sum(w * tr.records[f"P{j + 1}"] for w, tr in comps)
        if len(atoms) > 1:
            series["P_total"] = sum(series[f"P{j + 1}"] for j in range(len(atoms)))
        summary = _summarize(cfg, series, comps, basis, atoms, spec, diag)
        if capture is not None and capture.got_t:
            snap = dynamics.Trajectory(np.array(capture.got_t), np.array(capture.got_psi), dt, prop.scheme,
                                       stride, comps[0][1].energy_shift, basis,
                                       ground_energy=comps[0][1].ground_energy)
            npts = cfg.outputs.field_points or 801
            xg = np.linspace(cfg.geometry.x_min, cfg.geometry.x_max, npts)
            for t_req, t_got in zip(sorted(cfg.outputs.field_times), capture.got_t):
                rec.fields[float(t_req)] = (t_got, xg, observables.one_photon_field(snap, ms, basis, mesh, xg, t_got))
    rec.series = series
    rec.summary = summary
    rec.wall_clock = time.perf_counter() - start
    if emit and out_dir is not None:
        from .outputs import emit_outputs

        with _Stage("outputs", out_dir=out_dir):
            emit_outputs(rec, out_dir)
    return rec


def _summarize(cfg, series, comps, basis, atoms, spec, diag):
    t = series["t"]
    gamma0 = quanta.free_space_rate(atoms[0])
    s = {
        "label": cfg.outputs.label,
        "config_hash": cfg.digest(),
        "gamma0": gamma0,
        "t_rabi": diag["t_rabi"],
        "n_modes": diag["n_modes"],
        "n_frequencies": diag["n_frequencies"],
    }
    if spec is not None:
        s.update(omega_c=spec.omega_c, fwhm=spec.fwhm, kappa=spec.kappa,
                 quality_factor=spec.quality_factor, spectrum_reliable=spec.reliable,
                 spectrum_notes=list(spec.notes))
    # total atomic excitation: starts at 1 for both the single-atom and the Dicke start
    main = series["P_total"] if "P_total" in series else series["P1"]
    if cfg.outputs.fit != "none":
        fit = observables.fit_decay(t, main)
        s["decay"] = {"gamma": fit.gamma, "tau": fit.tau, "method": fit.method, "conclusive": fit.conclusive}
        env = observables.fit_envelope_decay(t, main)
        s["envelope"] = {"gamma": env.gamma, "method": env.method, "conclusive": env.conclusive}
        s["visibility"] = observables.visibility(main)
        if cfg.initial.kind == "dicke" and fit.conclusive:
            s["rate_ratio"] = fit.gamma / gamma0
    if cfg.initial.kind == "esd":
        rhos = []
        total = None
        for w, tr in comps:
            r = tr.records["rho"]
            total = w * r if total is None else total + w * r
        rhos = [observables.TwoAtomDensity(m) for m in total]
        C = observables.concurrence_series(rhos)
        series["C"] = C
        series["a"] = np.array([r.a for r in rhos])
        series["b"] = np.array([r.b for r in rhos])
        series["c"] = np.array([r.c for r in rhos])
        series["d"] = np.array([r.d for r in rhos])
        series["abs_z"] = np.array([abs(r.z) for r in rhos])
        s["concurrence_initial"] = float(C[0])
        s["concurrence_first_zero"] = observables.first_zero_time(t, C)
        s["concurrence_rebirths"] = observables.rebirths(t, C)
        s["min_density_eigenvalue"] = float(min(r.eigenvalues.min() for r in rhos))
        mask = t <= 5 * diag["t_rabi"] + 1e-12
        s["concurrence_variation_5T"] = float((C[mask].max() - C[mask].min()) / C[0]) if C[0] > 0 else None
    s["norm_drift"] = diag["norm_drift"]
    s["warnings"] = list(diag.get("warnings", []))
    return s
