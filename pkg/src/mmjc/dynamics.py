"""Time propagation of state vectors under a fixed Hamiltonian."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .quanta import Basis, HamiltonianMatrix

log = logging.getLogger(__name__)

NORM_WARN = {"cn": 1e-9, "rk4": 1e-6}


@dataclass
class StateVector:
    amplitudes: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)

    @property
    def norm(self):
        return float(np.linalg.norm(self.amplitudes))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray | None  # (n_snapshots, dim) or None when only observed
    dt: float
    scheme: str
    stride: int
    energy_shift: dict = field(default_factory=dict)
    basis: Basis | None = None
    records: dict = field(default_factory=dict)
    norm_drift: float = 0.0
    warnings: list = field(default_factory=list)
    ground_energy: float | None = None  # lab-frame energy of the all-ground vacuum

    def lab_phase(self, q):
        """``exp(-i c_q t)`` turning stored amplitudes of block ``q`` into lab ones."""
        return np.exp(-1j * self.energy_shift.get(q, 0.0) * self.times)


@dataclass
class MixtureEnsemble:
    """Statistical mixture of pure states, each evolved independently."""

    weights: np.ndarray
    states: list

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.weights) != len(self.states):
            raise ValueError("one weight per component is required")
        if np.any(self.weights < 0) or not np.isclose(self.weights.sum(), 1.0):
            raise ValueError("mixture weights must be non-negative and sum to one")


def _blocks(H, dim):
    """(slice, block) pairs covering the state vector, plus frame metadata."""
    if isinstance(H, HamiltonianMatrix):
        parts = [(H.basis.block_slice(q), H.blocks[q]) for q in sorted(H.blocks)]
        return parts, dict(H.energy_shift), H.basis
    M = sp.csr_matrix(H, dtype=complex)
    if M.shape != (dim, dim):
        raise ValueError(f"Hamiltonian shape {M.shape} does not match state dimension {dim}")
    return [(slice(0, dim), M)], {}, None


def _ground(H):
    if isinstance(H, HamiltonianMatrix) and 0 in H.blocks:
        return float(H.blocks[0][0, 0].real) + H.energy_shift.get(0, 0.0)
    return None


def _check(psi0, dt, n_steps, stride):
    psi = np.array(psi0.amplitudes if isinstance(psi0, StateVector) else psi0, dtype=complex)
    t0 = psi0.t if isinstance(psi0, StateVector) else 0.0
    if not np.isfinite(dt) or dt == 0:
        raise ValueError("time step must be finite and non-zero")
    if n_steps < 0 or stride < 1:
        raise ValueError("need n_steps >= 0 and stride >= 1")
    n0 = np.linalg.norm(psi)
    if not np.isclose(n0, 1.0, atol=1e-10):
        raise ValueError(f"initial state has norm {n0:.3e}, expected 1")
    return psi, t0


def _run(step, psi, t0, dt, n_steps, stride, keep_states, observe, scheme, shifts, basis, ground=None):
    n_snap = n_steps // stride + 1
    times = t0 + dt * stride * np.arange(n_snap)
    states = np.empty((n_snap, len(psi)), dtype=complex) if keep_states else None
    records = {}

    def record(i, t, v):
        if states is not None:
            states[i] = v
        if observe is not None:
            for k, val in observe(t, v).items():
                records.setdefault(k, []).append(val)

    record(0, times[0], psi)
    snap = 1
    for n in range(1, n_steps + 1):
        psi = step(psi)
        if n % stride == 0:
            record(snap, times[snap], psi)
            snap += 1
    drift = abs(np.linalg.norm(psi) - 1.0)
    traj = Trajectory(times, states, dt, scheme, stride, shifts, basis,
                      {k: np.asarray(v) for k, v in records.items()}, drift, ground_energy=ground)
    if drift > NORM_WARN[scheme]:
        msg = f"{scheme}: norm drift {drift:.2e} after {n_steps} steps"
        traj.warnings.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return traj


def cn_propagate(H, psi0, dt, n_steps, stride=1, keep_states=True, observe=None) -> Trajectory:
    """Crank-Nicolson: ``(H - 2i/dt) psi_{n+1} = (-H - 2i/dt) psi_n``.

    Unitary for Hermitian ``H`` at any step.  Each quanta block is factorized
    once; blocks the initial state does not touch are skipped.
    """
    psi, t0 = _check(psi0, dt, n_steps, stride)
    parts, shifts, basis = _blocks(H, len(psi))
    c = 2j / dt
    ops = []
    for sl, B in parts:
        if not np.any(psi[sl]) or B.count_nonzero() == 0:
            continue  # untouched block, or H = 0 there: the CN map is the identity
        I = sp.identity(B.shape[0], dtype=complex, format="csc")
        # the sparsity pattern is symmetric; minimum degree on A+A^T keeps the
        # two-photon states from filling in
        lu = spla.splu((B - c * I).tocsc(), permc_spec="MMD_AT_PLUS_A")
        rhs = (-B - c * I).tocsr()
        ops.append((sl, lu, rhs))

    def step(v):
        out = v.copy()
        for sl, lu, rhs in ops:
            out[sl] = lu.solve(rhs @ v[sl])
        return out

    return _run(step, psi, t0, dt, n_steps, stride, keep_states, observe, "cn", shifts, basis, _ground(H))


def rk4_propagate(H, psi0, dt, n_steps, stride=1, keep_states=True, observe=None) -> Trajectory:
    """Classical fourth-order Runge-Kutta for ``d psi / dt = -i H psi``."""
    psi, t0 = _check(psi0, dt, n_steps, stride)
    parts, shifts, basis = _blocks(H, len(psi))
    active = [(sl, B) for sl, B in parts if np.any(psi[sl])]

    def f(v):
        out = np.zeros_like(v)
        for sl, B in active:
            out[sl] = -1j * (B @ v[sl])
        return out

    def step(v):
        k1 = f(v)
        k2 = f(v + 0.5 * dt * k1)
        k3 = f(v + 0.5 * dt * k2)
        k4 = f(v + dt * k3)
        return v + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    return _run(step, psi, t0, dt, n_steps, stride, keep_states, observe, "rk4", shifts, basis, _ground(H))


def propagate(H, psi0, dt, n_steps, scheme="cn", **kw) -> Trajectory:
    scheme = scheme.lower()
    if scheme == "cn":
        return cn_propagate(H, psi0, dt, n_steps, **kw)
    if scheme == "rk4":
        return rk4_propagate(H, psi0, dt, n_steps, **kw)
    raise ValueError(f"unknown scheme {scheme!r}")


def evolve_mixture(H, ensemble: MixtureEnsemble, dt, n_steps, scheme="cn", **kw):
    """Evolve each pure component; returns ``[(weight, Trajectory), ...]``."""
    return [(float(w), propagate(H, psi, dt, n_steps, scheme=scheme, **kw))
            for w, psi in zip(ensemble.weights, ensemble.states)]


def mixture_from_density(rho, basis: Basis, embed, tol=1e-12) -> MixtureEnsemble:
    """Spectral decomposition of a small density matrix into basis states.

    ``embed[i]`` is the basis index of the i-th row of ``rho``.  Coherences
    between different quanta numbers are not representable as single-block
    components and are rejected; each block is diagonalized on its own.
    """
    rho = np.asarray(rho, dtype=complex)
    if not np.allclose(rho, rho.conj().T, atol=1e-12):
        raise ValueError("density matrix is not Hermitian")
    if not np.isclose(np.trace(rho).real, 1.0):
        raise ValueError("density matrix trace differs from one")
    embed = np.asarray(embed)
    q = basis.quanta[embed]
    if np.any(np.abs(rho[q[:, None] != q[None, :]]) > tol):
        raise ValueError("mixture component mixes quanta numbers")
    weights, states = [], []
    for qq in sorted(set(q), reverse=True):
        sel = np.flatnonzero(q == qq)
        vals, vecs = np.linalg.eigh(rho[np.ix_(sel, sel)])
        if np.any(vals < -1e-12):
            raise ValueError("density matrix is not positive semidefinite")
        for lam, v in sorted(zip(vals, vecs.T), key=lambda p: -p[0]):
            if lam <= tol:
                continue
            psi = basis.zero()
            psi[embed[sel]] = v
            weights.append(lam)
            states.append(psi / np.linalg.norm(psi))
    w = np.array(weights)
    return MixtureEnsemble(w / w.sum(), states)


def choose_time_step(t_rabi, mode_omegas, omega_ref, steps_per_period=200):
    """Step resolving both the Rabi period and the fastest frame detuning."""
    w = np.asarray(mode_omegas, dtype=float)
    spread = float(np.max(np.abs(w - omega_ref))) if len(w) else 0.0
    periods = [t_rabi]
    if spread > 0:
        periods.append(2 * np.pi / spread)
    return min(periods) / steps_per_period
