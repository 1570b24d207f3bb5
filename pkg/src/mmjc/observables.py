"""Physical quantities extracted from trajectories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from . import fem1d
from .quanta import Basis

E_INV = np.exp(-1.0)
DEFAULT_CUTOFF = 30.0


def _components(traj):
    """Normalize a Trajectory or a weighted list into ``[(w, traj), ...]``."""
    if isinstance(traj, (list, tuple)):
        return list(traj)
    return [(1.0, traj)]


def _basis_of(traj, basis):
    b = basis if basis is not None else traj.basis
    if b is None:
        raise ValueError("basis required")
    return b


def excited_mask(basis: Basis, atom):
    if not 0 <= atom < basis.n_atoms:
        raise IndexError(f"atom index {atom} out of range")
    return np.array([s.atoms[atom] == 1 for s in basis.states])


def atomic_population(traj, basis: Basis = None, atom=0):
    """Probability that ``atom`` is excited, combined over mixture components."""
    out = None
    for w, tr in _components(traj):
        b = _basis_of(tr, basis)
        if tr.states is None:
            raise ValueError("trajectory holds no state snapshots")
        p = np.abs(tr.states[:, excited_mask(b, atom)]) ** 2
        p = w * p.sum(axis=1)
        out = p if out is None else out + p
    return out


def total_excitation(traj, basis: Basis = None):
    """Sum of all atomic populations."""
    comps = _components(traj)
    b = _basis_of(comps[0][1], basis)
    return sum(atomic_population(traj, b, j) for j in range(b.n_atoms))


def population_observer(basis: Basis):
    """Callback for propagation without stored snapshots."""
    masks = [excited_mask(basis, j) for j in range(basis.n_atoms)]

    def observe(t, psi):
        p = np.abs(psi) ** 2
        return {f"P{j + 1}": float(p[m].sum()) for j, m in enumerate(masks)}

    return observe


def one_photon_field(traj, modes, basis: Basis, mesh: fem1d.Mesh1D, x, t):
    """Real single-excitation field ``sum_l E_l(x) C_{g,1_l}(t) + c.c.``.

    Amplitudes are referenced to the freely evolving vacuum, so the carrier
    oscillates at the mode frequencies.
    """
    b = _basis_of(traj, basis)
    if traj.states is None:
        raise ValueError("trajectory holds no state snapshots")
    n = int(np.argmin(np.abs(traj.times - t)))
    if abs(traj.times[n] - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"t={t} is not on the trajectory grid")
    psi = traj.states[n]
    for q in b.blocks:
        if q >= 2 and np.any(np.abs(psi[b.block_slice(q)]) > 1e-14):
            raise ValueError("one-photon field is defined for single-excitation states only")
    idx = np.array([b.photon(l) for l in range(b.n_modes)])
    c = psi[idx]
    e_g = traj.ground_energy if traj.ground_energy is not None else 0.0
    phase = np.exp(-1j * (traj.energy_shift.get(1, 0.0) - e_g) * traj.times[n])
    F = np.stack([m.field for m in modes], axis=1)
    Ex = np.atleast_2d(fem1d.evaluate_field(F, mesh, np.atleast_1d(x)))
    return 2.0 * np.real(phase * (Ex @ c))


@dataclass
class DecayFit:
    gamma: float
    tau: float
    method: str = "lifetime"
    conclusive: bool = True

    def __post_init__(self):
        if self.method not in ("lifetime", "regression"):
            raise ValueError(f"unknown fit method {self.method!r}")


def fit_decay(t, p, cutoff=DEFAULT_CUTOFF):
    """Lifetime from the first ``1/e`` crossing (linear interpolation).

    A lifetime beyond ``cutoff`` counts as no decay (``gamma = 0``); a run that
    ends before ``cutoff`` without crossing is inconclusive.
    """
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    if len(t) != len(p) or len(t) < 2:
        raise ValueError("need matching time and population samples")
    if np.any(np.diff(t) <= 0):
        raise ValueError("time samples must be increasing")
    if not np.isclose(p[0], 1.0, atol=1e-6):
        raise ValueError(f"series must start at 1, got {p[0]}")
    below = np.flatnonzero(p <= E_INV)
    if len(below):
        i = below[0]
        tau = float(np.interp(E_INV, [p[i], p[i - 1]], [t[i], t[i - 1]]))
        if tau > cutoff:
            return DecayFit(0.0, tau)
        return DecayFit(1.0 / tau, tau)
    if t[-1] >= cutoff:
        return DecayFit(0.0, np.inf)
    return DecayFit(np.nan, np.nan, conclusive=False)


def envelope_maxima(t, p):
    """``(t, p)`` at the start point and every local maximum of an oscillating series."""
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    peaks, _ = find_peaks(p)
    idx = np.concatenate([[0], peaks])
    return t[idx], p[idx]


def fit_envelope_decay(t, p, method="regression", cutoff=DEFAULT_CUTOFF):
    """Decay rate of the oscillation maxima of a damped Rabi series."""
    te, pe = envelope_maxima(t, p)
    if method == "lifetime":
        if len(te) < 2:
            return DecayFit(np.nan, np.nan, conclusive=False)
        return fit_decay(te, pe, cutoff)
    if len(te) < 3 or np.any(pe <= 0):
        return DecayFit(np.nan, np.nan, "regression", conclusive=False)
    slope = np.polyfit(te, np.log(pe), 1)[0]
    gamma = max(0.0, -float(slope))
    return DecayFit(gamma, 1.0 / gamma if gamma > 0 else np.inf, "regression")


def visibility(p):
    p = np.asarray(p, dtype=float)
    hi, lo = p.max(), p.min()
    return float((hi - lo) / (hi + lo)) if hi + lo > 0 else 0.0


def superradiance_rate(t, population, gamma0, cutoff=DEFAULT_CUTOFF):
    """Fitted collective rate in units of the single-atom rate ``gamma0``."""
    fit = fit_decay(t, population, cutoff)
    if not fit.conclusive:
        raise ValueError("decay fit is inconclusive; extend the run")
    return fit.gamma / gamma0


# --------------------------------------------------------------------------
# two-atom entanglement

ATOM_ORDER = ((1, 1), (1, 0), (0, 1), (0, 0))  # |ee>, |eg>, |ge>, |gg>


@dataclass
class TwoAtomDensity:
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.matrix.shape != (4, 4):
            raise ValueError("two-atom density must be 4x4")

    a = property(lambda self: self.matrix[0, 0].real)
    b = property(lambda self: self.matrix[1, 1].real)
    c = property(lambda self: self.matrix[2, 2].real)
    d = property(lambda self: self.matrix[3, 3].real)
    z = property(lambda self: self.matrix[1, 2])

    @property
    def eigenvalues(self):
        return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))

    def check(self, atol=1e-9):
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > atol:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m).real - 1.0) > atol:
            raise ValueError(f"trace {np.trace(m).real} differs from one")
        if self.eigenvalues.min() < -atol:
            raise ValueError("density matrix has negative eigenvalues")
        return self

    def swapped(self):
        perm = [0, 2, 1, 3]
        return TwoAtomDensity(self.matrix[np.ix_(perm, perm)])


class _PartialTrace:
    """Index maps from basis states to (field pattern, atom configuration)."""

    def __init__(self, basis: Basis):
        if basis.n_atoms != 2:
            raise ValueError("reduced two-atom density needs exactly two atoms")
        fields = {}
        self.fid = np.array([fields.setdefault(s.field, len(fields)) for s in basis.states])
        self.aid = np.array([ATOM_ORDER.index(tuple(s.atoms)) for s in basis.states])
        self.n_fields = len(fields)

    def __call__(self, psi):
        M = np.zeros((self.n_fields, 4), dtype=complex)
        M[self.fid, self.aid] = psi
        return M.T @ M.conj()


def density_observer(basis: Basis):
    """Callback recording the (unweighted) reduced atom density of one component."""
    trace = _PartialTrace(basis)
    return lambda t, psi: {"rho": trace(psi)}


def reduced_two_atom_density(ensemble, basis: Basis = None, t=None):
    """Weighted partial trace over field occupations.

    With ``t=None`` returns one TwoAtomDensity per stored time.  Components
    propagated with :func:`density_observer` are used directly.
    """
    comps = _components(ensemble)
    b = _basis_of(comps[0][1], basis)
    trace = _PartialTrace(b)
    total = None
    times = comps[0][1].times
    for w, tr in comps:
        if "rho" in tr.records:
            rhos = tr.records["rho"]
        else:
            if tr.states is None:
                raise ValueError("trajectory holds neither snapshots nor recorded densities")
            rhos = np.array([trace(v) for v in tr.states])
        total = w * rhos if total is None else total + w * rhos
    if t is None:
        return [TwoAtomDensity(m) for m in total]
    n = int(np.argmin(np.abs(times - t)))
    return TwoAtomDensity(total[n])


def is_x_state(rho: TwoAtomDensity, atol=1e-8):
    m = rho.matrix.copy()
    for i, j in [(0, 0), (1, 1), (2, 2), (3, 3), (1, 2), (2, 1), (0, 3), (3, 0)]:
        m[i, j] = 0
    return bool(np.max(np.abs(m)) <= atol)


def wootters_concurrence(rho: TwoAtomDensity):
    # lambda_i are the singular values of V^T (sy x sy) V with rho = V V^+; this avoids
    # square roots of the tiny eigenvalues of rho rho~ that spoil nearly pure states
    w, u = np.linalg.eigh((rho.matrix + rho.matrix.conj().T) / 2)
    v = u * np.sqrt(np.clip(w, 0.0, None))
    sy = np.array([[0, -1j], [1j, 0]])
    lam = np.linalg.svd(v.T @ np.kron(sy, sy) @ v, compute_uv=False)
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def concurrence(rho: TwoAtomDensity):
    """X-state closed form (exact zero below threshold), Wootters otherwise."""
    if is_x_state(rho):
        m = rho.matrix
        c1 = abs(m[1, 2]) - np.sqrt(max(m[0, 0].real, 0.0) * max(m[3, 3].real, 0.0))
        c2 = abs(m[0, 3]) - np.sqrt(max(m[1, 1].real, 0.0) * max(m[2, 2].real, 0.0))
        return float(min(1.0, 2.0 * max(0.0, c1, c2)))
    return min(1.0, wootters_concurrence(rho))


def concurrence_series(rhos):
    return np.array([concurrence(r) for r in rhos])


def first_zero_time(t, c):
    """First recorded time at which the concurrence is exactly zero."""
    z = np.flatnonzero(np.asarray(c) == 0.0)
    return float(np.asarray(t)[z[0]]) if len(z) else None


def rebirths(t, c, threshold=0.0):
    """Zero-to-positive revivals as ``(start time, peak height)`` pairs.

    The concurrence is "dead" while ``c <= threshold`` (exactly zero by
    default, which the closed form produces after sudden death); a revival
    runs from the first positive sample to the next death.
    """
    events = []
    dead = False
    cur = None
    for ti, ci in zip(np.asarray(t, dtype=float), np.asarray(c, dtype=float)):
        if ci <= threshold:
            if cur is not None:
                events.append(tuple(cur))
                cur = None
            dead = True
        elif dead:
            if cur is None:
                cur = [float(ti), float(ci)]
            else:
                cur[1] = max(cur[1], float(ci))
    if cur is not None:
        events.append(tuple(cur))
    return events
