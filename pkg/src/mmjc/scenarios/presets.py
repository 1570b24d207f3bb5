"""The four reference experiments as ready-made configurations.

Preset arguments use wavelength units (``lambda_a = 2 pi / omega_a``) for
lengths; everything is converted to absolute coordinates in the config.
"""

from __future__ import annotations

import numpy as np

from .config import (
    Atoms, Band, Geometry, Initial, Model, Outputs, Propagation, Refinement, ScenarioConfig,
)

OMEGA_A = 50.0  # transition frequency used by every reference experiment
LAM = 2 * np.pi / OMEGA_A
PML_THICKNESS = 1.75 * LAM  # cavity experiment PML size, reused everywhere
WIDE_BAND = 1.6  # band [10, 90] for broadband (fast, short-time) dynamics


def _uniform(fraction, spacing):
    width = fraction * OMEGA_A
    return Refinement(mode="uniform", n_uniform=int(round(width / spacing)) + 1)


def pec_mirror(h=1.25, t_final=30.0, spacing=0.025):
    """Atom at distance ``h`` (wavelengths) in front of a PEC mirror.

    Domain is 50 wavelengths with the PML on the open (left) side; the
    mirror terminates the right end.  d_eg = 0.1, omega_a = 50.
    """
    length = 50 * LAM
    x_m = length
    return ScenarioConfig(
        geometry=Geometry(0.0, length, pml_left=PML_THICKNESS, pec=((x_m, x_m),)),
        atoms=Atoms(d_eg=0.1, positions=(x_m - h * LAM,), omega_a=OMEGA_A),
        # wide band and fine spacing: sharp band edges blur the retarded
        # mirror echo, fine spacing pushes mode recurrences past t_final
        band=Band(fraction=WIDE_BAND),
        refinement=_uniform(WIDE_BAND, spacing),
        # only one BA mode per frequency (the +x incidence), so the mode set
        # does not depend on the atom and can be shared across a sweep
        model=Model(variant="bama", compress=False, max_quanta=1),
        propagation=Propagation(t_final=t_final),
        outputs=Outputs(field_times=(0.5, 1.0, 1.5, 2.0), field_points=801, fit="lifetime",
                        label=f"pec-mirror h={h:g}"),
    )


def cavity_walls(center, sigma):
    """Two walls of thickness lambda/1e4 enclosing a lambda/2 interior."""
    half = LAM / 4
    w = LAM / 1e4
    return ((center - half - w, center - half, sigma), (center + half, center + half + w, sigma))


def lossy_cavity(sigma=1e11, variant="bama", t_final=30.0, ppw=200.0):
    """Atom at the centre of a lambda/2 cavity with Ohmic walls.

    Total domain 2.5 wavelengths, PML of 1.75 wavelengths on both sides,
    walls lambda/1e4 thick, d_eg = 0.075, 20% band with adaptive sampling.
    """
    walls = cavity_walls(0.0, sigma) if sigma > 0 else ()
    return ScenarioConfig(
        geometry=Geometry(-1.25 * LAM, 1.25 * LAM, PML_THICKNESS, PML_THICKNESS, walls=walls,
                          points_per_wavelength=ppw),
        atoms=Atoms(d_eg=0.075, positions=(0.0,), omega_a=OMEGA_A),
        band=Band(fraction=0.2),
        refinement=Refinement(mode="adaptive", budget=400, tol=0.05),
        model=Model(variant=variant, compress=True, max_quanta=1),
        propagation=Propagation(t_final=t_final),
        outputs=Outputs(field_times=(1.0, 5.0), field_points=801,
                        fit="envelope" if sigma >= 1.19e6 else "lifetime",
                        label=f"lossy-cavity sigma={sigma:g} {variant}"),
    )


def superradiance(N=10, d=0.01, t_final=10.0, spacing=0.1):
    """N atoms spaced ``d`` wavelengths in free space, symmetric one-excitation start.

    d_eg = 0.1 (free-space rate 0.5).  The band is wide because the
    collective rate N * 0.5 is comparable to a 20% band.
    """
    xs = (np.arange(N) - 0.5 * (N - 1)) * d * LAM
    return ScenarioConfig(
        geometry=Geometry(float(xs[0] - LAM), float(xs[-1] + LAM), PML_THICKNESS, PML_THICKNESS),
        atoms=Atoms(d_eg=0.1, positions=tuple(float(x) for x in xs), omega_a=OMEGA_A),
        band=Band(fraction=WIDE_BAND),
        refinement=_uniform(WIDE_BAND, spacing),
        model=Model(variant="bama", compress=True, max_quanta=1),
        propagation=Propagation(t_final=t_final),
        initial=Initial(kind="dicke"),
        outputs=Outputs(fit="lifetime", label=f"superradiance N={N} d={d:g}"),
    )


ESD_SIGMA = 2.52e7  # wall conductivity for the lossy-cavity ESD run (cavity kappa ~ 0.1)


def esd(env="free-space", p=None, sigma=ESD_SIGMA, variant="bama", a=0.2, t_final=None):
    """Two atoms in the one-third-normalized X-state mixture, separated by ``p`` wavelengths.

    ``env = free-space``: atoms in open space (default p = 0.1).
    ``env = lossy-cavity``: each atom at the centre of its own lossy
    lambda/2 cavity, cavity centres p apart (default p = 1).
    d_eg = 0.075, which gives the quoted free-space rate 0.2812.
    """
    d_eg = 0.075
    t_rabi = np.pi / (d_eg * OMEGA_A / np.sqrt(np.pi))
    if t_final is None:
        t_final = 10 * t_rabi
    if env == "free-space":
        p = 0.1 if p is None else p
        xs = (-0.5 * p * LAM, 0.5 * p * LAM)
        geom = Geometry(xs[0] - LAM, xs[1] + LAM, PML_THICKNESS, PML_THICKNESS)
        refinement = _uniform(0.2, 0.1)
        label = f"esd free-space p={p:g}"
    elif env == "lossy-cavity":
        p = 1.0 if p is None else p
        if p < 0.5 + 2e-4:
            raise ValueError("cavity centres closer than one cavity width overlap")
        xs = (-0.5 * p * LAM, 0.5 * p * LAM)
        walls = cavity_walls(xs[0], sigma) + cavity_walls(xs[1], sigma)
        geom = Geometry(xs[0] - 1.25 * LAM, xs[1] + 1.25 * LAM, PML_THICKNESS, PML_THICKNESS,
                        walls=walls, points_per_wavelength=200.0)
        refinement = Refinement(mode="adaptive", budget=400, tol=0.05)
        label = f"esd lossy-cavity p={p:g} sigma={sigma:g} {variant}"
    else:
        raise ValueError(f"unknown environment {env!r}")
    return ScenarioConfig(
        geometry=geom,
        atoms=Atoms(d_eg=d_eg, positions=tuple(float(x) for x in xs), omega_a=OMEGA_A),
        band=Band(fraction=0.2),
        refinement=refinement,
        model=Model(variant=variant, compress=True, max_quanta=2),
        propagation=Propagation(t_final=float(t_final)),
        initial=Initial(kind="esd", esd_a=a),
        outputs=Outputs(fit="none", label=label),
    )


PRESETS = {
    "pec-mirror": pec_mirror,
    "lossy-cavity": lossy_cavity,
    "superradiance": superradiance,
    "esd": esd,
}


def build(name, **kw):
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    kw = {k: v for k, v in kw.items() if v is not None}
    return factory(**kw)
