"""Multimode Jaynes/Tavis-Cummings dynamics in 1D open and lossy environments.

Field modes come from a frequency-domain finite-element solver: boundary-
assisted (BA) modes are scattered plane waves, medium-assisted (MA) modes are
fields radiated by noise currents inside lossy walls.  The quantized model is
propagated in a quanta-conserving truncated basis.
"""

from . import dynamics, fem1d, modes, observables, quanta

__version__ = "0.1.0"

__all__ = ["fem1d", "modes", "quanta", "dynamics", "observables", "__version__"]
