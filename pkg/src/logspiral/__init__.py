"""Logarithmic-spiral solutions of the 2D Euler equations in one angle.

Modules
-------
kernel        closed-form Green function ``K^m_beta`` and its identities
field         grid/spectral fields, the elliptic solve and diagnostics
transport     time integration of ``h_t + 2 H h_theta = 0``
dirac         atom (vortex-sheet) dynamics
selfsimilar   self-similar sheets, root finding and continuation
sheet_limit   mollified atoms and the sheet-limit experiment
reconstruct   planar vorticity, velocity, stream function and pressure
cli           command-line entry point
"""

__version__ = "0.1.0"

from .kernel import SpiralParams, kernel_boundary, kernel_eval, kernel_deriv  # noqa: E402,F401
from .field import AngularField, solve_elliptic, diagnostics, hminus_norm  # noqa: E402,F401
from .dirac import DiracConfig  # noqa: E402,F401
