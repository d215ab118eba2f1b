"""Non-Hermitian skin effect with power-law long-range hopping.

Dense spectra, localization fits, no-jump free-fermion dynamics and
entanglement scaling for the nonreciprocal chain

    H = sum_j sum_{l>=1} l^-alpha (J_L c_j^dag c_{j+l} + J_R c_{j+l}^dag c_j)

under open boundary conditions.
"""

from skinlab.model import (
    NEAREST_NEIGHBOR,
    ModelParams,
    SimplifiedParams,
    apply_igt,
    build_full,
    build_hn,
    build_nonlocal,
    build_simplified,
)

__version__ = "0.1.0"

__all__ = [
    "NEAREST_NEIGHBOR",
    "ModelParams",
    "SimplifiedParams",
    "apply_igt",
    "build_full",
    "build_hn",
    "build_nonlocal",
    "build_simplified",
    "__version__",
]
