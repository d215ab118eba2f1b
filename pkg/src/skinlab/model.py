"""Hamiltonian builders for the nonreciprocal power-law chain.

All builders return dense ``complex128`` arrays of shape ``(L, L)``. The
contract uses 1-based sites: the amplitude of ``c_i^dag c_j`` sits in
``H[i - 1, j - 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Decay exponent meaning "no long-range part at all" (pure Hatano-Nelson).
NEAREST_NEIGHBOR = math.inf


def is_nearest_neighbor(alpha: float) -> bool:
    return math.isinf(alpha) and alpha > 0


@dataclass(frozen=True)
class ModelParams:
    """Couplings, decay exponent and size of the nonlocal chain.

    Parameters
    ----------
    J_L : complex
        Leftward hop amplitude (coefficient of ``c_j^dag c_{j+l}``).
    J_R : complex
        Rightward hop amplitude (coefficient of ``c_{j+l}^dag c_j``).
    alpha : float
        Power-law exponent, ``>= 0``. ``NEAREST_NEIGHBOR`` drops every
        ``l >= 2`` coupling.
    L : int
        Number of sites, ``>= 2``.
    """

    J_L: complex
    J_R: complex
    alpha: float
    L: int

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise ValueError(f"L must be an integer >= 2, got {self.L!r}")
        if math.isnan(self.alpha) or self.alpha < 0:
            raise ValueError(f"alpha must be >= 0 or NEAREST_NEIGHBOR, got {self.alpha!r}")
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "alpha", float(self.alpha))

    @classmethod
    def from_g(cls, g: float, alpha: float, L: int, J: float = 1.0) -> "ModelParams":
        """Couplings ``J_L = J e^g``, ``J_R = J e^-g`` so that ``sqrt(J_L J_R) = J``."""
        return cls(J * math.exp(g), J * math.exp(-g), alpha, L)

    @property
    def g(self) -> float:
        """``ln sqrt(|J_L| / |J_R|)``; infinite if either coupling vanishes."""
        a, b = abs(self.J_L), abs(self.J_R)
        if a == 0 and b == 0:
            return 0.0
        if b == 0:
            return math.inf
        if a == 0:
            return -math.inf
        return 0.5 * math.log(a / b)

    @property
    def J(self) -> float:
        """Hop of the gauge-symmetrised chain, ``sqrt(|J_L| |J_R|)``."""
        return math.sqrt(abs(self.J_L) * abs(self.J_R))

    @property
    def nearest_neighbor(self) -> bool:
        return is_nearest_neighbor(self.alpha)

    def with_size(self, L: int) -> "ModelParams":
        return ModelParams(self.J_L, self.J_R, self.alpha, L)


@dataclass(frozen=True)
class SimplifiedParams:
    """Open chain with hop ``J`` plus one unidirectional end-to-end hop ``J * mu``."""

    J: float
    L: int
    mu: float

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise ValueError(f"L must be an integer >= 2, got {self.L!r}")
        if not self.mu >= 0:
            raise ValueError(f"mu must be >= 0, got {self.mu!r}")

    @classmethod
    def from_model(cls, params: ModelParams) -> "SimplifiedParams":
        """Keep only the longest rightward coupling after the gauge transform.

        Only meaningful for positive real couplings; magnitudes are used.
        """
        return cls(params.J, params.L, end_to_end_strength(params.g, params.alpha, params.L))


def end_to_end_strength(g: float, alpha: float, L: int) -> float:
    """``mu_L = e^{(L-2) g} (L-1)^{-alpha}``, zero for the nearest-neighbour sentinel."""
    if is_nearest_neighbor(alpha):
        return 0.0
    # log form keeps large L from overflowing before the power cancels it
    return math.exp((L - 2) * g - alpha * math.log(L - 1))


def _check_size(L: int) -> None:
    if L < 2:
        raise ValueError(f"L must be >= 2, got {L}")


def build_hn(params: ModelParams) -> np.ndarray:
    """Nearest-neighbour Hatano-Nelson part."""
    L = params.L
    _check_size(L)
    H = np.zeros((L, L), dtype=complex)
    idx = np.arange(L - 1)
    H[idx, idx + 1] = params.J_L
    H[idx + 1, idx] = params.J_R
    return H


def _distance_weights(L: int, alpha: float) -> np.ndarray:
    """``l^-alpha`` on the upper triangle at distance ``l = j - i >= 2``, zero elsewhere."""
    i, j = np.indices((L, L))
    l = (j - i).astype(float)
    W = np.zeros((L, L))
    far = l >= 2
    W[far] = l[far] ** (-alpha)
    return W


def build_nonlocal(params: ModelParams) -> np.ndarray:
    """Long-range part, couplings at distance ``l >= 2`` only."""
    L = params.L
    _check_size(L)
    if params.nearest_neighbor:
        return np.zeros((L, L), dtype=complex)
    W = _distance_weights(L, params.alpha)
    return params.J_L * W + params.J_R * W.T + 0j


def build_full(params: ModelParams) -> np.ndarray:
    return build_hn(params) + build_nonlocal(params)


def build_simplified(sp: SimplifiedParams) -> np.ndarray:
    L = sp.L
    _check_size(L)
    H = np.zeros((L, L), dtype=complex)
    idx = np.arange(L - 1)
    H[idx, idx + 1] = sp.J
    H[idx + 1, idx] = sp.J
    H[L - 1, 0] += sp.J * sp.mu
    return H


def apply_igt(H: np.ndarray, g: float) -> np.ndarray:
    """Imaginary gauge transform ``H_ij -> H_ij e^{g (i - j)}``.

    A diagonal similarity, so the spectrum is untouched. With ``g`` equal to
    the model's ``g`` the nearest-neighbour part becomes Hermitian with hop
    ``sqrt(J_L J_R)``.
    """
    H = np.asarray(H)
    n = H.shape[0]
    sites = np.arange(1, n + 1)
    # exp of the difference, not a ratio of exps: no overflow at large g*L
    return H * np.exp(g * np.subtract.outer(sites, sites))
