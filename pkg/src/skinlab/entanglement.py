"""Steady-state entanglement of the half-filled chain.

Entropies are in natural-log units and always refer to a contiguous left
block of ``l`` sites.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from skinlab.dynamics import (
    OrbitalState,
    SteadyEnsemble,
    correlation_from_orbitals,
    init_cdw,
    steady_ensemble,
)
from skinlab.model import ModelParams, build_full
from skinlab.spectral import complex_fraction, model_spectrum


def entropy_from_correlation(C: np.ndarray, subsystem, eps: float = 1e-12, herm_tol: float = 1e-8) -> float:
    """``-sum[nu ln nu + (1-nu) ln(1-nu)]`` over eigenvalues of the subsystem block.

    ``subsystem`` holds 0-based site indices. ``nu`` is clipped to
    ``[eps, 1 - eps]``.
    """
    idx = np.asarray(list(subsystem), dtype=int)
    L = C.shape[0]
    if idx.size == 0 or idx.size >= L:
        raise ValueError("subsystem must be a non-empty proper subset of the sites")
    block = C[np.ix_(idx, idx)]
    if np.abs(block - block.conj().T).max() > herm_tol:
        raise ValueError("correlation block is not Hermitian; the state is corrupted")
    nu = np.clip(np.linalg.eigvalsh(0.5 * (block + block.conj().T)), eps, 1 - eps)
    return float(-np.sum(nu * np.log(nu) + (1 - nu) * np.log(1 - nu)))


@dataclass
class EntropyCurve:
    L: int
    cuts: np.ndarray
    S: np.ndarray

    def at(self, l: int) -> float:
        return float(self.S[np.flatnonzero(self.cuts == l)[0]])


def _block_entropies(C: np.ndarray, cuts: Sequence[int]) -> np.ndarray:
    return np.array([entropy_from_correlation(C, range(l)) for l in cuts])


def entropy_curve(state: OrbitalState, cuts: Optional[Sequence[int]] = None) -> EntropyCurve:
    """Entropy of the left ``l`` sites for ``l = 1 .. L-1`` (or the given cuts)."""
    L = state.L
    cuts = np.arange(1, L) if cuts is None else np.asarray(cuts, dtype=int)
    return EntropyCurve(L, cuts, _block_entropies(correlation_from_orbitals(state), cuts))


def ensemble_entropy_curve(ens: SteadyEnsemble, cuts: Optional[Sequence[int]] = None) -> EntropyCurve:
    """Entropy curve averaged over the samples of a steady ensemble."""
    curves = [entropy_curve(s, cuts) for s in ens.samples]
    return EntropyCurve(curves[0].L, curves[0].cuts, np.mean([c.S for c in curves], axis=0))


def steady_entropy_curve(
    H: np.ndarray,
    cuts: Optional[Sequence[int]] = None,
    initial: Optional[OrbitalState] = None,
    n_samples: int = 128,
    seed: int = 0,
) -> EntropyCurve:
    """Long-time entropy curve of no-jump evolution from the CDW state."""
    H = np.asarray(H)
    if initial is None:
        initial = init_cdw(H.shape[0])
    return ensemble_entropy_curve(steady_ensemble(H, initial, n_samples=n_samples, seed=seed), cuts)


@dataclass
class CftFit:
    """``S = (c/6) ln[(2L/pi) sin(pi l/L)] + s0``."""

    c: float
    s0: float
    residual: float
    low_confidence: bool = False
    n_points: int = 0


def chord_log(l, L):
    """``ln[(2L/pi) sin(pi l / L)]``."""
    l = np.asarray(l, dtype=float)
    return np.log(2 * L / math.pi * np.sin(math.pi * l / L))


def cft_fit(
    curves: Union[EntropyCurve, Sequence[EntropyCurve]],
    trim: float = 0.1,
    residual_threshold: float = 0.05,
) -> CftFit:
    """Least-squares fit of one curve, or a joint fit of several sizes.

    Cuts with ``l < trim L`` or ``l > (1 - trim) L`` are left out.
    ``residual`` is the RMS deviation; above ``residual_threshold`` the fit
    is flagged as low confidence.
    """
    if isinstance(curves, EntropyCurve):
        curves = [curves]
    xs, ys = [], []
    for cv in curves:
        keep = (cv.cuts >= trim * cv.L) & (cv.cuts <= (1 - trim) * cv.L)
        xs.append(chord_log(cv.cuts[keep], cv.L) / 6.0)
        ys.append(cv.S[keep])
    x, y = np.concatenate(xs), np.concatenate(ys)
    if len(x) < 2:
        raise ValueError("fewer than two cuts inside the fit window")
    A = np.column_stack([x, np.ones_like(x)])
    (c, s0), *_ = np.linalg.lstsq(A, y, rcond=None)
    residual = float(np.sqrt(np.mean((A @ [c, s0] - y) ** 2)))
    return CftFit(float(c), float(s0), residual, residual > residual_threshold, len(x))


def halfchain_entropy_vs_size(
    template: ModelParams,
    L_range: Iterable[int],
    n_samples: int = 128,
    seed: int = 0,
) -> list[tuple[int, float]]:
    """Steady ``S(L/2, L)`` for each (even) size."""
    out = []
    for L in L_range:
        curve = steady_entropy_curve(build_full(template.with_size(L)), cuts=[L // 2],
                                     n_samples=n_samples, seed=seed)
        out.append((int(L), float(curve.S[0])))
    return out


def log_slope(series: Sequence[tuple[int, float]]) -> float:
    """Slope of ``S`` against ``ln L``."""
    L = np.array([p[0] for p in series], dtype=float)
    S = np.array([p[1] for p in series])
    return float(np.polyfit(np.log(L), S, 1)[0])


def crossover_size(
    template: ModelParams, L_range: Iterable[int], threshold: float = 0.5
) -> Optional[int]:
    """Smallest size whose single-particle spectrum is at least ``threshold`` complex."""
    for L in L_range:
        if complex_fraction(model_spectrum(template.with_size(L))) >= threshold:
            return int(L)
    return None
