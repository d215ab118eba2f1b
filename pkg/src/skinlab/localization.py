"""Localization lengths of skin modes and their finite-size scaling."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from skinlab.model import ModelParams
from skinlab.spectral import mode_index, model_spectrum

log = logging.getLogger(__name__)


class InsufficientDataError(ValueError):
    pass


@dataclass
class LocalizationFit:
    """Exponential envelope ``|psi_j| ~ e^{-j/xi}`` fitted to one eigenvector.

    ``window`` is the inclusive 1-based site range that entered the fit.
    ``xi`` is negative if the profile grows to the right; ``reliable`` is
    False when the log-linear fit explains less than ``quality_threshold``
    of the variance.
    """

    xi: float
    fit_quality: float
    window: tuple[int, int]
    mode_index: Optional[int] = None
    L: Optional[int] = None
    reliable: bool = True


def fit_localization_length(
    psi: np.ndarray,
    trim: float = 0.1,
    tail_cutoff: float = 1e-14,
    quality_threshold: float = 0.9,
    node_tol: float = 1e-8,
) -> LocalizationFit:
    """Least-squares fit of ``log|psi_j|`` against ``j``.

    The window drops ``floor(trim * L)`` sites at each end. It is kept
    symmetric on purpose: for standing waves ``|sin(j theta)|`` with
    ``theta = n pi/(L+1)`` the oscillating factor is mirror-symmetric about
    the chain centre and then has no projection on the slope. Sites below
    ``tail_cutoff`` times the peak are dropped, and so are exact nodes
    (below ``node_tol`` times both neighbours) and their mirror sites.
    """
    amp = np.abs(np.asarray(psi))
    L = len(amp)
    cut = int(math.floor(trim * L))
    lo, hi = cut, L - cut
    if hi - lo < 2:
        raise InsufficientDataError(f"window of {hi - lo} sites is too short to fit")
    # sites sitting on a node hold rounding noise only; drop them together
    # with their mirror images so the window stays symmetric
    padded = np.pad(amp, 1)
    node = amp < node_tol * np.maximum(padded[:-2], padded[2:])
    node |= node[::-1]
    sites = np.arange(1, L + 1)[lo:hi]
    y = amp[lo:hi]
    keep = (y > tail_cutoff * amp.max()) & ~node[lo:hi]
    if np.count_nonzero(keep) < 2:
        raise InsufficientDataError("fewer than two sites above the tail cutoff")
    x, y = sites[keep], np.log(y[keep])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot if ss_tot > 0 else 0.0
    r2 = min(1.0, max(0.0, r2))
    xi = -1.0 / slope if slope != 0 else math.inf
    fit = LocalizationFit(xi, r2, (int(sites[0]), int(sites[-1])), L=L)
    if r2 < quality_threshold:
        fit.reliable = False
        log.debug("poor exponential fit (R^2=%.3f)", r2)
    return fit


def analytic_xi(params: ModelParams) -> float:
    """Closed-form localization length where one exists.

    ``alpha = 0``: ``L / (2g)`` (scale-free). Nearest-neighbour sentinel:
    ``1 / g``. ``g = 0`` is delocalized and returns ``math.inf``.
    """
    g = params.g
    if g == 0:
        return math.inf
    if params.alpha == 0:
        return params.L / (2.0 * g)
    if params.nearest_neighbor:
        return 1.0 / g
    raise ValueError("no closed-form localization length at finite alpha > 0")


def localization_vs_size(
    template: ModelParams,
    mode_fraction: float,
    L_range: Iterable[int],
    trim: float = 0.1,
) -> list[LocalizationFit]:
    """Follow mode ``round(mode_fraction * L)`` (Re-sorted) across sizes."""
    fits = []
    for L in L_range:
        spec = model_spectrum(template.with_size(L), gauge="auto")
        m = mode_index(mode_fraction, L)
        fit = fit_localization_length(spec.right_eigenvectors[:, m - 1], trim=trim)
        fit.mode_index = m
        fits.append(fit)
    return fits


def rescaled_profile(psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``x = j/L`` and ``L |psi_j|^2`` for a normalized vector."""
    psi = np.asarray(psi)
    L = len(psi)
    p = np.abs(psi) ** 2
    return np.arange(1, L + 1) / L, L * p / p.sum()


@dataclass
class CollapseResult:
    """Linear fit ``L/xi = intercept + slope * log((L-1)/(L_c-1))``.

    ``slope`` is expected to equal the decay exponent; ``intercept`` is the
    constant ``L_c / xi_alpha`` of the mode.
    """

    alpha: float
    slope: float
    intercept: float
    residual: float
    L_c: float
    points: list[tuple[int, float, float]]


def collapse_fit(
    series: Sequence[LocalizationFit],
    L_c_m: float,
    alpha: float = math.nan,
    min_points: int = 4,
) -> CollapseResult:
    """Regress ``L / xi`` on ``log((L - 1) / (L_c_m - 1))`` for ``L >= L_c_m``.

    ``series`` entries need ``L`` set. The returned ``points`` hold
    ``(L, log_term, L/xi)`` for plotting.
    """
    if L_c_m is None or not L_c_m > 1:
        raise InsufficientDataError(f"critical length {L_c_m!r} does not allow a log scale")
    pts = [(f.L, f.L / f.xi) for f in series if f.L is not None and f.L >= L_c_m]
    if len(pts) < min_points:
        raise InsufficientDataError(
            f"{len(pts)} sizes at or above L_c={L_c_m}; need at least {min_points}"
        )
    L = np.array([p[0] for p in pts], dtype=float)
    y = np.array([p[1] for p in pts])
    x = np.log((L - 1) / (L_c_m - 1))
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    residual = float(np.sqrt(np.mean((A @ [slope, intercept] - y) ** 2)))
    return CollapseResult(
        alpha,
        float(slope),
        float(intercept),
        residual,
        float(L_c_m),
        [(int(a), float(b), float(c)) for a, b, c in zip(L, x, y)],
    )
