"""Spectra of the open chain and of its infinite-chain (Bloch) limit.

Everything that needs eigenvalues goes through :func:`eig_dense`, which
returns eigenpairs sorted by ``(Re E, Im E)``. Mode ``m`` (1-based) always
refers to that ordering, so the same index can be followed across sizes.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import bisect, brentq, minimize_scalar

from skinlab.model import ModelParams, apply_igt, build_full, is_nearest_neighbor

log = logging.getLogger(__name__)


class EigenDecompositionError(RuntimeError):
    """LAPACK failed to converge or produced non-finite output."""


@dataclass
class Spectrum:
    """Right eigenpairs of a dense matrix.

    Attributes
    ----------
    eigenvalues : np.ndarray
        Shape ``(L,)``, sorted ascending by real part, ties by imaginary part.
    right_eigenvectors : np.ndarray
        Shape ``(L, L)``; column ``k`` belongs to ``eigenvalues[k]`` and has
        unit Euclidean norm.
    is_complex : np.ndarray
        Boolean mask ``|Im E| > reality_tol``.
    reality_tol : float
    """

    eigenvalues: np.ndarray
    right_eigenvectors: np.ndarray
    is_complex: np.ndarray
    reality_tol: float

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    def mode(self, m: int) -> tuple[complex, np.ndarray]:
        """Eigenpair of the 1-based mode index ``m``."""
        if not 1 <= m <= self.size:
            raise IndexError(f"mode index {m} outside 1..{self.size}")
        return complex(self.eigenvalues[m - 1]), self.right_eigenvectors[:, m - 1]


def default_reality_tol(H: np.ndarray) -> float:
    return 1e-8 * max(1.0, float(np.linalg.norm(H, 2)))


def mode_index(fraction: float, L: int) -> int:
    """Nearest integer to ``fraction * L``, clipped to ``1..L`` (half rounds up)."""
    return int(min(L, max(1, math.floor(fraction * L + 0.5))))


def _sorted_spectrum(w: np.ndarray, V: np.ndarray, reality_tol: float) -> Spectrum:
    order = np.lexsort((w.imag, w.real))
    w = w[order]
    V = V[:, order]
    V = V / np.linalg.norm(V, axis=0)
    return Spectrum(w, V, np.abs(w.imag) > reality_tol, reality_tol)


def nearest_neighbor_gauge(H: np.ndarray) -> float:
    """``ln sqrt(|H_{j,j+1}| / |H_{j+1,j}|)`` averaged along the first off-diagonals."""
    up = np.abs(np.diag(H, 1)).mean()
    down = np.abs(np.diag(H, -1)).mean()
    if up == 0 or down == 0:
        return 0.0
    return 0.5 * math.log(up / down)


def select_gauge(H: np.ndarray, n_candidates: int = 5) -> float:
    """Gauge strength in ``[0, g_nn]`` that minimises the eigenvector condition number.

    Skin modes make the eigenvector matrix exponentially ill-conditioned;
    a partial imaginary gauge transform undoes most of it, but for strong
    long-range hopping the full nearest-neighbour gauge overshoots.
    """
    g_nn = nearest_neighbor_gauge(H)
    if g_nn == 0.0:
        return 0.0
    best_g, best_cond = 0.0, math.inf
    for g in np.linspace(0.0, g_nn, n_candidates):
        try:
            _, V = np.linalg.eig(apply_igt(H, g))
        except np.linalg.LinAlgError:
            continue
        V = V / np.linalg.norm(V, axis=0)
        cond = np.linalg.cond(V)
        if np.isfinite(cond) and cond < best_cond:
            best_g, best_cond = float(g), cond
    return best_g


def eig_dense(H: np.ndarray, reality_tol: Optional[float] = None, gauge=0.0) -> Spectrum:
    """Eigendecomposition of a dense non-Hermitian matrix.

    Parameters
    ----------
    H : np.ndarray
        Square matrix with finite entries.
    reality_tol : float, optional
        Threshold on ``|Im E|``; default ``1e-8 * max(1, ||H||_2)``.
    gauge : float or "auto"
        Diagonalise ``apply_igt(H, gauge)`` and map the eigenvectors back.
        Eigenvalues are unaffected in exact arithmetic; eigenvector tails of
        skin modes come out far more accurately. ``"auto"`` picks the gauge
        through :func:`select_gauge`.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise ValueError("matrix has non-finite entries")
    if reality_tol is None:
        reality_tol = default_reality_tol(H)
    if gauge == "auto":
        gauge = select_gauge(H)
    Hg = apply_igt(H, gauge) if gauge else H
    try:
        w, V = np.linalg.eig(Hg)
    except np.linalg.LinAlgError as exc:
        raise EigenDecompositionError(
            f"eig did not converge (n={H.shape[0]}, cond={np.linalg.cond(H):.3e}, gauge={gauge})"
        ) from exc
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(V))):
        raise EigenDecompositionError(
            f"non-finite eigenpairs (n={H.shape[0]}, cond={np.linalg.cond(H):.3e}, gauge={gauge})"
        )
    if gauge:
        sites = np.arange(1, H.shape[0] + 1)
        V = V * np.exp(-gauge * sites)[:, None]
    return _sorted_spectrum(w, V, reality_tol)


@lru_cache(maxsize=1024)
def _cached_spectrum(params: ModelParams, gauge) -> Spectrum:
    spec = eig_dense(build_full(params), gauge=gauge)
    spec.eigenvalues.flags.writeable = False
    spec.right_eigenvectors.flags.writeable = False
    spec.is_complex.flags.writeable = False
    return spec


def model_spectrum(params: ModelParams, gauge=0.0) -> Spectrum:
    """Memoised :func:`eig_dense` of ``build_full(params)`` (read-only arrays)."""
    return _cached_spectrum(params, gauge)


def residuals(H: np.ndarray, spec: Spectrum) -> np.ndarray:
    """``||H v_k - E_k v_k||`` for every column."""
    V = spec.right_eigenvectors
    return np.linalg.norm(H @ V - V * spec.eigenvalues, axis=0)


# ---------------------------------------------------------------------------
# alpha = 0: closed-form modes


def analytic_alpha0_modes(params: ModelParams, reality_tol: float = 1e-8) -> Spectrum:
    """Exact eigenpairs of the all-to-all chain (``alpha = 0``).

    Mode ``m`` has ``r_m = (J_R/J_L)^{1/L} e^{2 pi i m / L}`` (principal root),
    ``E = (r_m J_L - J_R) / (1 - r_m)`` and ``psi_j ∝ r_m^j``. When
    ``r_m = 1`` (only for ``J_L = J_R``) the Moebius map has no finite value;
    that mode is replaced by the uniform state with ``E = J (L - 1)`` and a
    warning is logged.
    """
    if params.alpha != 0:
        raise ValueError(f"closed form only holds at alpha = 0, got {params.alpha}")
    J_L, J_R, L = complex(params.J_L), complex(params.J_R), params.L
    if J_L == 0:
        raise ValueError("J_L = 0 has no closed form (r_m undefined)")
    base = (J_R / J_L) ** (1.0 / L)
    sites = np.arange(1, L + 1)
    E = np.empty(L, dtype=complex)
    V = np.empty((L, L), dtype=complex)
    for m in range(1, L + 1):
        r = base * cmath.exp(2j * math.pi * m / L)
        if abs(1 - r) < 1e-12:
            log.warning("mode m=%d has r_m = 1; using the symmetric mode E = J (L - 1)", m)
            E[m - 1] = J_L * (L - 1)
            V[:, m - 1] = 1.0
        else:
            E[m - 1] = (r * J_L - J_R) / (1 - r)
            V[:, m - 1] = r ** sites
    return _sorted_spectrum(E, V, reality_tol)


# ---------------------------------------------------------------------------
# real-to-complex transition


def complex_fraction(spec: Spectrum) -> float:
    return float(np.count_nonzero(spec.is_complex)) / spec.size


@dataclass
class TransitionScan:
    """Complex fraction of the open-chain spectrum over a window of sizes.

    ``L_c_detected`` is ``None`` when the window ends before any transition.
    """

    sizes: list[int]
    complex_fraction: list[float]
    threshold: float
    L_c_detected: Optional[int] = None
    mode_fraction: Optional[float] = None
    mode_imag: list[float] = field(default_factory=list)


def scan_critical_length(
    template: ModelParams,
    L_range: Iterable[int],
    threshold: float = 0.0,
    mode_fraction: Optional[float] = None,
) -> TransitionScan:
    """Find the smallest size whose spectrum turns complex.

    Without ``mode_fraction`` the detected size is the first ``L`` with
    complex fraction ``> threshold``. With it, only mode
    ``m = mode_index(mode_fraction, L)`` is followed, and the detected size
    is the first ``L`` where that eigenvalue leaves the real axis.
    """
    scan = TransitionScan([], [], threshold, mode_fraction=mode_fraction)
    for L in L_range:
        spec = model_spectrum(template.with_size(L))
        frac = complex_fraction(spec)
        scan.sizes.append(int(L))
        scan.complex_fraction.append(frac)
        if mode_fraction is None:
            hit = frac > threshold
        else:
            m = mode_index(mode_fraction, L)
            scan.mode_imag.append(float(spec.eigenvalues[m - 1].imag))
            hit = bool(spec.is_complex[m - 1])
        if hit and scan.L_c_detected is None:
            scan.L_c_detected = int(L)
    if scan.L_c_detected is None:
        log.info("no transition within L in [%s, %s]", scan.sizes[:1], scan.sizes[-1:])
    return scan


def predict_critical_length(alpha: float, g: float, xtol: float = 1e-9) -> float:
    """Root ``L_c >= 2`` of ``e^{(L_c - 2) g} = (L_c - 1)^alpha``.

    Returns ``math.inf`` when there is no transition (``g <= 0`` or the
    nearest-neighbour sentinel). For ``alpha <= g`` the only root is the
    trivial ``L_c = 2``.
    """
    if g <= 0 or is_nearest_neighbor(alpha):
        return math.inf
    if alpha <= g:
        return 2.0

    def f(L):
        return (L - 2) * g - alpha * math.log(L - 1)

    # f falls from 0 at L = 2 to its minimum at L = 1 + alpha/g, then grows
    lo = 1.0 + alpha / g
    hi = 2.0 * lo
    while f(hi) <= 0:
        hi *= 2.0
    return float(bisect(f, lo, hi, xtol=xtol))


# ---------------------------------------------------------------------------
# simplified model


@dataclass
class ThetaRoots:
    """Real solutions ``theta`` in ``(0, pi)`` of ``sin((L+1) theta) = mu sin(theta)``.

    ``n_real`` counts tangential (double) roots twice.
    """

    L: int
    mu: float
    real_roots: np.ndarray
    n_real: int
    J: float = 1.0

    @property
    def energies(self) -> np.ndarray:
        return 2.0 * self.J * np.cos(self.real_roots)


def theta_roots(
    L: int,
    mu: float,
    J: float = 1.0,
    grid_factor: int = 20,
    tangency_tol: float = 1e-10,
) -> ThetaRoots:
    """Real quantisation angles of the open chain with a unidirectional end link.

    Sign changes of ``f = sin((L+1) t) - mu sin t`` on a grid of
    ``grid_factor * (L + 1)`` points are refined with Brent's method.
    At grid-local minima of ``|f|`` without a sign change the extremum of
    ``f`` is located: if it crosses zero the two close roots are bracketed,
    if ``|f| < tangency_tol`` there it is kept as a double root (at
    ``mu = 1`` two root families can touch). ``theta = 0`` solves the equation trivially but
    carries no state and is excluded.
    """

    def f(t):
        return np.sin((L + 1) * t) - mu * np.sin(t)

    n = grid_factor * (L + 1)
    t = np.linspace(0.0, math.pi, n + 1)[1:-1]
    y = f(t)
    roots: list[float] = []
    mult: list[int] = []
    exact = y == 0.0
    for i in range(len(t)):
        if exact[i]:
            # a grid hit is a double root when f keeps its sign across it
            left = y[i - 1] if i > 0 else -f(t[i] - 0.5 * (t[1] - t[0]))
            right = y[i + 1] if i + 1 < len(t) else f(t[i] + 0.5 * (t[1] - t[0]))
            roots.append(float(t[i]))
            mult.append(2 if left * right > 0 else 1)
        elif i + 1 < len(t) and not exact[i + 1] and y[i] * y[i + 1] < 0:
            roots.append(float(brentq(f, t[i], t[i + 1], xtol=1e-14)))
            mult.append(1)

    # between grid points f may dip through zero and back (a close pair) or
    # just touch it (a double root); look at the extremum of f there
    ay = np.abs(y)
    for i in range(1, len(t) - 1):
        if ay[i] <= ay[i - 1] and ay[i] <= ay[i + 1] and y[i - 1] * y[i + 1] > 0 and not exact[i]:
            sgn = math.copysign(1.0, y[i])
            res = minimize_scalar(
                lambda s: sgn * f(s), bounds=(t[i - 1], t[i + 1]), method="bounded",
                options={"xatol": 1e-14},
            )
            fx = f(res.x)
            if any(abs(res.x - r) < 1e-9 for r in roots):
                continue
            if abs(fx) < tangency_tol:
                roots.append(float(res.x))
                mult.append(2)
            elif sgn * fx < 0:
                for a, b in ((t[i - 1], res.x), (res.x, t[i + 1])):
                    if f(a) * f(b) < 0:
                        roots.append(float(brentq(f, a, b, xtol=1e-14)))
                        mult.append(1)

    order = np.argsort(roots)
    real_roots = np.asarray(roots, dtype=float)[order]
    n_real = int(np.sum(np.asarray(mult, dtype=int)[order])) if roots else 0
    if L <= 3:
        log.info("theta root counting at L=%d is a small-size boundary case", L)
    return ThetaRoots(L, mu, real_roots, n_real, J)


# ---------------------------------------------------------------------------
# Bloch spectrum of the infinite chain


def polylog_tail_bound(alpha: float, cutoff: int, order: int = 0, k: float = math.pi) -> float:
    """Upper bound on the dropped tail of the series used by :func:`polylog`.

    ``order = 0``: plain series, ``sum_{n>N} n^-alpha <= N^{1-alpha}/(alpha-1)``
    (``alpha > 1``). ``order = d``: the ``d``-times summed-by-parts series,
    whose terms are bounded by ``(alpha)_d n^{-alpha-d}``, divided by
    ``|1 - e^{ik}|^d``.
    """
    if is_nearest_neighbor(alpha):
        return 0.0
    if order == 0:
        if alpha <= 1:
            return math.inf
        return cutoff ** (1.0 - alpha) / (alpha - 1.0)
    if alpha == 0:
        return 0.0
    rising = math.prod(alpha + i for i in range(order))
    p = alpha + order - 1
    return rising * cutoff ** (-p) / p / (2.0 * abs(math.sin(k / 2))) ** order


def _finite_differences(a: np.ndarray, order: int) -> np.ndarray:
    """``order``-fold backward difference with ``a_0 = 0`` prepended each time."""
    for _ in range(order):
        a = np.diff(a, prepend=0.0)
    return a


def polylog(
    alpha: float,
    z,
    cutoff: int = 10**6,
    k_min: float = 1e-4,
    order: Optional[int] = None,
    chunk: Optional[int] = None,
):
    """``Li_alpha(z) = sum_{n>=1} z^n / n^alpha`` for ``|z| = 1``.

    For ``alpha > 1`` the series is summed directly up to ``cutoff`` terms.
    For ``alpha <= 1`` it converges only conditionally (``alpha = 0``: in the
    Abel sense), so it is summed by parts ``order`` times (default 2),

        Li = (1 - z)^-d sum_n (Delta^d a)_n z^n,   a_n = n^-alpha,

    which needs ``arg z`` bounded away from 0 by ``k_min``. ``order`` may be
    forced for ``alpha > 1`` as well. Accepts scalars or arrays of ``z``.
    """
    z_arr = np.asarray(z, dtype=complex)
    scalar = z_arr.ndim == 0
    z_arr = np.atleast_1d(z_arr)
    if not np.allclose(np.abs(z_arr), 1.0, atol=1e-12):
        raise ValueError("polylog is only implemented on the unit circle")
    if is_nearest_neighbor(alpha):
        out = z_arr.copy()
        return complex(out[0]) if scalar else out
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    k = np.angle(z_arr)
    if order is None:
        order = 0 if alpha > 1 else 2
    if order == 0 and alpha <= 1:
        raise ValueError("plain summation diverges for alpha <= 1; use order >= 1")
    if order > 0 and np.any(np.abs(k) < k_min):
        raise ValueError(
            f"Li_{alpha}(z) with |arg z| < k_min={k_min} is divergent or unresolvable here"
        )

    n = np.arange(1, cutoff + 1, dtype=float)
    coeff = n ** (-alpha)
    if order:
        coeff = _finite_differences(coeff, order)
        # alpha = 0 sums exactly; drop the all-zero tail
        nz = np.flatnonzero(coeff)
        coeff = coeff[: nz[-1] + 1] if len(nz) else coeff[:1]
    if chunk is None:
        chunk = max(256, (1 << 22) // len(z_arr))
    total = np.zeros(z_arr.shape, dtype=complex)
    # sum smallest terms first
    for start in range(len(coeff), 0, -chunk):
        lo = max(0, start - chunk)
        phase = np.exp(1j * np.outer(k, np.arange(lo + 1, start + 1)))
        total += phase @ coeff[lo:start]
    if order:
        total /= (1.0 - z_arr) ** order
    return complex(total[0]) if scalar else total


def bulk_dispersion(params: ModelParams, k, cutoff: int = 20000, order: Optional[int] = None):
    """Bloch energy ``E(k) = J_L Li_alpha(e^{ik}) + J_R Li_alpha(e^{-ik})``.

    ``cutoff`` is smaller than :func:`polylog`'s default so whole k-grids stay
    cheap; for ``alpha = 2`` the truncation error is below ``1/cutoff``.
    """
    k = np.asarray(k, dtype=float)
    z = np.exp(1j * k)
    li = polylog(params.alpha, z, cutoff=cutoff, order=order)
    # Li(conj z) = conj Li(z) for real alpha
    return params.J_L * li + params.J_R * np.conj(li)


def winding_number(
    params: ModelParams,
    E_base: Optional[complex] = None,
    n_k: int = 4096,
    tol: float = 1e-8,
    cutoff: int = 20000,
) -> int:
    """Winding of the Bloch curve ``E(k)`` around ``E_base``.

    Sign convention: positive for clockwise traversal as ``k`` increases, so
    ``|J_L| > |J_R|`` (counter-clockwise curve, skin modes on the left edge)
    gives ``-1``. ``E_base`` defaults to the centroid of the sampled curve.
    The k-grid is offset by half a step so ``k = 0`` is never sampled.
    """
    k = 2 * math.pi * (np.arange(n_k) + 0.5) / n_k
    E = bulk_dispersion(params, k, cutoff=cutoff)
    if E_base is None:
        E_base = complex(E.mean())
    d = E - E_base
    scale = max(1.0, float(np.abs(E).max()))
    if np.abs(d).min() < tol * scale:
        raise ValueError(f"E_base={E_base} lies on the Bloch curve; winding is undefined")
    phase = np.unwrap(np.angle(np.append(d, d[0])))
    turns = (phase[-1] - phase[0]) / (2 * math.pi)
    return -int(round(turns))


def conjugate_unpaired(eigenvalues: Sequence[complex], tol: float) -> list[complex]:
    """Complex eigenvalues left over after greedily pairing each with a conjugate."""
    vals = [complex(e) for e in eigenvalues if abs(complex(e).imag) > tol]
    remaining = list(vals)
    unpaired = []
    while remaining:
        e = remaining.pop(0)
        dists = [abs(x - e.conjugate()) for x in remaining]
        if dists and min(dists) <= tol:
            remaining.pop(int(np.argmin(dists)))
        else:
            unpaired.append(e)
    return unpaired
