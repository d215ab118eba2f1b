"""No-jump evolution of free-fermion Slater determinants.

A half-filled Slater determinant is stored as an ``L x N`` matrix of
orthonormal orbitals. Under a quadratic non-Hermitian ``H`` the state stays
Slater: each orbital is propagated by ``e^{-iH dt}`` and the set is
re-orthonormalized, which only rescales the many-body ray.

A Fock-space oracle (``L <= 8``) propagates the full many-body vector for
cross-checks.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from skinlab.model import apply_igt
from skinlab.spectral import select_gauge

log = logging.getLogger(__name__)


class RankLossError(RuntimeError):
    """Propagated orbitals became numerically linearly dependent."""


class AmbiguousSteadyStateError(RuntimeError):
    """The N-th and (N+1)-th largest Im E are not separated."""


@dataclass(frozen=True)
class OrbitalState:
    orbitals: np.ndarray
    time: float = 0.0

    @property
    def L(self) -> int:
        return self.orbitals.shape[0]

    @property
    def N(self) -> int:
        return self.orbitals.shape[1]


def orthonormalize(M: np.ndarray, cond_limit: float = 1e12) -> np.ndarray:
    """Orthonormal basis of the column span of ``M`` (thin QR)."""
    Q, R = np.linalg.qr(M)
    d = np.abs(np.diag(R))
    if d.size and (d.min() == 0 or np.linalg.cond(R) > cond_limit):
        raise RankLossError(
            f"orbital overlap is singular (cond(R)={np.linalg.cond(R):.3e} > {cond_limit:.0e})"
        )
    return Q


def orthonormalize_graded(M: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the column span of a row-graded ``M``.

    Rows are sorted by decreasing norm and Householder QR with column
    pivoting is applied; this keeps each row accurate relative to its own
    size, so spans like ``diag(e^{-g j}) W`` with well-conditioned ``W``
    survive dynamic ranges far beyond ``1/eps``. No rank check is made here;
    callers test rank in a frame where it is meaningful.
    """
    order = np.argsort(-np.linalg.norm(M, axis=1), kind="stable")
    Q, _, _ = sla.qr(M[order], mode="economic", pivoting=True)
    out = np.empty_like(Q)
    out[order] = Q
    return out


def _full_rank(M: np.ndarray, rtol: float = 1e-12) -> bool:
    """Rank test insensitive to row and column scaling."""
    M = M / np.linalg.norm(M, axis=0)
    M = M / np.linalg.norm(M, axis=1, keepdims=True)
    M = M / np.linalg.norm(M, axis=0)
    sv = np.linalg.svd(M, compute_uv=False)
    return len(sv) >= M.shape[1] and sv[-1] >= rtol * sv[0]


def init_cdw(L: int) -> OrbitalState:
    """Charge-density wave with sites 2, 4, ..., L occupied."""
    if L % 2:
        raise ValueError(f"CDW needs an even number of sites, got {L}")
    N = L // 2
    Q = np.zeros((L, N), dtype=complex)
    Q[np.arange(1, L, 2), np.arange(N)] = 1.0
    return OrbitalState(Q)


def slater_state(orbitals: np.ndarray) -> OrbitalState:
    """Slater determinant spanned by arbitrary (independent) columns."""
    return OrbitalState(orthonormalize(np.asarray(orbitals, dtype=complex)))


def default_dt(H: np.ndarray) -> float:
    return 0.05 / float(np.linalg.norm(H, 2))


def propagator(H: np.ndarray, dt: float, cond_limit: float = 1e6) -> np.ndarray:
    """``e^{-i H dt}``.

    Uses the eigendecomposition when the eigenvector matrix is well
    conditioned, otherwise scaling and squaring (``scipy.linalg.expm``).
    """
    H = np.asarray(H, dtype=complex)
    try:
        w, V = np.linalg.eig(H)
        if np.linalg.cond(V) <= cond_limit:
            return (V * np.exp(-1j * w * dt)) @ np.linalg.inv(V)
    except np.linalg.LinAlgError:
        pass
    return sla.expm(-1j * dt * H)


def evolve(
    state: OrbitalState,
    H: np.ndarray,
    dt: float,
    steps: int,
    U: Optional[np.ndarray] = None,
    cond_limit: float = 1e12,
) -> OrbitalState:
    """Apply ``steps`` normalized steps of ``e^{-iH dt}`` to the orbitals."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if H.shape != (state.L, state.L):
        raise ValueError(f"H has shape {H.shape}, state has L={state.L}")
    if U is None:
        U = propagator(H, dt)
    Q = state.orbitals
    for _ in range(steps):
        Q = orthonormalize(U @ Q, cond_limit)
    return OrbitalState(Q, state.time + steps * dt)


def trajectory(
    state: OrbitalState, H: np.ndarray, dt: float, checkpoints: Sequence[int]
) -> Iterator[OrbitalState]:
    """Yield the state after each cumulative step count in ``checkpoints``."""
    U = propagator(H, dt)
    done = 0
    for target in checkpoints:
        if target < done:
            raise ValueError("checkpoints must be non-decreasing")
        state = evolve(state, H, dt, target - done, U=U)
        done = target
        yield state


def correlation_from_orbitals(state: OrbitalState) -> np.ndarray:
    """``C_ij = <c_i^dag c_j> = sum_k conj(Q_ik) Q_jk``."""
    Q = state.orbitals
    return Q.conj() @ Q.T


# ---------------------------------------------------------------------------
# steady state


def _gauged_eig(H: np.ndarray, gauge):
    """Eigenpairs of the gauge-transformed matrix, sorted by decreasing Im E."""
    if gauge == "auto":
        gauge = select_gauge(H)
    w, V = np.linalg.eig(apply_igt(H, gauge) if gauge else H)
    order = np.argsort(-w.imag, kind="stable")
    return w[order], V[:, order], float(gauge)


def imaginary_gap(H: np.ndarray, N: int) -> float:
    """``Im E_N - Im E_{N+1}`` with eigenvalues ordered by decreasing Im."""
    w = np.sort(np.linalg.eigvals(H).imag)[::-1]
    if N >= len(w):
        return math.inf
    return float(w[N - 1] - w[N])


def steady_state_projection(
    H: np.ndarray, N: int, degeneracy_tol: float = 1e-10, gauge="auto"
) -> OrbitalState:
    """Slater determinant of the ``N`` right eigenvectors with largest Im E.

    This is the long-time limit of no-jump evolution for any initial state
    with non-zero overlap, provided the ``N``-th largest Im E is separated
    from the next by more than ``degeneracy_tol``.
    """
    H = np.asarray(H, dtype=complex)
    L = H.shape[0]
    w, V, g = _gauged_eig(H, gauge)
    if N < L and w[N - 1].imag - w[N].imag <= degeneracy_tol:
        raise AmbiguousSteadyStateError(
            f"Im gap {w[N - 1].imag - w[N].imag:.3e} <= {degeneracy_tol:.0e} at N={N}"
        )
    sites = np.arange(1, L + 1)
    if not _full_rank(V[:, :N]):
        raise RankLossError("top eigenvectors are linearly dependent")
    Q = V[:, :N] * np.exp(-g * sites)[:, None]
    return OrbitalState(orthonormalize_graded(Q), math.inf)


def evolve_to_steady(
    state: OrbitalState,
    H: np.ndarray,
    dt: Optional[float] = None,
    tol: float = 1e-9,
    patience: int = 50,
    max_steps: int = 200_000,
) -> tuple[OrbitalState, bool]:
    """Evolve until the half-chain entropy spreads less than ``tol`` over ``patience`` steps.

    The test is on the spread of the last ``patience + 1`` values, not on
    single-step changes, so refining ``dt`` does not loosen it.

    Returns the final state and whether the criterion was met. With a
    degenerate top of the Im spectrum the entropy keeps oscillating and the
    run ends at ``max_steps`` unconverged.
    """
    from skinlab.entanglement import entropy_from_correlation

    if dt is None:
        dt = default_dt(H)
    U = propagator(H, dt)
    cut = range(state.L // 2)
    window = deque([entropy_from_correlation(correlation_from_orbitals(state), cut)], maxlen=patience + 1)
    for step in range(1, max_steps + 1):
        state = evolve(state, H, dt, 1, U=U)
        window.append(entropy_from_correlation(correlation_from_orbitals(state), cut))
        if len(window) == window.maxlen and max(window) - min(window) < tol:
            return state, True
    log.info("no steady state after %d steps (dt=%g)", max_steps, dt)
    return state, False


@dataclass
class SteadyEnsemble:
    """Long-time states of no-jump evolution.

    ``exact`` means a unique steady state (a single projection). Otherwise
    the top of the Im spectrum is degenerate: the late-time state keeps
    rotating inside that manifold with the real-energy phases, and
    ``samples`` are equally weighted draws of those phases, so averages over
    them are infinite-time averages.
    """

    samples: list[OrbitalState]
    exact: bool
    n_top: int
    n_degenerate: int
    info: dict = field(default_factory=dict)


def steady_ensemble(
    H: np.ndarray,
    initial: OrbitalState,
    n_samples: int = 256,
    seed: int = 0,
    degeneracy_tol: float = 1e-10,
    gauge="auto",
) -> SteadyEnsemble:
    """Infinite-time limit of no-jump evolution from ``initial``.

    Eigenmodes are grouped by Im E. Modes strictly above the ``N``-th level
    always fill; modes below it die out; the ``N``-th level itself (the
    degenerate manifold) keeps the component of the initial state that is
    left after the top modes are filled. Its members evolve with phases
    ``e^{-i Re(E) t}``. With two members one relative phase is sampled on a
    uniform grid; with more, independent uniform phases are drawn from
    ``seed`` (exact for incommensurate energies).
    """
    H = np.asarray(H, dtype=complex)
    L, N = initial.L, initial.N
    w, V, g = _gauged_eig(H, gauge)
    sites = np.arange(1, L + 1)
    back = np.exp(-g * sites)[:, None]
    level = w[N - 1].imag
    top = np.flatnonzero(w.imag > level + degeneracy_tol)
    deg = np.flatnonzero(np.abs(w.imag - level) <= degeneracy_tol)
    info = {"gauge": g, "level": float(level)}
    if len(deg) == 1 and len(top) == N - 1:
        Q = orthonormalize_graded(V[:, :N] * back)
        return SteadyEnsemble([OrbitalState(Q, math.inf)], True, len(top), 1, info)

    # initial orbitals in the gauge frame, expanded in eigenmodes
    V = V / np.linalg.norm(V, axis=0)
    B0 = np.linalg.solve(V, initial.orbitals * np.exp(g * sites)[:, None])
    # rescaling initial orbitals leaves their span, hence the state, unchanged
    B0 = B0 / np.linalg.norm(B0, axis=0)
    K = len(top)
    if K:
        # row scaling leaves the kernel unchanged but makes the rank test meaningful
        Bt = B0[top] / np.linalg.norm(B0[top], axis=1, keepdims=True)
        _, sv, vh = np.linalg.svd(Bt)
        if sv[-1] < 1e-12 * sv[0]:
            raise AmbiguousSteadyStateError("initial state has no full-rank overlap with the top modes")
        kernel = vh[K:].conj().T
    else:
        kernel = np.eye(N)
    Y = B0[deg] @ kernel
    if not _full_rank(Y):
        raise AmbiguousSteadyStateError("initial state has no full-rank overlap with the degenerate level")

    # modes with equal real energy share one phase
    re = w[deg].real
    groups = np.zeros(len(deg), dtype=int)
    for i in range(1, len(deg)):
        same = np.flatnonzero(np.abs(re[:i] - re[i]) <= degeneracy_tol)
        groups[i] = groups[same[0]] if len(same) else groups[:i].max() + 1
    n_groups = groups.max() + 1
    if n_groups == 1:
        phases = np.zeros((1, 1))
    elif n_groups == 2:
        grid = 2 * math.pi * np.arange(n_samples) / n_samples
        phases = np.column_stack([np.zeros(n_samples), grid])
    else:
        rng = np.random.default_rng(seed)
        phases = 2 * math.pi * rng.random((n_samples, n_groups))
    samples = []
    V_top = V[:, top]
    V_deg = V[:, deg]
    for ph in phases:
        rot = np.exp(1j * ph[groups])[:, None]
        Qg = np.hstack([V_top, V_deg @ (rot * Y)])
        samples.append(OrbitalState(orthonormalize_graded(Qg * back), math.inf))
    info["n_groups"] = int(n_groups)
    return SteadyEnsemble(samples, n_groups == 1, len(top), len(deg), info)


# ---------------------------------------------------------------------------
# checkpoint files


def dump_correlation_csv(C: np.ndarray, path) -> None:
    """Row-major CSV, one ``"re,im"`` cell per matrix entry."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(C):
            writer.writerow([f"{z.real!r},{z.imag!r}" for z in map(complex, row)])


def load_correlation_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [
            [complex(*map(float, cell.split(","))) for cell in row]
            for row in csv.reader(fh)
            if row
        ]
    return np.array(rows, dtype=complex)


# ---------------------------------------------------------------------------
# Fock-space oracle


@dataclass
class FockState:
    """Amplitudes over occupation configurations of ``N`` fermions on ``L`` sites.

    ``basis[k]`` is the sorted tuple of occupied (0-based) sites for
    ``amplitudes[k]``; the configuration means ``c_{s1}^dag ... c_{sN}^dag |0>``
    with ``s1 < ... < sN``.
    """

    amplitudes: np.ndarray
    L: int
    N: int
    time: float = 0.0

    @property
    def basis(self) -> list[tuple[int, ...]]:
        return fock_basis(self.L, self.N)


def fock_basis(L: int, N: int) -> list[tuple[int, ...]]:
    return list(itertools.combinations(range(L), N))


def many_body_hamiltonian(H: np.ndarray, N: int) -> np.ndarray:
    """Matrix of ``sum_ij H_ij c_i^dag c_j`` on the ``C(L, N)`` sector."""
    H = np.asarray(H, dtype=complex)
    L = H.shape[0]
    if L > 8:
        raise ValueError(f"Fock oracle is limited to L <= 8, got {L}")
    basis = fock_basis(L, N)
    index = {occ: k for k, occ in enumerate(basis)}
    M = np.zeros((len(basis), len(basis)), dtype=complex)
    for col, occ in enumerate(basis):
        occupied = set(occ)
        for j in occ:
            rest = sorted(occupied - {j})
            sign_j = (-1) ** sum(1 for s in occ if s < j)
            for i in range(L):
                amp = H[i, j]
                if amp == 0 or (i in occupied and i != j):
                    continue
                sign_i = (-1) ** sum(1 for s in rest if s < i)
                new = tuple(sorted(rest + [i]))
                M[index[new], col] += sign_i * sign_j * amp
    return M


def fock_from_orbitals(state: OrbitalState) -> FockState:
    Q = state.orbitals
    L, N = Q.shape
    amps = np.array([np.linalg.det(Q[list(occ), :]) for occ in fock_basis(L, N)])
    return FockState(amps / np.linalg.norm(amps), L, N, state.time)


def fock_oracle_evolve(
    H: np.ndarray, psi0: FockState, dt: float, steps: int
) -> FockState:
    """Normalized many-body evolution by the dense exponential of the sector matrix."""
    U = sla.expm(-1j * dt * many_body_hamiltonian(H, psi0.N))
    psi = psi0.amplitudes
    for _ in range(steps):
        psi = U @ psi
        psi = psi / np.linalg.norm(psi)
    return FockState(psi, psi0.L, psi0.N, psi0.time + steps * dt)


def fock_steady_state(H: np.ndarray, N: int, degeneracy_tol: float = 1e-10) -> FockState:
    """Many-body eigenvector with the largest Im eigenvalue."""
    M = many_body_hamiltonian(H, N)
    w, V = np.linalg.eig(M)
    order = np.argsort(-w.imag)
    if len(w) > 1 and w[order[0]].imag - w[order[1]].imag <= degeneracy_tol:
        raise AmbiguousSteadyStateError("top many-body Im eigenvalue is degenerate")
    v = V[:, order[0]]
    return FockState(v / np.linalg.norm(v), H.shape[0], N, math.inf)


def fock_entropy(psi: FockState, l: int) -> float:
    """Von Neumann entropy of the left block of ``l`` sites (natural log)."""
    L = psi.L
    M = np.zeros((2**l, 2 ** (L - l)), dtype=complex)
    for amp, occ in zip(psi.amplitudes, psi.basis):
        left = sum(1 << s for s in occ if s < l)
        right = sum(1 << (s - l) for s in occ if s >= l)
        # ordered c^dag string already has the left block first: no extra sign
        M[left, right] = amp
    p = np.linalg.svd(M, compute_uv=False) ** 2
    p = p[p > 1e-300]
    p = p / p.sum()
    return float(-(p * np.log(p)).sum())
