import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from skinlab.dynamics import (
    AmbiguousSteadyStateError,
    FockState,
    OrbitalState,
    RankLossError,
    correlation_from_orbitals,
    default_dt,
    dump_correlation_csv,
    evolve,
    evolve_to_steady,
    fock_entropy,
    fock_from_orbitals,
    fock_oracle_evolve,
    fock_steady_state,
    imaginary_gap,
    init_cdw,
    load_correlation_csv,
    many_body_hamiltonian,
    orthonormalize,
    orthonormalize_graded,
    propagator,
    slater_state,
    steady_ensemble,
    steady_state_projection,
    trajectory,
)
from skinlab.entanglement import entropy_from_correlation
from skinlab.model import NEAREST_NEIGHBOR, ModelParams, build_full
from conftest import complex_draw, model_params


def test_cdw():
    st = init_cdw(4)
    np.testing.assert_array_equal(correlation_from_orbitals(st), np.diag([0, 1, 0, 1]))
    assert (st.L, st.N) == (4, 2)
    with pytest.raises(ValueError):
        init_cdw(5)


def test_single_orbital_correlation():
    q = np.zeros((3, 1), dtype=complex)
    q[:2, 0] = 1 / math.sqrt(2)
    C = correlation_from_orbitals(OrbitalState(q))
    np.testing.assert_allclose(C[:2, :2], 0.5)
    assert C[2, 2] == 0


def test_orthonormalize_rank_loss():
    M = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-14], [0, 0]])
    with pytest.raises(RankLossError):
        orthonormalize(M)


def test_graded_orthonormalization_keeps_span():
    rng = np.random.default_rng(0)
    L, N = 60, 30
    W = rng.normal(size=(L, N)) + 1j * rng.normal(size=(L, N))
    D = np.exp(-0.5 * np.arange(L))  # dynamic range e^{-30}
    Q = orthonormalize_graded(D[:, None] * W)
    np.testing.assert_allclose(Q.conj().T @ Q, np.eye(N), atol=1e-12)
    # rows of the span are accurate relative to their own size: D^{-1} Q must lie in span(W)
    Z = Q / D[:, None]
    P = W @ np.linalg.lstsq(W, Z, rcond=None)[0]
    assert np.linalg.norm(P - Z) / np.linalg.norm(Z) < 1e-8


def test_propagator_routes_agree():
    H = build_full(ModelParams(1.3, 0.4, 1.0, 8))
    from scipy.linalg import expm

    np.testing.assert_allclose(propagator(H, 0.3), expm(-0.3j * H), atol=1e-10)
    # a defective matrix forces the scaling-and-squaring route
    J = np.array([[0.0, 1.0], [0.0, 0.0]])
    np.testing.assert_allclose(propagator(J, 0.5), expm(-0.5j * J), atol=1e-14)


def test_evolve_errors():
    H = build_full(ModelParams.from_g(0.2, 1.0, 6))
    with pytest.raises(ValueError):
        evolve(init_cdw(6), H, 0.0, 3)
    with pytest.raises(ValueError):
        evolve(init_cdw(4), H, 0.1, 3)


def test_hermitian_unitarity_and_step_refinement():
    H = build_full(ModelParams(1.0, 1.0, 1.5, 10))
    dt = default_dt(H)
    U = propagator(H, dt)
    Q = init_cdw(10).orbitals
    raw = U @ Q
    assert np.abs(np.linalg.norm(raw, axis=0) - 1).max() <= 1e-10
    one = evolve(init_cdw(10), H, 2 * dt, 1)
    two = evolve(init_cdw(10), H, dt, 2)
    e1 = np.linalg.eigvalsh(correlation_from_orbitals(one))
    e2 = np.linalg.eigvalsh(correlation_from_orbitals(two))
    np.testing.assert_allclose(e1, e2, atol=1e-9)
    np.testing.assert_allclose(correlation_from_orbitals(one), correlation_from_orbitals(two), atol=1e-9)


@given(model_params(min_L=4, max_L=16), st.integers(1, 30))
def test_purity_and_particle_number(p, steps):
    L = p.L - p.L % 2
    p = p.with_size(L)
    H = build_full(p)
    st_ = evolve(init_cdw(L), H, default_dt(H) * 10, steps)
    C = correlation_from_orbitals(st_)
    np.testing.assert_allclose(C @ C, C, atol=1e-10)
    assert np.trace(C).real == pytest.approx(L // 2, abs=1e-12)


def test_trajectory_checkpoints():
    H = build_full(ModelParams.from_g(0.3, 2.0, 8))
    states = list(trajectory(init_cdw(8), H, 0.1, [5, 5, 12]))
    assert [s.time for s in states] == pytest.approx([0.5, 0.5, 1.2])
    direct = evolve(init_cdw(8), H, 0.1, 12)
    np.testing.assert_allclose(correlation_from_orbitals(states[-1]), correlation_from_orbitals(direct), atol=1e-12)
    with pytest.raises(ValueError):
        list(trajectory(init_cdw(8), H, 0.1, [5, 3]))


# ---------------------------------------------------------------- Fock oracle


def test_many_body_single_particle_sector():
    H = build_full(ModelParams(1.2, 0.3, 0.7, 5))
    np.testing.assert_allclose(many_body_hamiltonian(H, 1), H)


def test_many_body_spectrum_is_sums():
    H = build_full(ModelParams(1.2 + 0.3j, 0.5, 1.1, 6))
    w = np.linalg.eigvals(H)
    from itertools import combinations

    sums = np.array([sum(w[list(c)]) for c in combinations(range(6), 3)])
    mb = np.linalg.eigvals(many_body_hamiltonian(H, 3))
    for x in mb:
        assert np.abs(sums - x).min() < 1e-8


def test_fock_limits():
    with pytest.raises(ValueError):
        many_body_hamiltonian(np.zeros((9, 9)), 4)


def test_fock_entropy_product_and_bell():
    psi = fock_from_orbitals(init_cdw(6))
    assert fock_entropy(psi, 3) == pytest.approx(0.0, abs=1e-12)
    q = np.zeros((2, 1), dtype=complex)
    q[:, 0] = 1 / math.sqrt(2)
    assert fock_entropy(fock_from_orbitals(OrbitalState(q)), 1) == pytest.approx(math.log(2))


@pytest.mark.parametrize("L", [4, 6, 8])
def test_orbitals_match_fock_oracle(L):
    rng = np.random.default_rng(L)
    for _ in range(3):
        H = build_full(complex_draw(rng, L))
        st_, psi = init_cdw(L), fock_from_orbitals(init_cdw(L))
        for _ in range(5):
            st_ = evolve(st_, H, 0.07, 15)
            psi = fock_oracle_evolve(H, psi, 0.07, 15)
            C = correlation_from_orbitals(st_)
            for l in range(1, L):
                assert entropy_from_correlation(C, range(l)) == pytest.approx(fock_entropy(psi, l), abs=1e-8)


# ---------------------------------------------------------------- steady state


def test_projection_ambiguous_for_hermitian():
    H = build_full(ModelParams(1.0, 1.0, 2.0, 8))
    with pytest.raises(AmbiguousSteadyStateError):
        steady_state_projection(H, 4)


def test_projection_matches_fock_steady_state():
    rng = np.random.default_rng(7)
    H = build_full(complex_draw(rng, 6))
    assert imaginary_gap(H, 3) > 1e-6
    ss = steady_state_projection(H, 3)
    fs = fock_steady_state(H, 3)
    C = correlation_from_orbitals(ss)
    for l in range(1, 6):
        assert entropy_from_correlation(C, range(l)) == pytest.approx(fock_entropy(fs, l), abs=1e-8)


def test_projection_is_an_evolution_fixed_point():
    rng = np.random.default_rng(11)
    H = build_full(complex_draw(rng, 10))
    ss = steady_state_projection(H, 5)
    nxt = evolve(ss, H, 0.3, 10)
    np.testing.assert_allclose(correlation_from_orbitals(nxt), correlation_from_orbitals(ss), atol=1e-9)


def test_evolve_to_steady_dt_refinement():
    rng = np.random.default_rng(5)
    p = complex_draw(rng, 8)
    H = build_full(p)
    assert imaginary_gap(H, 4) > 0.1
    dt = default_dt(H)
    cut = range(4)
    a, ok_a = evolve_to_steady(init_cdw(8), H, dt=dt)
    b, ok_b = evolve_to_steady(init_cdw(8), H, dt=dt / 2)
    assert ok_a and ok_b
    Sa = entropy_from_correlation(correlation_from_orbitals(a), cut)
    Sb = entropy_from_correlation(correlation_from_orbitals(b), cut)
    assert abs(Sa - Sb) <= 1e-6


def test_evolve_to_steady_gives_up_on_oscillation():
    H = build_full(ModelParams(1.0, 1.0, 1.0, 6))
    _, ok = evolve_to_steady(init_cdw(6), H, dt=0.2, max_steps=300)
    assert not ok


def test_ensemble_exact_branch_equals_projection():
    rng = np.random.default_rng(2)
    H = build_full(complex_draw(rng, 12))
    ens = steady_ensemble(H, init_cdw(12))
    assert ens.exact and len(ens.samples) == 1
    C1 = correlation_from_orbitals(ens.samples[0])
    C2 = correlation_from_orbitals(steady_state_projection(H, 6))
    np.testing.assert_allclose(C1, C2, atol=1e-9)


def test_ensemble_is_time_average_for_real_couplings():
    # degenerate top level: compare with a brute-force time average
    L = 8
    H = build_full(ModelParams.from_g(0.3, 3.0, L))
    ens = steady_ensemble(H, init_cdw(L), n_samples=4096, seed=1)
    assert not ens.exact and ens.n_degenerate >= 2
    S_ens = np.mean([entropy_from_correlation(correlation_from_orbitals(s), range(L // 2)) for s in ens.samples])
    st_ = evolve(init_cdw(L), H, 0.5, 400)
    U = propagator(H, 0.37)
    vals = []
    for _ in range(6000):
        st_ = evolve(st_, H, 0.37, 1, U=U)
        vals.append(entropy_from_correlation(correlation_from_orbitals(st_), range(L // 2)))
    assert S_ens == pytest.approx(np.mean(vals), abs=0.03)


def test_ensemble_samples_are_reachable_states():
    # every sample keeps the conserved structure: pure, N particles
    H = build_full(ModelParams.from_g(0.3, NEAREST_NEIGHBOR, 40))
    ens = steady_ensemble(H, init_cdw(40), n_samples=8)
    for s in ens.samples:
        C = correlation_from_orbitals(s)
        np.testing.assert_allclose(C @ C, C, atol=1e-9)
        assert np.trace(C).real == pytest.approx(20)


def test_correlation_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    st_ = slater_state(rng.normal(size=(6, 3)) + 1j * rng.normal(size=(6, 3)))
    C = correlation_from_orbitals(st_)
    path = tmp_path / "c.csv"
    dump_correlation_csv(C, path)
    np.testing.assert_array_equal(load_correlation_csv(path), C)
    assert '"' in path.read_text().splitlines()[0]
