"""Acceptance criteria 1-10.

Each test records one ``PASS``/``FAIL`` line (printed in the terminal
summary) and then asserts. Run alone with ``pytest tests/test_acceptance.py``
or ``python3 tests/test_acceptance.py``.
"""

import math
import sys
from dataclasses import replace

import numpy as np
import pytest

from skinlab.dynamics import (
    correlation_from_orbitals,
    evolve,
    evolve_to_steady,
    fock_entropy,
    fock_from_orbitals,
    fock_oracle_evolve,
    fock_steady_state,
    imaginary_gap,
    init_cdw,
    steady_state_projection,
)
from skinlab.entanglement import (
    cft_fit,
    crossover_size,
    entropy_from_correlation,
    halfchain_entropy_vs_size,
    log_slope,
    steady_entropy_curve,
)
from skinlab.localization import collapse_fit, fit_localization_length, localization_vs_size
from skinlab.model import NEAREST_NEIGHBOR, ModelParams, build_full
from skinlab.spectral import (
    analytic_alpha0_modes,
    conjugate_unpaired,
    eig_dense,
    predict_critical_length,
    residuals,
    scan_critical_length,
)
from skinlab.sweeps import PRESETS, figure_preset, records_to_csv, run_sweep
from conftest import ACCEPTANCE, complex_draw, match_multisets, real_draw


def report(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


def test_criterion_01_scale_free_localization():
    worst_xi, worst_res, worst_eig = 0.0, 0.0, 0.0
    for L in range(10, 61):
        p = ModelParams.from_g(0.25, 0.0, L)
        H = build_full(p)
        dense = eig_dense(H, gauge="auto")
        xi = np.array([fit_localization_length(dense.right_eigenvectors[:, k]).xi for k in range(L)])
        worst_xi = max(worst_xi, np.abs(xi / (2 * L) - 1).max())
        exact = analytic_alpha0_modes(p)
        worst_res = max(worst_res, residuals(H, exact).max())
        worst_eig = max(worst_eig, match_multisets(exact.eigenvalues, dense.eigenvalues))
    ok = worst_xi <= 0.02 and worst_res <= 1e-7 and worst_eig <= 1e-7
    report(1, ok, f"max |xi/2L - 1| = {worst_xi:.2e}, analytic residual {worst_res:.1e}, "
                  f"eigenvalue mismatch {worst_eig:.1e} (L = 10..60)")


def test_criterion_02_nhse_baseline():
    worst_im, worst_xi = 0.0, 0.0
    for L in range(20, 101):
        spec = eig_dense(build_full(ModelParams.from_g(0.25, NEAREST_NEIGHBOR, L)), gauge="auto")
        worst_im = max(worst_im, np.abs(spec.eigenvalues.imag).max())
        xi = np.array([fit_localization_length(spec.right_eigenvectors[:, k]).xi for k in range(L)])
        worst_xi = max(worst_xi, np.abs(xi / 4 - 1).max())
    report(2, worst_im <= 1e-8 and worst_xi <= 0.05,
           f"max |Im E| = {worst_im:.1e}, max |xi/4 - 1| = {worst_xi:.1e} (L = 20..100)")


def test_criterion_03_critical_length():
    g = 0.25
    parts, ok = [], True
    for ratio in (4, 6, 8, 10, 12):
        alpha = ratio * g
        det = scan_critical_length(ModelParams.from_g(g, alpha, 2), range(2, 201)).L_c_detected
        pred = predict_critical_length(alpha, g)
        good = det is not None and abs(det - pred) <= 0.25 * pred
        ok &= good
        parts.append(f"{ratio}:{det}/{pred:.1f}")
    report(3, ok, "alpha/g: detected/predicted " + ", ".join(parts))


def test_criterion_04_collapse_slope():
    t = ModelParams.from_g(0.25, 2.0, 4)
    sizes = range(4, 201)
    parts, ok = [], True
    for frac in (0.2, 0.4, 0.6, 0.8):
        L_c = scan_critical_length(t, sizes, mode_fraction=frac).L_c_detected
        res = collapse_fit(localization_vs_size(t, frac, sizes), L_c, alpha=2.0)
        ok &= abs(res.slope - 2.0) <= 0.15 * 2.0
        parts.append(f"{frac}: L_c={L_c} slope={res.slope:.3f}")
    report(4, ok, "; ".join(parts))


def test_criterion_05_conjugation_pairing():
    rng = np.random.default_rng(2024)
    bad = 0
    n_complex = 0
    for _ in range(100):
        p = real_draw(rng, int(rng.integers(2, 61)))
        spec = eig_dense(build_full(p), gauge="auto")
        n_complex += int(spec.is_complex.sum())
        bad += len(conjugate_unpaired(spec.eigenvalues, 1e-8))
    report(5, bad == 0, f"{bad} unpaired of {n_complex} complex eigenvalues over 100 real-coupling draws")


def test_criterion_06_fock_oracle():
    worst_traj, worst_ss = 0.0, 0.0
    for L in (4, 6, 8):
        rng = np.random.default_rng(600 + L)
        N = L // 2
        for _ in range(5):
            H = build_full(complex_draw(rng, L))
            st, psi = init_cdw(L), fock_from_orbitals(init_cdw(L))
            for _ in range(10):
                st = evolve(st, H, 0.1, 20)
                psi = fock_oracle_evolve(H, psi, 0.1, 20)
                C = correlation_from_orbitals(st)
                for l in range(1, L):
                    worst_traj = max(worst_traj, abs(entropy_from_correlation(C, range(l)) - fock_entropy(psi, l)))
            C = correlation_from_orbitals(steady_state_projection(H, N))
            fs = fock_steady_state(H, N)
            for l in range(1, L):
                worst_ss = max(worst_ss, abs(entropy_from_correlation(C, range(l)) - fock_entropy(fs, l)))
    report(6, worst_traj <= 1e-6 and worst_ss <= 1e-6,
           f"max entropy deviation: trajectory {worst_traj:.1e}, steady state {worst_ss:.1e}")


def test_criterion_07_central_charge():
    fits = {}
    for g in (0.3, 0.6, 1.2):
        curves = [steady_entropy_curve(build_full(ModelParams.from_g(g, 0.0, L)), n_samples=64)
                  for L in (20, 40, 60, 80, 100)]
        fits[g] = cft_fit(curves)
    ok = all(abs(f.c - 2.0) <= 0.2 for f in fits.values())
    s0 = [fits[g].s0 for g in (0.3, 0.6, 1.2)]
    mono = "decreasing" if s0[0] > s0[1] > s0[2] else ("increasing" if s0[0] < s0[1] < s0[2] else "not monotone")
    report(7, ok, ", ".join(f"g={g}: c={f.c:.3f} s0={f.s0:.3f}" for g, f in fits.items())
           + f" (s0 {mono} in g)")


def test_criterion_08_entanglement_crossover():
    sizes = range(4, 201, 2)
    t3 = ModelParams.from_g(0.3, 3.0, 4)
    Lx = crossover_size(t3, sizes)
    # well below: [Lx/2, 0.8 Lx]; well above: [1.5 Lx, 200]; even sizes only
    below = [L for L in sizes if Lx / 2 <= L <= 0.8 * Lx]
    above = [L for L in sizes if L >= 1.5 * Lx][::6]
    slope_below = log_slope(halfchain_entropy_vs_size(t3, below, n_samples=8192))
    slope_above = log_slope(halfchain_entropy_vs_size(t3, above, n_samples=256))
    xs = {a: crossover_size(ModelParams.from_g(a / 10, a, 4), sizes) for a in (2.0, 3.0, 4.0)}
    spread = (max(xs.values()) - min(xs.values())) / np.mean(list(xs.values()))
    flat, grows, agree = slope_below < 0.05, slope_above > 0.2, spread <= 0.2
    report(8, flat and grows and agree,
           f"crossover L={Lx}; slope below {slope_below:.3f} ({'ok' if flat else 'NOT flat'}, "
           f"L={below[0]}..{below[-1]}), slope above {slope_above:.3f} ({'ok' if grows else 'too small'}), "
           f"crossover sizes {xs} spread {spread:.2f}")


def test_criterion_09_steady_paths():
    worst, n = 0.0, 0
    for L in (6, 10, 14, 20):
        rng = np.random.default_rng(900 + L)
        for _ in range(5):
            H = build_full(complex_draw(rng, L))
            if imaginary_gap(H, L // 2) <= 1e-10:
                continue
            n += 1
            proj = steady_state_projection(H, L // 2)
            evo, converged = evolve_to_steady(init_cdw(L), H, dt=0.5)
            assert converged
            cut = range(L // 2)
            a = entropy_from_correlation(correlation_from_orbitals(proj), cut)
            b = entropy_from_correlation(correlation_from_orbitals(evo), cut)
            worst = max(worst, abs(a - b))
    report(9, worst <= 1e-4 and n > 0, f"max |S_proj - S_evolved| = {worst:.1e} over {n} gapped draws")


def test_criterion_10_determinism():
    same = {}
    for name in PRESETS:
        cfg = figure_preset(name)
        first = records_to_csv(run_sweep(cfg), cfg.task)
        second = records_to_csv(run_sweep(replace(cfg, workers=4)), cfg.task)
        same[name] = first == second
    report(10, all(same.values()),
           "byte-identical reruns (1 vs 4 workers): " + ", ".join(f"{k}={'yes' if v else 'NO'}" for k, v in same.items()))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
