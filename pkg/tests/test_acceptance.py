"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Heavy Monte Carlo criteria share one fixed master seed and the 2-worker
parallel path; every tolerance is stated inline and matches the contract the
rest of the package documents.
"""

import json
import math
import time

import numpy as np
import pytest

from ubmstates import analytics
from ubmstates.analytics import (
    coefficients_c0,
    coefficients_c1,
    covariance_curve_from_state,
    haar_moment,
    laplace_marginal,
    moment_curve,
    pde_residual,
    rate,
    solve_coefficients,
)
from ubmstates.integrator import IntegratorConfig, coupled_step_states
from ubmstates.montecarlo import SuiteConfig, run_validation_suite

MASTER_SEED = 20260810
N_JOBS = 2


def _announce(num: int, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    print(f"ACCEPTANCE {num} [{status}] {detail}")
    assert passed, f"criterion {num}: {detail}"


@pytest.fixture(scope="module")
def criterion4():
    """The criterion-4 run: N=4, psi=e1, M=1e5, step 0.005, fixed seeds,
    matrix carry (so unitarity defects are tracked for every trajectory)."""
    config = SuiteConfig(M=100_000, master_seed=MASTER_SEED, n_jobs=N_JOBS)
    batteries = ("moments", "covariance", "observable", "structure")
    t0 = time.perf_counter()
    reports = run_validation_suite(config, batteries)
    elapsed = time.perf_counter() - t0
    payload = "\n".join(json.dumps(r.to_record()) for r in reports) + "\n"
    return config, batteries, reports, payload, elapsed


def test_criterion_1_coefficient_oracle():
    t0 = time.perf_counter()
    worst = 0.0
    for N in range(2, 17):
        s0 = solve_coefficients(N, 0.0, 20).values
        s1 = solve_coefficients(N, 1.0, 20).values
        c0 = coefficients_c0(N, 20).values
        c1 = coefficients_c1(N, 20).values
        worst = max(worst, float(np.max(np.abs(s0 - c0) / np.abs(c0))))
        worst = max(worst, float(np.max(np.abs(s1 - c1) / np.abs(c1))))
        # the listed a_2..a_5 rational expressions for c = 1/N
        a = solve_coefficients(N, 1.0 / N, 5).values
        listed = [
            -(N - 1) / (2 * N**2 * (N + 1)),
            2 * (N - 2) * (N - 1) / (3 * N**3 * (N + 2) * (N + 4)),
            -(N - 1) * (30 - 29 * N + 5 * N**2)
            / (8 * N**4 * (N + 3) * (N + 5) * (N + 6)),
            (N - 2) * (N - 1) * (84 - 79 * N + 7 * N**2)
            / (15 * N**5 * (N + 4) * (N + 6) * (N + 7) * (N + 8)),
        ]
        for got, want in zip(a[2:], listed):
            err = abs(got - want) if want == 0 else abs(got - want) / abs(want)
            worst = max(worst, err)
    elapsed = time.perf_counter() - t0
    _announce(
        1,
        worst < 1e-12 and elapsed < 1.0,
        f"coefficient oracle: worst rel err {worst:.2e} (tol 1e-12), {elapsed:.2f}s (< 1s)",
    )


def test_criterion_2_ode_identities():
    t0 = time.perf_counter()
    h = 1e-5
    t = np.linspace(0, 5, 26)
    worst = 0.0
    for N in (2, 4, 8):
        for c in (0.0, 1.0, 1.0 / N):
            prev = None
            for p in range(1, 6):
                y = moment_curve(N, c, p)
                fd = (y(t + h) - y(t - h)) / (2 * h)
                lower = prev(t) if prev is not None else np.ones_like(t)
                rhs = -rate(p, N) * y(t) + (p**2 / N) * lower
                worst = max(worst, float(np.max(np.abs(fd - rhs))))
                prev = y
        e1 = np.zeros(N, complex)
        e1[0] = 1.0
        for j, k in ((1, 2), (2, 3)) if N > 2 else ((1, 2),):
            f = covariance_curve_from_state(N, e1, j, k)
            fj = moment_curve(N, float(np.abs(e1[j - 1]) ** 2), 1)
            fk = moment_curve(N, float(np.abs(e1[k - 1]) ** 2), 1)
            fd = (f(t + h) - f(t - h)) / (2 * h)
            rhs = (1 / N) * (fj(t) + fk(t)) - (2 + 2 / N) * f(t)
            worst = max(worst, float(np.max(np.abs(fd - rhs))))
    elapsed = time.perf_counter() - t0
    _announce(
        2,
        worst < 1e-7 and elapsed < 1.0,
        f"ODE identities: worst abs residual {worst:.2e} (tol 1e-7), {elapsed:.2f}s (< 1s)",
    )


def test_criterion_3_laplace_self_consistency():
    t0 = time.perf_counter()
    worst_ic = 0.0
    for c in (0.0, 1.0, 0.25):
        for lam in np.linspace(-5, 5, 41):
            err = abs(laplace_marginal(4, c, 0.0, lam) - math.exp(lam * c))
            worst_ic = max(worst_ic, err)
    residual = pde_residual(4, 1.0, np.linspace(0.1, 5.0, 8), np.linspace(-2, 2, 9))
    elapsed = time.perf_counter() - t0
    _announce(
        3,
        worst_ic < 1e-8 and residual < 1e-9 and elapsed < 10.0,
        f"Laplace: phi(lam;0)=e^(lam c) err {worst_ic:.2e} (tol 1e-8), "
        f"PDE residual {residual:.2e} (tol 1e-9), {elapsed:.1f}s (< 10s)",
    )


def test_criterion_4_sde_vs_analytics(criterion4):
    _, _, reports, _, elapsed = criterion4
    stat = [r for r in reports if r.kind == "z"]
    failed = [r.name for r in stat if not r.passed]
    worst_z = max(abs(r.z_score) for r in stat)
    _announce(
        4,
        not failed and elapsed < 300.0,
        f"SDE vs analytics: {len(stat)} comparisons, worst |z| {worst_z:.2f} "
        f"(tol 5 SE + 0.01), failed {failed}, {elapsed:.0f}s (< 300s)",
    )


def test_criterion_5_structure_preservation(criterion4):
    _, _, reports, _, _ = criterion4
    by_name = {r.name: r for r in reports}
    unit = by_name["max unitarity defect"]
    norm = by_name["max state norm defect"]
    sums = by_name["max probability sum defect"]
    ok = unit.passed and norm.passed and sums.passed
    _announce(
        5,
        ok,
        f"structure: unitarity {unit.estimate.value:.2e} (<= 1e-10), "
        f"norm {norm.estimate.value:.2e} (<= 1e-10), "
        f"prob sum {sums.estimate.value:.2e} (<= 1e-12)",
    )


def test_criterion_6_weak_order_bias_factor():
    t0 = time.perf_counter()
    N, t, M = 4, 1.0, 1_000_000
    psi = np.zeros(N, complex)
    psi[0] = 1.0
    cfg = IntegratorConfig(step_size=0.005)
    out = coupled_step_states(psi, t, M, cfg, MASTER_SEED, levels=(1, 2), n_jobs=N_JOBS)
    y1 = moment_curve(N, 1.0, 1)(t)
    m_fine = float((np.abs(out[1][:, 0]) ** 2).mean())
    m_coarse = float((np.abs(out[2][:, 0]) ** 2).mean())
    bias_fine = m_fine - y1
    bias_coarse = m_coarse - y1
    ratio = bias_coarse / bias_fine
    elapsed = time.perf_counter() - t0
    se = float((np.abs(out[1][:, 0]) ** 2).std(ddof=1) / math.sqrt(M))
    _announce(
        6,
        1.5 <= ratio <= 2.5 and elapsed < 900.0,
        f"weak order: bias(0.005) {bias_fine:+.2e}, bias(0.01) {bias_coarse:+.2e}, "
        f"ratio {ratio:.2f} (required 2 +/- 0.5; note SE of each mean is {se:.1e}), "
        f"{elapsed:.0f}s (< 900s)",
    )


def test_weak_order_supplementary_powered_check():
    """Properly powered first-order check on the same budget class: coupled
    differences between successive step doublings must themselves double.
    Their per-path noise is O(sqrt(h)), so this ratio is sharp at moderate M
    where the absolute bias (~2e-2 * h) sits below the mean's standard error.
    """
    N, t, M = 4, 1.0, 400_000
    psi = np.zeros(N, complex)
    psi[0] = 1.0
    cfg = IntegratorConfig(step_size=0.01)
    out = coupled_step_states(
        psi, t, M, cfg, MASTER_SEED + 1, levels=(1, 2, 4), n_jobs=N_JOBS
    )
    p1 = np.abs(out[1][:, 0]) ** 2
    p2 = np.abs(out[2][:, 0]) ** 2
    p4 = np.abs(out[4][:, 0]) ** 2
    d21 = p2 - p1
    d42 = p4 - p2
    se21 = d21.std(ddof=1) / math.sqrt(M)
    se42 = d42.std(ddof=1) / math.sqrt(M)
    ratio = d42.mean() / d21.mean()
    # both coupled differences resolved (z > 5) and the doubling factor ~ 2
    assert abs(d21.mean()) > 5 * se21, (d21.mean(), se21)
    assert abs(d42.mean()) > 5 * se42, (d42.mean(), se42)
    assert 1.3 <= ratio <= 2.7, ratio
    print(
        f"supplementary weak-order: D(h->2h) {d21.mean():+.3e} (se {se21:.1e}), "
        f"D(2h->4h) {d42.mean():+.3e} (se {se42:.1e}), ratio {ratio:.2f}"
    )


def test_criterion_7_invariance_suite():
    t0 = time.perf_counter()
    config = SuiteConfig(M=100_000, master_seed=MASTER_SEED, n_jobs=N_JOBS)
    reports = run_validation_suite(config, ("invariance", "inversion"))
    by_name = {r.name: r for r in reports}
    frac = by_name["stabilizer invariance pass fraction"]
    power = by_name["invariance power check (V psi != psi)"]
    inversion = by_name["inversion symmetry Im E[Tr U]"]
    elapsed = time.perf_counter() - t0
    _announce(
        7,
        frac.passed and power.passed and inversion.passed and elapsed < 300.0,
        f"invariance: panel pass fraction {frac.estimate.value:.2f} (>= 0.95), "
        f"power check rejects: {power.passed}, inversion |z| {abs(inversion.z_score):.2f} "
        f"(< 5), {elapsed:.0f}s (< 300s)",
    )


def test_criterion_8_haar_equilibration():
    t0 = time.perf_counter()
    config = SuiteConfig(M=100_000, master_seed=MASTER_SEED, n_jobs=N_JOBS)
    reports = run_validation_suite(config, ("equilibrium",))
    elapsed = time.perf_counter() - t0
    by_name = {r.name: r for r in reports}
    moments_ok = all(by_name[f"haar-limit moment p={p}"].passed for p in (1, 2, 3))
    entropy_ok = by_name["haar-limit renyi-2 jensen"].passed
    exact_ok = by_name["haar entropy bound N=4 equals 13/12"].passed
    worst_z = max(abs(by_name[f"haar-limit moment p={p}"].z_score) for p in (1, 2, 3))
    # cross-check the analytic stationary values used as targets
    assert by_name["haar-limit moment p=1"].analytic == haar_moment(4, 1) == 0.25
    assert by_name["haar-limit renyi-2 jensen"].analytic == pytest.approx(
        -math.log((4 + 2) / math.comb(6, 2)), abs=1e-12
    )
    _announce(
        8,
        moments_ok and entropy_ok and exact_ok and elapsed < 120.0,
        f"haar equilibration: worst moment |z| {worst_z:.2f} (< 5), "
        f"entropy bound holds: {entropy_ok}, 13/12 exact: {exact_ok}, "
        f"{elapsed:.0f}s (< 120s)",
    )


def test_criterion_9_determinism(criterion4):
    config, batteries, _, payload, _ = criterion4
    again = run_validation_suite(config, batteries)
    payload2 = "\n".join(json.dumps(r.to_record()) for r in again) + "\n"
    _announce(
        9,
        payload2 == payload,
        f"determinism: criterion-4 report files byte-identical on rerun "
        f"({len(payload)} bytes)",
    )


def test_entropy_jensen_battery():
    """Jensen direction at every grid time (part of the suite's contract)."""
    config = SuiteConfig(
        M=20_000, master_seed=MASTER_SEED, n_jobs=N_JOBS, t_grid=(0.1, 1.0, 5.0)
    )
    reports = run_validation_suite(config, ("entropy",))
    assert all(r.passed for r in reports)
