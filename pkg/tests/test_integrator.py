import numpy as np
import pytest

from ubmstates.analytics import haar_moment, moment_curve
from ubmstates.hermitian_bm import RngStream, sample_increments
from ubmstates.integrator import (
    IntegratorConfig,
    _apply_expi_batch,
    _plan_steps,
    coupled_step_states,
    evolve,
    evolve_path,
    sample_ensemble,
    sample_ensemble_path,
    sample_haar_ensemble_path,
    sample_haar_state,
    sample_unitaries,
    step,
)
from ubmstates.linalg import expi, unitarity_defect


def basis_state(N):
    psi = np.zeros(N, complex)
    psi[0] = 1.0
    return psi


class TestConfig:
    def test_defaults(self):
        cfg = IntegratorConfig()
        assert cfg.step_size == 0.005
        assert cfg.reunit_interval == 100
        assert cfg.reunit_threshold == 1e-10

    def test_guards(self):
        with pytest.raises(ValueError):
            IntegratorConfig(step_size=0.06)
        with pytest.raises(ValueError):
            IntegratorConfig(step_size=0.0)
        with pytest.raises(ValueError):
            IntegratorConfig(reunit_interval=0)
        with pytest.raises(ValueError):
            IntegratorConfig(carry="both")


class TestPlanSteps:
    def test_exact_multiple(self):
        dts, snaps = _plan_steps([1.0], 0.005)
        assert len(dts) == 200
        assert snaps == [199]
        assert abs(dts.sum() - 1.0) < 1e-12
        assert dts.max() <= 0.005 + 1e-15

    def test_shortened_last_step(self):
        dts, snaps = _plan_steps([0.012], 0.005)
        assert len(dts) == 3
        assert dts[2] == pytest.approx(0.002, abs=1e-15)
        assert abs(dts.sum() - 0.012) < 1e-15

    def test_grid_and_zero(self):
        dts, snaps = _plan_steps([0.0, 0.01, 0.02], 0.005)
        assert snaps == [-1, 1, 3]
        assert abs(dts.sum() - 0.02) < 1e-15

    def test_small_time(self):
        dts, _ = _plan_steps([1e-4], 0.005)
        assert len(dts) == 1 and dts[0] == pytest.approx(1e-4)


class TestBatchedExponential:
    def test_matches_expi(self):
        H = sample_increments(4, 0.02, RngStream(3, 0), 50)
        psi = np.tile(basis_state(4), (50, 1))
        got = _apply_expi_batch(H, psi)
        want = np.stack([expi(h) @ basis_state(4) for h in H])
        assert np.max(np.abs(got - want)) < 1e-13

    def test_matrix_apply_matches_expi(self):
        H = sample_increments(3, 0.03, RngStream(4, 1), 20)
        U0 = np.broadcast_to(np.eye(3, dtype=complex), (20, 3, 3)).copy()
        got = _apply_expi_batch(H, U0)
        want = np.stack([expi(h) for h in H])
        assert np.max(np.abs(got - want)) < 1e-13

    def test_large_norm_falls_back_to_eigh(self):
        H = sample_increments(4, 0.02, RngStream(5, 0), 8)
        H *= 10.0 / np.sqrt((np.abs(H) ** 2).sum(axis=(1, 2)))[:, None, None]
        U0 = np.broadcast_to(np.eye(4, dtype=complex), (8, 4, 4)).copy()
        got = _apply_expi_batch(H, U0)
        want = np.stack([expi(h) for h in H])
        assert np.max(np.abs(got - want)) < 1e-12
        psi = np.tile(basis_state(4), (8, 1))
        got_v = _apply_expi_batch(H, psi)
        assert np.max(np.abs(got_v - want[:, :, 0])) < 1e-12


class TestStep:
    def test_tiny_dt_is_identity(self):
        U = expi(sample_increments(3, 0.5, RngStream(1, 0), 1)[0])
        U2 = step(U, 1e-12, RngStream(2, 0))
        assert np.max(np.abs(U2 - U)) < 1e-5

    def test_unitarity(self):
        U = np.eye(4, dtype=complex)
        for k in range(5):
            U = step(U, 0.05, RngStream(6, k))
            assert unitarity_defect(U) < 1e-13

    def test_one_step_mean_drift(self):
        # oracle: Ito drift expansion E[exp(i dH)] = (1 - dt/2) I + O(dt^2)
        N, dt, M = 2, 0.01, 1_000_000
        H = sample_increments(N, dt, RngStream(8, 0), M)
        E = _apply_expi_batch(H, np.broadcast_to(np.eye(N, dtype=complex), (M, N, N)).copy())
        target = (1 - dt / 2) * np.eye(N)
        for part in (np.real, np.imag):
            vals = part(E)
            mean = vals.mean(axis=0)
            se = vals.std(axis=0, ddof=1) / np.sqrt(M)
            tgt = part(target)
            # dt^2 scheme terms are ~1e-5, well under 5 SE ~ 3.5e-4
            assert np.all(np.abs(mean - tgt) <= 5 * se + 1e-5)


class TestEvolve:
    def test_time_zero(self):
        psi = basis_state(4)
        out = evolve(psi, 0.0, IntegratorConfig(), RngStream(1, 0))
        assert np.array_equal(out, psi)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            evolve(basis_state(2), -1.0, IntegratorConfig(), RngStream(1, 0))

    def test_norm_preserved(self):
        cfg = IntegratorConfig()
        out = evolve(basis_state(4), 2.0, cfg, RngStream(9, 0))
        assert abs(np.linalg.norm(out) - 1.0) < 1e-10

    def test_non_unit_initial_rejected(self):
        with pytest.raises(ValueError):
            evolve(np.array([1.0, 1.0], complex), 1.0, IntegratorConfig(), RngStream(0, 0))

    def test_path_prefix_consistency(self):
        cfg = IntegratorConfig()
        psi = basis_state(4)
        direct = evolve_path(psi, [1.0], cfg, RngStream(12, 5)).states[0]
        via_grid = evolve_path(psi, [0.5, 1.0], cfg, RngStream(12, 5)).states[1]
        assert np.max(np.abs(direct - via_grid)) < 1e-12

    def test_mean_first_coordinate(self):
        # oracle: the closed-form first moment, MC at 5 SE + step-bias slack
        N, t, M = 4, 1.0, 10_000
        cfg = IntegratorConfig()
        ens = sample_ensemble(basis_state(N), t, M, cfg, master_seed=77)
        x = np.abs(ens.states[:, 0]) ** 2
        target = moment_curve(N, 1.0, 1)(t)  # = 0.52591 at N=4, t=1
        se = x.std(ddof=1) / np.sqrt(M)
        assert abs(x.mean() - target) <= 5 * se + 2 * cfg.step_size


class TestEnsembles:
    def test_single_sample_reduces_to_evolve(self):
        cfg = IntegratorConfig()
        psi = basis_state(3)
        ens = sample_ensemble(psi, 0.5, 1, cfg, master_seed=21)
        single = evolve(psi, 0.5, cfg, RngStream(21, 0))
        assert np.array_equal(ens.states[0], single)

    def test_determinism_and_stream_independence(self):
        cfg = IntegratorConfig()
        psi = basis_state(3)
        a = sample_ensemble(psi, 0.3, 8, cfg, master_seed=5)
        b = sample_ensemble(psi, 0.3, 8, cfg, master_seed=5)
        assert np.array_equal(a.states, b.states)
        # sample k depends only on (master_seed, k), not on M
        c = sample_ensemble(psi, 0.3, 3, cfg, master_seed=5)
        assert np.array_equal(a.states[:3], c.states)

    def test_jobs_and_chunking_do_not_change_results(self):
        cfg = IntegratorConfig()
        psi = basis_state(4)
        a = sample_ensemble_path(psi, [0.2, 0.4], 300, cfg, 13, n_jobs=1)
        b = sample_ensemble_path(psi, [0.2, 0.4], 300, cfg, 13, n_jobs=2)
        for x, y in zip(a, b):
            assert np.array_equal(x.states, y.states)

    def test_carry_modes_agree_pathwise(self):
        psi = basis_state(4)
        v = sample_ensemble(psi, 0.5, 100, IntegratorConfig(carry="vector"), 31)
        m = sample_ensemble(psi, 0.5, 100, IntegratorConfig(carry="matrix"), 31)
        assert np.max(np.abs(v.states - m.states)) < 1e-12
        assert m.max_unitarity_defect < 1e-12
        assert v.max_norm_defect < 1e-12
        assert m.reunit_count == 0

    def test_diagnostics_over_long_run(self):
        m = sample_ensemble(basis_state(4), 5.0, 50, IntegratorConfig(carry="matrix"), 41)
        assert m.max_unitarity_defect < 1e-10
        assert m.reunit_count == 0

    def test_unitarity_holds_to_t_100(self):
        # 20000 default-size steps; the guard interval checks every 100
        m = sample_ensemble(basis_state(4), 100.0, 3, IntegratorConfig(carry="matrix"), 43)
        assert m.max_unitarity_defect < 1e-10
        assert m.reunit_count == 0

    def test_haar_initial_states(self):
        samples = sample_haar_ensemble_path(4, [0.0], 500, IntegratorConfig(), 17)[0]
        norms = np.linalg.norm(samples.states, axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-12
        # distinct initials per trajectory
        assert not np.allclose(samples.states[0], samples.states[1])


class TestSampleUnitaries:
    def test_unitary_and_consistent_with_states(self):
        cfg = IntegratorConfig()
        U, max_defect, reunits = sample_unitaries(4, 0.5, 40, cfg, master_seed=31)
        assert max_defect < 1e-12
        assert reunits == 0
        defects = [unitarity_defect(u) for u in U]
        assert max(defects) < 1e-12
        # first column = evolved e_1 with the same streams
        ens = sample_ensemble(basis_state(4), 0.5, 40, cfg, master_seed=31)
        assert np.max(np.abs(U[:, :, 0] - ens.states)) < 1e-12


class TestHaarSampler:
    def test_unit_norm(self):
        psi = sample_haar_state(5, RngStream(2, 0))
        assert abs(np.linalg.norm(psi) - 1.0) < 1e-14

    def test_moments(self):
        # E|psi_j|^2 = 1/N by symmetry; E|psi_j|^4 = 2/(N(N+1))
        N, M = 4, 100_000
        rng = RngStream(99, 0)
        probs = np.empty((M, N))
        for i in range(M):
            probs[i] = np.abs(sample_haar_state(N, rng)) ** 2
        for j in range(N):
            x = probs[:, j]
            se = x.std(ddof=1) / np.sqrt(M)
            assert abs(x.mean() - 1 / N) < 5 * se
            x2 = x**2
            se2 = x2.std(ddof=1) / np.sqrt(M)
            assert abs(x2.mean() - haar_moment(N, 2)) < 5 * se2


class TestCoupledStates:
    def test_level_one_matches_plain_ensemble(self):
        cfg = IntegratorConfig()
        psi = basis_state(4)
        out = coupled_step_states(psi, 0.5, 50, cfg, master_seed=61, levels=(1, 2))
        plain = sample_ensemble(psi, 0.5, 50, cfg, master_seed=61)
        assert np.max(np.abs(out[1] - plain.states)) < 1e-12
        assert out[2].shape == (50, 4)
        norms = np.linalg.norm(out[2], axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-10

    def test_coarse_level_stays_close(self):
        # coupled fine/coarse paths differ by O(sqrt(h)) pathwise
        cfg = IntegratorConfig(step_size=0.005)
        psi = basis_state(4)
        out = coupled_step_states(psi, 1.0, 100, cfg, master_seed=62, levels=(1, 2))
        gap = np.abs(np.abs(out[1][:, 0]) ** 2 - np.abs(out[2][:, 0]) ** 2)
        assert gap.mean() < 0.05

    def test_validation(self):
        cfg = IntegratorConfig(step_size=0.005)
        with pytest.raises(ValueError):
            coupled_step_states(basis_state(2), 0.0101, 5, cfg, 1, levels=(1, 2))
        with pytest.raises(ValueError):
            coupled_step_states(basis_state(2), 0.015, 5, cfg, 1, levels=(1, 2))
