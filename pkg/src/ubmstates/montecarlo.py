"""Monte Carlo estimators, two-sample tests and the validation suite that
cross-checks the simulated ensembles against the closed-form statistics.

Estimators are plain sample means with unbiased standard errors; no variance
reduction is applied, so the Monte Carlo side stays an independent oracle for
the analytics it validates.  Analytic-vs-MC comparisons use a z threshold of
5 (the suite makes ~40 comparisons; 5 sigma keeps the family-wise false-alarm
rate negligible) plus an absolute slack of twice the step size for the
weak-order step bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import analytics
from .hermitian_bm import RngStream, sample_increment
from .integrator import (
    EnsembleSample,
    IntegratorConfig,
    sample_ensemble,
    sample_ensemble_path,
    sample_haar_state,
    sample_unitaries,
)


@dataclass(frozen=True)
class Estimate:
    """Sample mean with its standard error."""

    value: float
    std_error: float
    n_samples: int


def _mean_se(x: np.ndarray) -> Estimate:
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n == 0:
        raise ValueError("cannot estimate from an empty sample")
    se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(value=float(np.mean(x)), std_error=se, n_samples=n)


def estimate_moment(ensemble: EnsembleSample, j: int, p: int) -> Estimate:
    """Mean and SE of |psi^j|^(2p) over the ensemble (j is 1-based)."""
    if not 1 <= j <= ensemble.N:
        raise ValueError("coordinate index out of range")
    if p < 1:
        raise ValueError("p must be >= 1")
    return _mean_se(ensemble.probabilities()[:, j - 1] ** p)


def estimate_covariance(ensemble: EnsembleSample, j: int, k: int) -> Estimate:
    """Mean and SE of |psi^j|^2 |psi^k|^2, j != k (1-based)."""
    if j == k:
        raise ValueError("j and k must differ; use estimate_moment for j == k")
    probs = ensemble.probabilities()
    return _mean_se(probs[:, j - 1] * probs[:, k - 1])


def estimate_observable(ensemble: EnsembleSample, A: np.ndarray) -> Estimate:
    """Mean and SE of <psi, A psi> over the ensemble, for Hermitian A."""
    A = np.asarray(A, dtype=complex)
    if A.shape != (ensemble.N, ensemble.N):
        raise ValueError("observable dimension does not match the ensemble")
    vals = np.real(np.einsum("mi,ij,mj->m", ensemble.states.conj(), A, ensemble.states))
    return _mean_se(vals)


def estimate_renyi(ensemble: EnsembleSample, p: int) -> Estimate:
    """Mean and SE of the per-sample Renyi-p entropy, p >= 2 integer."""
    if p < 2 or int(p) != p:
        raise ValueError("p must be an integer >= 2")
    probs = ensemble.probabilities()
    sums = (probs**p).sum(axis=1)
    if np.any(sums <= 0.0):
        raise ArithmeticError("sample with all-zero weights; unit-norm invariant broken")
    return _mean_se(np.log(sums) / (1 - p))


# ---------------------------------------------------------------------------
# two-sample Kolmogorov-Smirnov test
# ---------------------------------------------------------------------------

def ks_statistic(x: np.ndarray, y: np.ndarray) -> float:
    """Two-sample KS statistic: sup |F_x - F_y| over the pooled sample."""
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    if x.size == 0 or y.size == 0:
        raise ValueError("KS test needs non-empty samples")
    pooled = np.concatenate([x, y])
    cdf_x = np.searchsorted(x, pooled, side="right") / x.size
    cdf_y = np.searchsorted(y, pooled, side="right") / y.size
    return float(np.max(np.abs(cdf_x - cdf_y)))


def ks_critical_value(n: int, m: int, alpha: float = 0.01) -> float:
    """Asymptotic two-sided rejection threshold c(alpha) sqrt((n+m)/(nm))."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    return c * math.sqrt((n + m) / (n * m))


# ---------------------------------------------------------------------------
# validation reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    """One named comparison.  ``passed`` is a pure function of the recorded
    numbers; ``kind`` states the rule:

    - "z":           |value - analytic| <= threshold * std_error + slack
    - "upper-bound": value <= analytic
    - "lower-bound": value >= analytic - threshold * std_error
    - "ks":          value (the KS statistic) <= analytic (the critical value)
    - "ks-power":    value > analytic (the test is expected to reject)
    - "exact":       value == analytic
    """

    name: str
    kind: str
    analytic: float
    estimate: Estimate
    z_score: float
    threshold: float
    slack: float
    passed: bool
    config: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["estimate"] = asdict(self.estimate)
        return rec


def _z_and_pass(kind: str, analytic: float, est: Estimate, threshold: float, slack: float):
    diff = est.value - analytic
    z = diff / est.std_error if est.std_error > 0 else (0.0 if diff == 0 else math.inf)
    if kind == "z":
        passed = abs(diff) <= threshold * est.std_error + slack
    elif kind == "upper-bound":
        passed = est.value <= analytic
    elif kind == "lower-bound":
        passed = est.value >= analytic - threshold * est.std_error
    elif kind == "ks":
        passed = est.value <= analytic
    elif kind == "ks-power":
        passed = est.value > analytic
    elif kind == "exact":
        passed = est.value == analytic
    else:
        raise ValueError(f"unknown report kind {kind!r}")
    return z, passed


def make_report(
    name: str,
    kind: str,
    analytic: float,
    estimate: Estimate,
    threshold: float = 5.0,
    slack: float = 0.0,
    config: dict | None = None,
) -> ValidationReport:
    z, passed = _z_and_pass(kind, analytic, estimate, threshold, slack)
    return ValidationReport(
        name=name,
        kind=kind,
        analytic=float(analytic),
        estimate=estimate,
        z_score=float(z),
        threshold=float(threshold),
        slack=float(slack),
        passed=bool(passed),
        config=dict(config or {}),
    )


# ---------------------------------------------------------------------------
# invariance tests
# ---------------------------------------------------------------------------

def invariance_test(
    psi: np.ndarray,
    t: float,
    V: np.ndarray,
    panel: list[np.ndarray],
    M: int,
    cfg: IntegratorConfig,
    master_seed: int,
    alpha: float = 0.01,
    transported: bool = False,
    n_jobs: int | None = 1,
) -> list[ValidationReport]:
    """KS tests of the rotation property of the evolved ensembles.

    For each panel vector phi, compares |<phi, V psi_t>|^2 against
    |<phi, chi_t>|^2 where chi starts at psi (transported=False; the two
    laws agree iff V psi ~ psi) or at V psi (transported=True; the two laws
    always agree).  A report passes when the KS statistic stays below the
    level-alpha critical value.
    """
    if len(panel) == 0:
        raise ValueError("panel must contain at least one test vector")
    V = np.asarray(V, dtype=complex)
    ens_a = sample_ensemble(psi, t, M, cfg, master_seed, n_jobs=n_jobs)
    start_b = V @ np.asarray(psi, dtype=complex) if transported else psi
    ens_b = sample_ensemble(start_b, t, M, cfg, master_seed + 1, n_jobs=n_jobs)
    rotated = ens_a.states @ V.T  # row m becomes V @ states[m]
    crit = ks_critical_value(M, M, alpha)
    reports = []
    mode = "transported" if transported else "same-initial"
    for idx, phi in enumerate(panel):
        xa = np.abs(rotated @ np.conj(phi)) ** 2
        xb = np.abs(ens_b.states @ np.conj(phi)) ** 2
        d = ks_statistic(xa, xb)
        reports.append(
            make_report(
                name=f"invariance {mode} panel[{idx}]",
                kind="ks",
                analytic=crit,
                estimate=Estimate(value=d, std_error=0.0, n_samples=M),
                threshold=1.0,
                config={"t": t, "alpha": alpha, "M": M, "seed": master_seed},
            )
        )
    return reports


def stabilizer_unitary(N: int, seed: int) -> np.ndarray:
    """A unitary of the block form 1 (+) Q with Q Haar on the last N-1
    coordinates; it fixes the first basis vector."""
    gen = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))
    z = gen.standard_normal((2, N - 1, N - 1))
    G = z[0] + 1j * z[1]
    Q, R = np.linalg.qr(G)
    Q = Q * (np.diag(R) / np.abs(np.diag(R)))
    V = np.eye(N, dtype=complex)
    V[1:, 1:] = Q
    return V


def random_observable(N: int, seed: int) -> np.ndarray:
    """A fixed random Hermitian matrix, reproducible from the seed."""
    return sample_increment(N, 1.0, RngStream(seed, 0)).matrix


# ---------------------------------------------------------------------------
# the validation suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SuiteConfig:
    """Configuration of the full validation battery."""

    N: int = 4
    t_grid: tuple[float, ...] = (0.1, 0.5, 1.0, 2.0, 5.0)
    M: int = 100_000
    master_seed: int = 20260810
    step_size: float = 0.005
    z_threshold: float = 5.0
    alpha_ks: float = 0.01
    M_invariance: int = 10_000
    panel_size: int = 20
    t_invariance: float = 1.0
    t_power: float = 0.1
    M_unitary: int = 2_000
    t_inversion: float = 1.0
    t_equilibrium: float = 50.0
    equilibrium_step: float = 0.025
    M_equilibrium: int = 10_000
    n_jobs: int = 1

    def __post_init__(self):
        if self.M < 1 or self.M_invariance < 1 or self.M_unitary < 1 or self.M_equilibrium < 1:
            raise ValueError("sample counts must be positive")
        if len(self.t_grid) == 0:
            raise ValueError("t_grid must be non-empty")

    def echo(self, **extra) -> dict:
        base = {
            "N": self.N,
            "M": self.M,
            "seed": self.master_seed,
            "step_size": self.step_size,
            "threshold": self.z_threshold,
        }
        base.update(extra)
        return base


BATTERIES = (
    "moments",
    "covariance",
    "observable",
    "entropy",
    "structure",
    "invariance",
    "inversion",
    "equilibrium",
)


def _basis_state(N: int) -> np.ndarray:
    e1 = np.zeros(N, dtype=complex)
    e1[0] = 1.0
    return e1


def run_validation_suite(
    config: SuiteConfig, batteries: tuple[str, ...] | None = None
) -> list[ValidationReport]:
    """Run the requested validation batteries (all of them by default) and
    return the reports in a deterministic order.

    All randomness derives from config.master_seed through fixed offsets, so
    a given config reproduces byte-identical reports.
    """
    chosen = BATTERIES if batteries is None else tuple(batteries)
    unknown = [b for b in chosen if b not in BATTERIES]
    if unknown:
        raise ValueError(f"unknown batteries: {unknown}")
    cfg = IntegratorConfig(step_size=config.step_size, carry="matrix")
    N = config.N
    psi = _basis_state(N)
    slack = 2.0 * config.step_size
    thr = config.z_threshold
    reports: list[ValidationReport] = []

    needs_main = any(
        b in chosen for b in ("moments", "covariance", "observable", "entropy", "structure")
    )
    if needs_main:
        ensembles = sample_ensemble_path(
            psi, config.t_grid, config.M, cfg, config.master_seed, n_jobs=config.n_jobs
        )

    if "moments" in chosen:
        for j in (1, 2):
            for p in (1, 2, 3):
                curve = analytics.moment_e1_curves(N, p, j)
                for ens in ensembles:
                    reports.append(
                        make_report(
                            name=f"moment j={j} p={p} t={ens.t:g}",
                            kind="z",
                            analytic=curve(ens.t),
                            estimate=estimate_moment(ens, j, p),
                            threshold=thr,
                            slack=slack,
                            config=config.echo(t=ens.t),
                        )
                    )

    if "covariance" in chosen:
        for j, k in ((1, 2), (2, 3)):
            curve = analytics.covariance_curve_from_state(N, psi, j, k)
            for ens in ensembles:
                reports.append(
                    make_report(
                        name=f"covariance ({j},{k}) t={ens.t:g}",
                        kind="z",
                        analytic=curve(ens.t),
                        estimate=estimate_covariance(ens, j, k),
                        threshold=thr,
                        slack=slack,
                        config=config.echo(t=ens.t),
                    )
                )

    if "observable" in chosen:
        A = random_observable(N, config.master_seed + 900)
        for ens in ensembles:
            reports.append(
                make_report(
                    name=f"observable t={ens.t:g}",
                    kind="z",
                    analytic=analytics.observable_average(A, psi, ens.t),
                    estimate=estimate_observable(ens, A),
                    threshold=thr,
                    slack=slack,
                    config=config.echo(t=ens.t),
                )
            )

    if "entropy" in chosen:
        for ens in ensembles:
            reports.append(
                make_report(
                    name=f"renyi-2 jensen t={ens.t:g}",
                    kind="lower-bound",
                    analytic=analytics.entropy_bound(N, 2, ens.t),
                    estimate=estimate_renyi(ens, 2),
                    threshold=thr,
                    config=config.echo(t=ens.t),
                )
            )

    if "structure" in chosen:
        worst_unit = max(ens.max_unitarity_defect for ens in ensembles)
        reports.append(
            make_report(
                name="max unitarity defect",
                kind="upper-bound",
                analytic=1e-10,
                estimate=Estimate(worst_unit, 0.0, config.M),
                threshold=0.0,
                config=config.echo(),
            )
        )
        worst_norm = max(
            float(np.abs(np.linalg.norm(ens.states, axis=1) - 1.0).max())
            for ens in ensembles
        )
        reports.append(
            make_report(
                name="max state norm defect",
                kind="upper-bound",
                analytic=1e-10,
                estimate=Estimate(worst_norm, 0.0, config.M),
                threshold=0.0,
                config=config.echo(),
            )
        )
        worst_sum = max(
            float(np.abs(ens.probabilities().sum(axis=1) - 1.0).max())
            for ens in ensembles
        )
        reports.append(
            make_report(
                name="max probability sum defect",
                kind="upper-bound",
                analytic=1e-12,
                estimate=Estimate(worst_sum, 0.0, config.M),
                threshold=0.0,
                config=config.echo(),
            )
        )
        reports.append(
            make_report(
                name="reunitarization triggers",
                kind="upper-bound",
                analytic=0.0,
                estimate=Estimate(float(ensembles[0].reunit_count), 0.0, config.M),
                threshold=0.0,
                config=config.echo(),
            )
        )

    if "invariance" in chosen:
        panel = [
            sample_haar_state(N, RngStream(config.master_seed + 800, i))
            for i in range(config.panel_size)
        ]
        V = stabilizer_unitary(N, config.master_seed + 810)
        ks_reports = invariance_test(
            psi,
            config.t_invariance,
            V,
            panel,
            config.M_invariance,
            cfg,
            config.master_seed + 820,
            alpha=config.alpha_ks,
            n_jobs=config.n_jobs,
        )
        reports.extend(ks_reports)
        frac = sum(r.passed for r in ks_reports) / len(ks_reports)
        reports.append(
            make_report(
                name="stabilizer invariance pass fraction",
                kind="lower-bound",
                analytic=0.95,
                estimate=Estimate(frac, 0.0, len(ks_reports)),
                threshold=0.0,
                config=config.echo(t=config.t_invariance, alpha=config.alpha_ks),
            )
        )
        # power check: a rotation moving the initial state is detected at small t
        V_move = np.eye(N, dtype=complex)[[1, 0] + list(range(2, N))]
        power = invariance_test(
            psi,
            config.t_power,
            V_move,
            [psi],
            config.M_invariance,
            cfg,
            config.master_seed + 830,
            alpha=config.alpha_ks,
            n_jobs=config.n_jobs,
        )[0]
        reports.append(
            make_report(
                name="invariance power check (V psi != psi)",
                kind="ks-power",
                analytic=power.analytic,
                estimate=power.estimate,
                threshold=1.0,
                config=config.echo(t=config.t_power, alpha=config.alpha_ks),
            )
        )

    if "inversion" in chosen:
        U, _, _ = sample_unitaries(
            N, config.t_inversion, config.M_unitary, cfg, config.master_seed + 840,
            n_jobs=config.n_jobs,
        )
        traces = np.trace(U, axis1=1, axis2=2)
        # E Tr U = E Tr U* iff the mean trace is real
        reports.append(
            make_report(
                name="inversion symmetry Im E[Tr U]",
                kind="z",
                analytic=0.0,
                estimate=_mean_se(np.imag(traces)),
                threshold=thr,
                config=config.echo(t=config.t_inversion, M=config.M_unitary),
            )
        )

    if "equilibrium" in chosen:
        eq_cfg = IntegratorConfig(step_size=config.equilibrium_step, carry="matrix")
        ens_eq = sample_ensemble(
            psi,
            config.t_equilibrium,
            config.M_equilibrium,
            eq_cfg,
            config.master_seed + 850,
            n_jobs=config.n_jobs,
        )
        for p in (1, 2, 3):
            reports.append(
                make_report(
                    name=f"haar-limit moment p={p}",
                    kind="z",
                    analytic=analytics.haar_moment(N, p),
                    estimate=estimate_moment(ens_eq, 1, p),
                    threshold=thr,
                    config=config.echo(
                        t=config.t_equilibrium,
                        M=config.M_equilibrium,
                        step_size=config.equilibrium_step,
                    ),
                )
            )
        bound_inf = analytics.entropy_bound(N, 2, config.t_equilibrium)
        reports.append(
            make_report(
                name="haar-limit renyi-2 jensen",
                kind="lower-bound",
                analytic=bound_inf,
                estimate=estimate_renyi(ens_eq, 2),
                threshold=thr,
                config=config.echo(t=config.t_equilibrium, M=config.M_equilibrium),
            )
        )
        reports.append(
            make_report(
                name="haar entropy bound N=4 equals 13/12",
                kind="exact",
                analytic=13.0 / 12.0,
                estimate=Estimate(analytics.haar_entropy_bound(4), 0.0, 1),
                threshold=0.0,
                config=config.echo(),
            )
        )

    return reports
