"""Structure-preserving integrator for the unitary Brownian motion SDE
dU = i dH U - (1/2) U dt and samplers for the induced pure-state ensembles.

The scheme is multiplicative: each step left-multiplies by exp(i dH) with dH
a Hermitian Brownian increment.  The step is exactly unitary, and because
E[dH^2] = dt I the expansion E[exp(i dH)] = I - (dt/2) I + O(dt^2) generates
the Ito drift automatically, so the scheme is weakly consistent at order dt.
A literal Euler step U + i dH U - U dt/2 would leave the unitary group at
O(dt); this one never does, and the reunitarization guard exists only as a
tripwire.

Trajectories are embarrassingly parallel: trajectory k draws everything from
the counter-based stream (master_seed, k), so any chunking, window size or
worker count reproduces bit-identical ensembles.  Each step consumes one
(2, N, N) standard-normal block; a haar initial state consumes one (2, N)
block before stepping.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .hermitian_bm import RngStream, increment_from_normals, make_generator, sample_increment
from .linalg import expi

# Window of steps drawn per RNG call; draws are consumed in per-step blocks so
# the value has no effect on results, only on call overhead and buffer size.
_WINDOW = 64
# Normals-buffer budget per chunk (doubles), which sets the trajectory chunk size.
_CHUNK_BUDGET = 1 << 23
_MAX_TAYLOR_ORDER = 40


@dataclass(frozen=True)
class IntegratorConfig:
    """Step-size and unitarity-guard settings.

    step_size is capped at 0.05: the scheme is weak order 1 and coarser steps
    invalidate the moment matching the validation suite relies on.
    """

    step_size: float = 0.005
    reunit_interval: int = 100
    reunit_threshold: float = 1e-10
    carry: str = "vector"  # "vector" propagates psi, "matrix" the full U

    def __post_init__(self):
        if not 0.0 < self.step_size <= 0.05:
            raise ValueError("step_size must lie in (0, 0.05]")
        if self.reunit_interval < 1:
            raise ValueError("reunit_interval must be positive")
        if not self.reunit_threshold > 0:
            raise ValueError("reunit_threshold must be positive")
        if self.carry not in ("vector", "matrix"):
            raise ValueError("carry must be 'vector' or 'matrix'")


@dataclass(frozen=True)
class Trajectory:
    """States of one trajectory recorded at the requested times."""

    N: int
    times: tuple[float, ...]
    states: np.ndarray  # (len(times), N) complex
    initial: np.ndarray
    max_defect: float
    reunit_count: int


@dataclass(frozen=True)
class EnsembleSample:
    """M independent draws from the time-t ensemble started at ``initial``.

    ``max_unitarity_defect`` is populated for matrix carry, ``max_norm_defect``
    for vector carry; both are maxima over every guard check of the run that
    produced the sample.
    """

    N: int
    t: float
    initial: np.ndarray
    states: np.ndarray  # (M, N) complex
    master_seed: int
    max_unitarity_defect: float | None = None
    max_norm_defect: float | None = None
    reunit_count: int = 0

    @property
    def n_samples(self) -> int:
        return self.states.shape[0]

    def probabilities(self) -> np.ndarray:
        """Squared coordinate moduli, shape (M, N)."""
        return np.abs(self.states) ** 2


def sample_haar_state(N: int, rng: RngStream) -> np.ndarray:
    """Uniform (Fubini-Study) state: a standard complex Gaussian vector,
    normalized."""
    if N < 1:
        raise ValueError("N must be >= 1")
    z = rng.generator.standard_normal((2, N))
    v = z[0] + 1j * z[1]
    return v / np.linalg.norm(v)


def step(U: np.ndarray, dt: float, rng: RngStream) -> np.ndarray:
    """One multiplicative step exp(i dH) U with dH ~ increment of length dt."""
    U = np.asarray(U, dtype=complex)
    inc = sample_increment(U.shape[0], dt, rng)
    return expi(inc.matrix) @ U


# ---------------------------------------------------------------------------
# batched exponential application (Horner form of the Taylor series)
# ---------------------------------------------------------------------------

def _taylor_order(hnorm: float) -> int:
    """Smallest k with hnorm^(k+1)/(k+1)! below 1e-17, so the truncated
    series is indistinguishable from exp at double precision."""
    if hnorm == 0.0:
        return 1
    term = hnorm
    k = 1
    while term * hnorm / (k + 1) >= 1e-17:
        k += 1
        term = term * hnorm / k
        if k >= _MAX_TAYLOR_ORDER:
            return _MAX_TAYLOR_ORDER + 1  # sentinel: fall back to eigh
    return max(k, 2)


def _batch_frobenius_max(H: np.ndarray) -> float:
    return float(np.sqrt((np.abs(H) ** 2).sum(axis=(-2, -1))).max())


def _apply_expi_batch(H: np.ndarray, X: np.ndarray) -> np.ndarray:
    """exp(iH) @ X for a batch of Hermitian H (m, N, N) and states X of shape
    (m, N) or matrices (m, N, N).

    Uses the Horner form of the Taylor series truncated below roundoff, which
    preserves unitarity to machine precision at a fraction of the cost of a
    batched eigendecomposition; falls back to eigh for large-norm steps.
    """
    order = _taylor_order(_batch_frobenius_max(H))
    iH = 1j * H
    if order > _MAX_TAYLOR_ORDER:
        w, V = np.linalg.eigh(H)
        phase = np.exp(1j * w)
        if X.ndim == 2:
            return np.einsum("mij,mj,mkj,mk->mi", V, phase, V.conj(), X, optimize=True)
        return (V * phase[:, None, :]) @ (V.conj().transpose(0, 2, 1) @ X)
    out = X
    if X.ndim == 2:
        for k in range(order, 0, -1):
            out = X + np.einsum("mij,mj->mi", iH, out) / k
    else:
        for k in range(order, 0, -1):
            out = X + (iH @ out) / k
    return out


# ---------------------------------------------------------------------------
# step scheduling
# ---------------------------------------------------------------------------

def _plan_steps(times: list[float], h: float) -> tuple[np.ndarray, list[int]]:
    """Uniform steps of size h through the requested times, shortening the
    final step of each segment to land exactly; never overshoots.

    Returns the step sizes and, per requested time, the index of its last
    step (-1 means the time is 0 and the snapshot is the initial state).
    """
    dts: list[float] = []
    snaps: list[int] = []
    t_prev = 0.0
    for t in times:
        delta = t - t_prev
        if delta < -1e-12:
            raise ValueError("times must be non-decreasing")
        if delta > 1e-15:
            n_full = int(math.floor(delta / h + 1e-9))
            rem = delta - n_full * h
            dts.extend([h] * n_full)
            if rem > 1e-12 * max(1.0, t):
                dts.append(rem)
        snaps.append(len(dts) - 1)
        t_prev = t
    return np.asarray(dts, dtype=float), snaps


# ---------------------------------------------------------------------------
# core propagation loop
# ---------------------------------------------------------------------------

def _propagate(
    gens: list[np.random.Generator],
    N: int,
    dts: np.ndarray,
    snap_steps: list[int],
    psi0: np.ndarray | None,
    cfg: IntegratorConfig,
    return_unitaries: bool = False,
) -> tuple[np.ndarray, np.ndarray, float, int]:
    """Propagate len(gens) trajectories through the step schedule.

    psi0 is a common initial state, or None to draw a haar initial per
    trajectory from its own stream.  Returns (snapshots, initials,
    max_defect, reunit_count); snapshots has shape (n_snaps, m, N), or
    (n_snaps, m, N, N) when return_unitaries is set (matrix carry only).
    """
    m = len(gens)
    if psi0 is None:
        init = np.empty((m, N), dtype=complex)
        for i, g in enumerate(gens):
            z = g.standard_normal((2, N))
            v = z[0] + 1j * z[1]
            init[i] = v / np.linalg.norm(v)
    else:
        init = np.broadcast_to(np.asarray(psi0, dtype=complex), (m, N)).copy()

    matrix_carry = cfg.carry == "matrix"
    if return_unitaries and not matrix_carry:
        raise ValueError("return_unitaries requires matrix carry")
    if matrix_carry:
        U = np.broadcast_to(np.eye(N, dtype=complex), (m, N, N)).copy()
        psi = None
    else:
        U = None
        psi = init.copy()

    snap_shape = (len(snap_steps), m, N, N) if return_unitaries else (len(snap_steps), m, N)
    snaps = np.empty(snap_shape, dtype=complex)
    snap_map: dict[int, list[int]] = {}
    for pos, s in enumerate(snap_steps):
        snap_map.setdefault(s, []).append(pos)

    def record(step_index: int) -> None:
        for pos in snap_map.get(step_index, ()):
            if return_unitaries:
                snaps[pos] = U
            elif matrix_carry:
                snaps[pos] = np.einsum("mij,mj->mi", U, init)
            else:
                snaps[pos] = psi

    if -1 in snap_map:
        if return_unitaries:
            snaps[snap_map[-1]] = np.eye(N, dtype=complex)
        else:
            for pos in snap_map[-1]:
                snaps[pos] = init

    S = len(dts)
    max_defect = 0.0
    reunit_count = 0
    eye = np.eye(N)
    buf = np.empty((m, min(_WINDOW, S) if S else 0, 2, N, N))
    pos0 = 0
    while pos0 < S:
        w = min(_WINDOW, S - pos0)
        for i, g in enumerate(gens):
            buf[i, :w] = g.standard_normal((w, 2, N, N))
        for s_local in range(w):
            s = pos0 + s_local
            H = increment_from_normals(buf[:, s_local], float(dts[s]), N)
            if matrix_carry:
                U = _apply_expi_batch(H, U)
            else:
                psi = _apply_expi_batch(H, psi)
            if (s + 1) % cfg.reunit_interval == 0 or s == S - 1:
                if matrix_carry:
                    G = U @ U.conj().transpose(0, 2, 1) - eye
                    d = np.sqrt((np.abs(G) ** 2).sum(axis=(1, 2)))
                else:
                    d = np.abs(np.linalg.norm(psi, axis=1) - 1.0)
                max_defect = max(max_defect, float(d.max()))
                bad = d > cfg.reunit_threshold
                if bad.any():
                    reunit_count += int(bad.sum())
                    if matrix_carry:
                        Wm, _, Vh = np.linalg.svd(U[bad])
                        U[bad] = Wm @ Vh
                    else:
                        psi[bad] /= np.linalg.norm(psi[bad], axis=1, keepdims=True)
            record(s)
        pos0 += w
    return snaps, init, max_defect, reunit_count


def _run_chunk(args) -> tuple[int, np.ndarray, np.ndarray, float, int]:
    (master_seed, start, count, N, dts, snap_steps, psi0, cfg, return_unitaries) = args
    gens = [make_generator(master_seed, start + i) for i in range(count)]
    snaps, init, max_defect, reunit_count = _propagate(
        gens, N, dts, snap_steps, psi0, cfg, return_unitaries
    )
    return start, snaps, init, max_defect, reunit_count


def _resolve_jobs(n_jobs: int | None) -> int:
    if n_jobs in (None, 1):
        return 1
    if n_jobs == -1:
        return os.cpu_count() or 1
    if n_jobs < 1:
        raise ValueError("n_jobs must be a positive integer or -1")
    return n_jobs


def _chunk_size(N: int, n_steps: int) -> int:
    per_traj = max(1, min(_WINDOW, max(n_steps, 1))) * 2 * N * N
    return max(64, min(4096, _CHUNK_BUDGET // per_traj))


def _run_ensemble(
    N: int,
    dts: np.ndarray,
    snap_steps: list[int],
    psi0: np.ndarray | None,
    M: int,
    cfg: IntegratorConfig,
    master_seed: int,
    n_jobs: int | None,
    return_unitaries: bool = False,
) -> tuple[np.ndarray, np.ndarray, float, int]:
    """Dispatch M trajectories over chunks (optionally over worker processes)
    and merge the results in stream-index order."""
    jobs = _resolve_jobs(n_jobs)
    chunk = _chunk_size(N, len(dts))
    payloads = [
        (master_seed, start, min(chunk, M - start), N, dts, snap_steps, psi0, cfg, return_unitaries)
        for start in range(0, M, chunk)
    ]
    if jobs == 1 or len(payloads) == 1:
        results = [_run_chunk(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_chunk, payloads))
    results.sort(key=lambda r: r[0])
    state_shape = (len(snap_steps), M, N, N) if return_unitaries else (len(snap_steps), M, N)
    snaps = np.empty(state_shape, dtype=complex)
    inits = np.empty((M, N), dtype=complex)
    max_defect = 0.0
    reunit_count = 0
    for start, sn, init, d, rc in results:
        cnt = sn.shape[1]
        snaps[:, start : start + cnt] = sn
        inits[start : start + cnt] = init
        max_defect = max(max_defect, d)
        reunit_count += rc
    return snaps, inits, max_defect, reunit_count


# ---------------------------------------------------------------------------
# public sampling API
# ---------------------------------------------------------------------------

def _check_initial(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1:
        raise ValueError("initial state must be a 1-d complex vector")
    if abs(np.linalg.norm(psi) - 1.0) > 1e-8:
        raise ValueError("initial state must have unit norm (within 1e-8)")
    return psi


def evolve_path(
    psi: np.ndarray,
    times: list[float] | tuple[float, ...],
    cfg: IntegratorConfig,
    rng: RngStream,
) -> Trajectory:
    """Integrate one trajectory, recording the state at each requested time.

    Consumes the given stream in place, so repeated calls with a fresh
    identical stream reproduce the same path.
    """
    psi = _check_initial(psi)
    times = [float(t) for t in times]
    if any(t < 0 for t in times):
        raise ValueError("times must be non-negative")
    dts, snap_steps = _plan_steps(times, cfg.step_size)
    snaps, _, max_defect, reunit_count = _propagate(
        [rng.generator], psi.shape[0], dts, snap_steps, psi, cfg
    )
    return Trajectory(
        N=psi.shape[0],
        times=tuple(times),
        states=snaps[:, 0],
        initial=psi,
        max_defect=max_defect,
        reunit_count=reunit_count,
    )


def evolve(psi: np.ndarray, t: float, cfg: IntegratorConfig, rng: RngStream) -> np.ndarray:
    """State of one trajectory at time t >= 0."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return evolve_path(psi, [t], cfg, rng).states[0]


def sample_ensemble_path(
    psi: np.ndarray,
    times: list[float] | tuple[float, ...],
    M: int,
    cfg: IntegratorConfig,
    master_seed: int,
    n_jobs: int | None = 1,
) -> list[EnsembleSample]:
    """M independent trajectories recorded at each requested time.

    Trajectory k uses stream (master_seed, k) and is reproducible from that
    pair alone.  The returned samples share the run's defect diagnostics
    (maxima over the whole integration).  For random uniform initial states
    see sample_haar_ensemble_path.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    psi0 = _check_initial(psi)
    times = [float(t) for t in times]
    if any(t < 0 for t in times):
        raise ValueError("times must be non-negative")
    N = psi0.shape[0]
    dts, snap_steps = _plan_steps(times, cfg.step_size)
    snaps, inits, max_defect, reunit_count = _run_ensemble(
        N, dts, snap_steps, psi0, M, cfg, master_seed, n_jobs
    )
    defect_kw = (
        {"max_unitarity_defect": max_defect}
        if cfg.carry == "matrix"
        else {"max_norm_defect": max_defect}
    )
    return [
        EnsembleSample(
            N=N,
            t=t,
            initial=psi0,
            states=snaps[i],
            master_seed=master_seed,
            reunit_count=reunit_count,
            **defect_kw,
        )
        for i, t in enumerate(times)
    ]


def sample_ensemble(
    psi: np.ndarray,
    t: float,
    M: int,
    cfg: IntegratorConfig,
    master_seed: int,
    n_jobs: int | None = 1,
) -> EnsembleSample:
    """M independent draws from the time-t ensemble started at psi."""
    return sample_ensemble_path(psi, [t], M, cfg, master_seed, n_jobs)[0]


def sample_haar_ensemble_path(
    N: int,
    times: list[float] | tuple[float, ...],
    M: int,
    cfg: IntegratorConfig,
    master_seed: int,
    n_jobs: int | None = 1,
) -> list[EnsembleSample]:
    """Like sample_ensemble_path but with an independent haar initial state
    per trajectory (drawn from the trajectory's own stream)."""
    if M < 1:
        raise ValueError("M must be >= 1")
    times = [float(t) for t in times]
    if any(t < 0 for t in times):
        raise ValueError("times must be non-negative")
    dts, snap_steps = _plan_steps(times, cfg.step_size)
    snaps, inits, max_defect, reunit_count = _run_ensemble(
        N, dts, snap_steps, None, M, cfg, master_seed, n_jobs
    )
    defect_kw = (
        {"max_unitarity_defect": max_defect}
        if cfg.carry == "matrix"
        else {"max_norm_defect": max_defect}
    )
    return [
        EnsembleSample(
            N=N,
            t=t,
            initial=inits,
            states=snaps[i],
            master_seed=master_seed,
            reunit_count=reunit_count,
            **defect_kw,
        )
        for i, t in enumerate(times)
    ]


def sample_unitaries(
    N: int,
    t: float,
    M: int,
    cfg: IntegratorConfig,
    master_seed: int,
    n_jobs: int | None = 1,
) -> tuple[np.ndarray, float, int]:
    """M independent U_t matrices (matrix carry), plus the run's maximum
    unitarity defect and reunitarization count."""
    if M < 1:
        raise ValueError("M must be >= 1")
    if t < 0:
        raise ValueError("t must be non-negative")
    cfg_m = IntegratorConfig(
        step_size=cfg.step_size,
        reunit_interval=cfg.reunit_interval,
        reunit_threshold=cfg.reunit_threshold,
        carry="matrix",
    )
    e1 = np.zeros(N, dtype=complex)
    e1[0] = 1.0
    dts, snap_steps = _plan_steps([float(t)], cfg_m.step_size)
    snaps, _, max_defect, reunit_count = _run_ensemble(
        N, dts, snap_steps, e1, M, cfg_m, master_seed, n_jobs, return_unitaries=True
    )
    return snaps[0], max_defect, reunit_count


# ---------------------------------------------------------------------------
# coupled multi-resolution ensembles for the weak-order bias check
# ---------------------------------------------------------------------------

def _run_coupled_chunk(args) -> tuple[int, dict[int, np.ndarray]]:
    (master_seed, start, count, N, n_steps, h, levels, psi0) = args
    gens = [make_generator(master_seed, start + i) for i in range(count)]
    states = {lv: np.broadcast_to(psi0, (count, N)).copy() for lv in levels}
    acc = {lv: np.zeros((count, N, N), dtype=complex) for lv in levels if lv > 1}
    max_lv = max(levels)
    window = (_WINDOW // max_lv) * max_lv or max_lv
    buf = np.empty((count, window, 2, N, N))
    scale = 0.5 * np.sqrt(h / N)
    pos0 = 0
    while pos0 < n_steps:
        w = min(window, n_steps - pos0)
        for i, g in enumerate(gens):
            buf[i, :w] = g.standard_normal((w, 2, N, N))
        for s_local in range(w):
            s = pos0 + s_local
            G = buf[:, s_local, 0] + 1j * buf[:, s_local, 1]
            Hb = (G + G.conj().transpose(0, 2, 1)) * scale  # increment for one fine step
            for lv in levels:
                if lv == 1:
                    states[1] = _apply_expi_batch(Hb, states[1])
                else:
                    acc[lv] += Hb
                    if (s + 1) % lv == 0:
                        states[lv] = _apply_expi_batch(acc[lv], states[lv])
                        acc[lv][:] = 0.0
        pos0 += w
    return start, states


def coupled_step_states(
    psi: np.ndarray,
    t: float,
    M: int,
    cfg: IntegratorConfig,
    master_seed: int,
    levels: tuple[int, ...] = (1, 2),
    n_jobs: int | None = 1,
) -> dict[int, np.ndarray]:
    """Evolve M trajectories to time t simultaneously at step sizes
    level * cfg.step_size, all levels driven by the same Brownian paths
    (a coarse increment is the sum of its fine sub-increments).

    Returns {level: states (M, N)}.  Used to measure how the weak-order
    step bias scales with the step size at fixed noise.
    """
    psi0 = _check_initial(psi)
    N = psi0.shape[0]
    h = cfg.step_size
    n_steps = int(round(t / h))
    if abs(n_steps * h - t) > 1e-9:
        raise ValueError("t must be an integer multiple of step_size")
    levels = tuple(sorted(set(int(lv) for lv in levels)))
    if levels[0] < 1:
        raise ValueError("levels must be positive integers")
    if any(n_steps % lv for lv in levels):
        raise ValueError("number of steps must be divisible by every level")
    jobs = _resolve_jobs(n_jobs)
    chunk = _chunk_size(N, n_steps)
    payloads = [
        (master_seed, start, min(chunk, M - start), N, n_steps, h, levels, psi0)
        for start in range(0, M, chunk)
    ]
    if jobs == 1 or len(payloads) == 1:
        results = [_run_coupled_chunk(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_coupled_chunk, payloads))
    results.sort(key=lambda r: r[0])
    out = {lv: np.empty((M, N), dtype=complex) for lv in levels}
    for start, states in results:
        cnt = next(iter(states.values())).shape[0]
        for lv in levels:
            out[lv][start : start + cnt] = states[lv]
    return out
