"""Hermitian Brownian motion increments.

The driving noise of the unitary SDE is the Gaussian process on Hermitian
matrices with covariance E[<A,H_s><B,H_t>] = (s ^ t) <A,B> under the scalar
product <A,B> = N Tr[A*B].  Equivalently, an increment over a step dt has
independent off-diagonal entries (X + iY)/sqrt(2N) with X, Y of variance dt
and real diagonal entries of variance dt/N.

Randomness is organized as counter-based streams: stream (master_seed, k) is
a Philox generator keyed by both integers, so trajectories are mutually
independent and reproducible from their own key alone, in any order.  Every
increment consumes exactly one standard-normal block of shape (2, N, N) from
its stream, in C order; batched helpers preserve that layout so single-step
and batched sampling produce identical sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RngStream:
    """One trajectory's private random stream.

    Identical (master_seed, stream_index) pairs reproduce identical draw
    sequences; distinct pairs give statistically independent Philox streams.
    """

    master_seed: int
    stream_index: int = 0
    _gen: np.random.Generator | None = field(default=None, repr=False, compare=False)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            self._gen = make_generator(self.master_seed, self.stream_index)
        return self._gen


def make_generator(master_seed: int, stream_index: int) -> np.random.Generator:
    """Philox generator keyed by (master_seed, stream_index)."""
    if stream_index < 0:
        raise ValueError("stream_index must be non-negative")
    key = np.array([np.uint64(master_seed % (1 << 64)), np.uint64(stream_index)])
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class BrownianIncrement:
    """A sampled increment dH over a step of length dt."""

    dt: float
    matrix: np.ndarray


def increment_from_normals(z: np.ndarray, dt: float, N: int) -> np.ndarray:
    """Scale a standard-normal block (..., 2, N, N) into Hermitian increments
    (..., N, N) with the process normalization.

    The symmetrization (G + G*)/2 of G = (z0 + i z1) is exactly Hermitian in
    floating point and has the required entry variances after the
    sqrt(dt/N) scaling.
    """
    G = z[..., 0, :, :] + 1j * z[..., 1, :, :]
    H = (G + np.conj(np.swapaxes(G, -1, -2))) * (0.5 * np.sqrt(dt / N))
    return H


def sample_increment(N: int, dt: float, rng: RngStream) -> BrownianIncrement:
    """Draw one Hermitian Brownian increment for a step of length dt."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if not dt > 0:
        raise ValueError("dt must be positive")
    z = rng.generator.standard_normal((2, N, N))
    return BrownianIncrement(dt=float(dt), matrix=increment_from_normals(z, dt, N))


def sample_increments(N: int, dt: float, rng: RngStream, count: int) -> np.ndarray:
    """Draw ``count`` consecutive increments from one stream, stacked as
    (count, N, N).  Consumes the same per-increment blocks as repeated
    sample_increment calls.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if N < 1:
        raise ValueError("N must be >= 1")
    if not dt > 0:
        raise ValueError("dt must be positive")
    z = rng.generator.standard_normal((count, 2, N, N))
    return increment_from_normals(z, dt, N)


def matrix_inner(A: np.ndarray, B: np.ndarray) -> float:
    """The process scalar product <A,B> = N Tr[A*B] for Hermitian A, B."""
    N = A.shape[0]
    return float(np.real(N * np.trace(A.conj().T @ B)))


def hermitian_basis(N: int) -> list[np.ndarray]:
    """Orthonormal basis of the N x N Hermitian matrices under <A,B> = N Tr[A*B]:
    scaled diagonal units, symmetric pairs and antisymmetric pairs.
    """
    basis: list[np.ndarray] = []
    for j in range(N):
        E = np.zeros((N, N), dtype=complex)
        E[j, j] = 1.0 / np.sqrt(N)
        basis.append(E)
    for j in range(N):
        for k in range(j + 1, N):
            S = np.zeros((N, N), dtype=complex)
            S[j, k] = S[k, j] = 1.0 / np.sqrt(2 * N)
            basis.append(S)
            A = np.zeros((N, N), dtype=complex)
            A[j, k] = 1j / np.sqrt(2 * N)
            A[k, j] = -1j / np.sqrt(2 * N)
            basis.append(A)
    return basis


def increment_covariance_check(
    samples: list[BrownianIncrement], family: list[np.ndarray]
) -> np.ndarray:
    """Empirical covariance matrix C[i, j] = mean(<A_i, dH> <A_j, dH>) / dt
    over a list of increments with common dt.

    For the true process this estimates <A_i, A_j>, i.e. the identity when
    the test family is orthonormal.
    """
    if len(family) == 0:
        return np.zeros((0, 0))
    if len(samples) == 0:
        raise ValueError("need at least one sample")
    dt = samples[0].dt
    if any(s.dt != dt for s in samples):
        raise ValueError("samples must share a common dt")
    N = family[0].shape[0]
    # <A, dH> = N Tr[A dH] = N sum_{jk} conj(A_jk) dH_jk, real for Hermitian pairs
    stack = np.stack([s.matrix for s in samples])  # (M, N, N)
    fam = np.stack(family)  # (F, N, N)
    proj = np.real(N * np.einsum("fjk,mjk->mf", fam.conj(), stack))
    return (proj.T @ proj) / (len(samples) * dt)
