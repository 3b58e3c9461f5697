"""Dense complex linear algebra shared by the whole toolkit.

Matrices are plain ``numpy`` arrays of dtype complex128; states are complex
vectors. Constructors here guarantee the structural properties the rest of
the code relies on (exact Hermiticity, unitarity up to roundoff, unit norm)
rather than merely checking them after the fact.
"""

from __future__ import annotations

import numpy as np

# Frobenius-norm budgets used throughout; tolerance checks elsewhere in the
# package refer back to these.
UNITARITY_BUDGET = 1e-10
STATE_NORM_BUDGET = 1e-12


class NumericError(RuntimeError):
    """A dense linear-algebra routine failed or produced non-finite output."""


def _as_square_complex(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M.view(float))):
        raise ValueError(f"{name} contains non-finite entries")
    return M


def hermitian_from_parts(diag: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Build an N x N Hermitian matrix from its real diagonal and the strict
    upper triangle (row-major order, length N(N-1)/2).

    The lower triangle is filled with conjugates, so the result satisfies
    H == H.conj().T entrywise, exactly.
    """
    diag = np.asarray(diag, dtype=float)
    upper = np.asarray(upper, dtype=complex)
    if diag.ndim != 1:
        raise ValueError("diag must be a 1-d real vector")
    n = diag.shape[0]
    if upper.shape != (n * (n - 1) // 2,):
        raise ValueError(
            f"upper must have length N(N-1)/2 = {n * (n - 1) // 2}, got {upper.shape}"
        )
    if not (np.all(np.isfinite(diag)) and np.all(np.isfinite(upper.view(float)))):
        raise ValueError("non-finite input to hermitian_from_parts")
    H = np.zeros((n, n), dtype=complex)
    iu, ju = np.triu_indices(n, k=1)
    H[iu, ju] = upper
    H[ju, iu] = upper.conj()
    H[np.arange(n), np.arange(n)] = diag
    return H


def is_hermitian(H: np.ndarray, tol: float = 0.0) -> bool:
    """True if H equals its conjugate transpose entrywise within tol."""
    H = np.asarray(H)
    return bool(np.max(np.abs(H - H.conj().T), initial=0.0) <= tol)


def expi(H: np.ndarray) -> np.ndarray:
    """exp(iH) for Hermitian H, via the unitary eigendecomposition
    H = Q diag(w) Q*.  The result is unitary up to roundoff.
    """
    H = _as_square_complex(H, "H")
    if not is_hermitian(H):
        raise ValueError("expi requires an exactly Hermitian input")
    try:
        w, Q = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            f"eigendecomposition failed for {H.shape[0]}x{H.shape[0]} Hermitian "
            f"matrix (|H|_F = {np.linalg.norm(H):.3e})"
        ) from exc
    return (Q * np.exp(1j * w)) @ Q.conj().T


def state_to_prob(psi: np.ndarray) -> np.ndarray:
    """Probability vector of squared coordinate moduli of a pure state."""
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1:
        raise ValueError("state must be a 1-d complex vector")
    return np.abs(psi) ** 2


def norm_defect(psi: np.ndarray) -> float:
    """| ||psi||_2 - 1 |."""
    return abs(float(np.linalg.norm(psi)) - 1.0)


def unitarity_defect(U: np.ndarray) -> float:
    """Frobenius norm of U U* - I."""
    U = np.asarray(U)
    G = U @ U.conj().T
    G = G - np.eye(U.shape[-1])
    return float(np.linalg.norm(G))


def polar_reunitarize(M: np.ndarray) -> np.ndarray:
    """Unitary polar factor of a nonsingular matrix: the closest unitary in
    Frobenius norm, computed as W V* from the SVD M = W S V*.
    """
    M = _as_square_complex(M, "M")
    try:
        W, s, Vh = np.linalg.svd(M)
    except np.linalg.LinAlgError as exc:
        raise NumericError("SVD failed in polar_reunitarize") from exc
    if s[-1] <= 0.0:
        raise ValueError("polar_reunitarize requires a nonsingular matrix")
    return W @ Vh
