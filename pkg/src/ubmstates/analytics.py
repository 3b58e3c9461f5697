"""Closed-form statistics of the coordinate law of states evolved by unitary
Brownian motion: the confluent-hypergeometric series for the Laplace
transform of a squared coordinate modulus, the coefficient sequences for a
given initial condition, moment and covariance curves, observable averages
and entropy bounds.

Everything here is exact (up to series truncation at double precision); the
Monte Carlo side of the toolkit validates against these functions, and these
functions validate against each other through ODE/PDE identities and sum
rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

MAX_COEFFICIENTS = 60  # conditioning guard for the double-precision solver
_SERIES_TAIL = 1e-14
_KUMMER_TOL = 1e-16
_KUMMER_MAX_TERMS = 10_000
_KUMMER_Z_GUARD = 50.0


class ConvergenceError(RuntimeError):
    """A series did not reach its truncation criterion within the term cap."""


def rate(n: int, N: int) -> float:
    """Decay rate of the n-th series mode: n + n(n-1)/N."""
    if n < 0 or N < 1:
        raise ValueError("need n >= 0 and N >= 1")
    return n + n * (n - 1) / N


@lru_cache(maxsize=None)
def pochhammer(x: float, n: int) -> float:
    """Rising factorial (x)_n = x (x+1) ... (x+n-1), with (x)_0 = 1."""
    if n < 0:
        raise ValueError("n must be non-negative")
    out = 1.0
    for k in range(n):
        out *= x + k
    return out


@dataclass(frozen=True)
class CoefficientSequence:
    """Series coefficients a_0..a_{n_max} for initial squared modulus c."""

    N: int
    c: float
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


@lru_cache(maxsize=None)
def _solve_coefficients_exact(N: int, c: float, n_max: int) -> tuple[float, ...]:
    """Forward substitution in exact rational arithmetic.

    Every system entry is rational (binomials, integer Pochhammer products,
    and the float c read exactly as a binary rational), and the coefficients
    decay through ~30 orders of magnitude with heavy cancellation, so double
    precision loses ~1e-4 relative accuracy by n = 20.  Exact arithmetic
    costs a few milliseconds at the n_max = 60 guard and rounds each a_n
    once, on output.
    """
    cr = Fraction(c)
    a = [Fraction(1)]
    for p in range(1, n_max + 1):
        s = sum(
            a[n] * Fraction(math.comb(p, n), _int_pochhammer(N + 2 * n, p - n))
            for n in range(p)
        )
        a.append(cr**p / math.factorial(p) - s)
    return tuple(float(x) for x in a)


def _int_pochhammer(x: int, n: int) -> int:
    out = 1
    for k in range(n):
        out *= x + k
    return out


def solve_coefficients(N: int, c: float, n_max: int) -> CoefficientSequence:
    """Coefficients a_0..a_{n_max} from the triangular linear system

        sum_{n<=p} a_n C(p,n) / (N+2n)_{p-n} = c^p / p!,   p = 0..n_max,

    solved by forward substitution (the diagonal entry is 1).
    """
    if not 0.0 <= c <= 1.0:
        raise ValueError("c must lie in [0, 1]")
    if N < 1:
        raise ValueError("N must be >= 1")
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    if n_max > MAX_COEFFICIENTS:
        raise ValueError(
            f"n_max = {n_max} exceeds the coefficient guard "
            f"{MAX_COEFFICIENTS}; reduce the requested range"
        )
    a = np.array(_solve_coefficients_exact(int(N), float(c), int(n_max)))
    return CoefficientSequence(N=N, c=float(c), values=a)


def coefficients_c0(N: int, n_max: int) -> CoefficientSequence:
    """Closed form for c = 0: a_n = (-1)^n / (N+n-1)_n."""
    a = np.array([(-1.0) ** n / pochhammer(N + n - 1, n) for n in range(n_max + 1)])
    return CoefficientSequence(N=N, c=0.0, values=a)


def coefficients_c1(N: int, n_max: int) -> CoefficientSequence:
    """Closed form for c = 1: a_n = (N-1)_n / (n! (N+n-1)_n)."""
    a = np.array(
        [
            pochhammer(N - 1, n) / (math.factorial(n) * pochhammer(N + n - 1, n))
            for n in range(n_max + 1)
        ]
    )
    return CoefficientSequence(N=N, c=1.0, values=a)


def kummer_1f1(a: float, b: float, z: float) -> float:
    """Kummer confluent hypergeometric series sum_k (a)_k z^k / ((b)_k k!).

    Summed by term recurrence until the next term falls below 1e-16 of the
    partial sum.  For z < 0 the series alternates, so the reflection
    1F1(a;b;z) = e^z 1F1(b-a;b;-z) is applied first to keep every term
    positive in the parameter regime used here (b > a > 0).
    """
    if b <= 0 and b == int(b):
        raise ValueError("b must not be a non-positive integer")
    if abs(z) > _KUMMER_Z_GUARD:
        raise ValueError(f"|z| must not exceed the series guard {_KUMMER_Z_GUARD}")
    if z < 0:
        return math.exp(z) * kummer_1f1(b - a, b, -z)
    term = 1.0
    total = 1.0
    for k in range(_KUMMER_MAX_TERMS):
        term *= (a + k) * z / ((b + k) * (k + 1))
        total += term
        if abs(term) < _KUMMER_TOL * abs(total):
            return total
    raise ConvergenceError(
        f"1F1({a}; {b}; {z}) did not converge within {_KUMMER_MAX_TERMS} terms"
    )


def laplace_marginal(
    N: int, c: float, t: float, lam: float, n_max: int = MAX_COEFFICIENTS
) -> float:
    """Laplace transform E exp(lam |psi_t^j|^2) of one squared coordinate
    modulus with initial value c, via the eigenmode series

        phi(lam; t) = sum_n a_n e^(-L_n t) lam^n 1F1(n+1; N+2n; lam).

    The sum stops once the term bound drops below 1e-14 for two consecutive
    modes (single coefficients can vanish structurally, e.g. a_1 at c = 1/N);
    if the bound is not reached by n_max the series is flagged as unresolved
    (slow convergence happens at t = 0 with large |lam|; raise n_max).
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    coeffs = solve_coefficients(N, c, n_max)
    total = 0.0
    small = 0
    for n in range(n_max + 1):
        decay = math.exp(-rate(n, N) * t)
        bound = abs(coeffs.values[n]) * abs(lam) ** n * decay
        if bound > 0.0:
            bound *= kummer_1f1(n + 1, N + 2 * n, abs(lam))
        if bound < _SERIES_TAIL:
            small += 1
            if small >= 2:
                return total
            continue
        small = 0
        total += (
            coeffs.values[n] * decay * lam**n * kummer_1f1(n + 1, N + 2 * n, lam)
        )
    raise ConvergenceError(
        f"laplace_marginal did not reach its tail bound by n_max = {n_max}; "
        "increase n_max"
    )


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

def _mode_sum(weights: np.ndarray, rates: np.ndarray, t):
    """Evaluate sum_n w_n exp(-r_n t) for scalar or array t."""
    t = np.asarray(t, dtype=float)
    tt = np.atleast_1d(t)
    value = weights @ np.exp(-np.outer(rates, tt))
    return float(value[0]) if t.ndim == 0 else value.reshape(t.shape)


def _moment_weights(N: int, p: int, a: np.ndarray) -> np.ndarray:
    """Weights of the p-th moment as a sum of e^(-L_n t) modes, n = 0..p:
    p! C(p, p-n) a_n / (N+2n)_{p-n}."""
    return np.array(
        [
            math.factorial(p) * math.comb(p, p - n) * a[n] / pochhammer(N + 2 * n, p - n)
            for n in range(p + 1)
        ]
    )


@dataclass(frozen=True)
class MomentCurve:
    """Evaluator of t -> E |psi_t^j|^(2p) as a finite sum of decaying modes."""

    N: int
    p: int
    coefficients: CoefficientSequence
    weights: np.ndarray
    rates: np.ndarray

    def __call__(self, t):
        return _mode_sum(self.weights, self.rates, t)

    def derivative(self, t):
        return _mode_sum(-self.weights * self.rates, self.rates, t)


def _build_moment_curve(N: int, p: int, coeffs: CoefficientSequence) -> MomentCurve:
    return MomentCurve(
        N=N,
        p=p,
        coefficients=coeffs,
        weights=_moment_weights(N, p, coeffs.values),
        rates=np.array([rate(n, N) for n in range(p + 1)]),
    )


def moment_curve(N: int, c: float, p: int) -> MomentCurve:
    """p-th moment curve for initial squared modulus c, coefficients from the
    triangular solver."""
    if p < 1:
        raise ValueError("p must be >= 1")
    return _build_moment_curve(N, p, solve_coefficients(N, c, p))


def moment_e1_curves(N: int, p: int, j: int) -> MomentCurve:
    """Moment curve of coordinate j when the initial state is the first basis
    vector, using the closed-form coefficients (c = 1 for j = 1, c = 0 for
    j > 1) instead of the solver."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if not 1 <= j <= N:
        raise ValueError("j must lie in 1..N")
    coeffs = coefficients_c1(N, p) if j == 1 else coefficients_c0(N, p)
    return _build_moment_curve(N, p, coeffs)


def haar_moment(N: int, p: int) -> float:
    """Stationary moment E |psi^j|^(2p) under the uniform measure: p!/(N)_p."""
    return math.factorial(p) / pochhammer(N, p)


# ---------------------------------------------------------------------------
# covariances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CovarianceCurve:
    """Evaluator of t -> E[|psi_t^j|^2 |psi_t^k|^2], j != k, from the initial
    values f_j(0), f_k(0), f_jk(0)."""

    N: int
    f_j0: float
    f_k0: float
    f_jk0: float

    @property
    def _pieces(self) -> tuple[float, float, float]:
        N = self.N
        s0 = self.f_j0 + self.f_k0 - 2.0 / N
        stat = 1.0 / (N * (N + 1))
        fast = self.f_jk0 - s0 / (N + 2) - stat
        return fast, s0 / (N + 2), stat

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        fast, slow, stat = self._pieces
        value = fast * np.exp(-(2 + 2 / self.N) * t) + slow * np.exp(-t) + stat
        return value if value.ndim else float(value)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        fast, slow, _ = self._pieces
        value = -(2 + 2 / self.N) * fast * np.exp(-(2 + 2 / self.N) * t) - slow * np.exp(-t)
        return value if value.ndim else float(value)


def covariance_curve(N: int, f_j0: float, f_k0: float, f_jk0: float) -> CovarianceCurve:
    """Covariance curve from the initial values |psi^j|^2, |psi^k|^2 and
    their product."""
    for name, v in (("f_j0", f_j0), ("f_k0", f_k0), ("f_jk0", f_jk0)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    if N < 2:
        raise ValueError("covariances need N >= 2")
    return CovarianceCurve(N=N, f_j0=float(f_j0), f_k0=float(f_k0), f_jk0=float(f_jk0))


def covariance_curve_from_state(N: int, psi: np.ndarray, j: int, k: int) -> CovarianceCurve:
    """Covariance curve of coordinates j and k (1-based) for initial state psi."""
    if j == k:
        raise ValueError("j and k must differ (use moment_curve for j == k)")
    pj = float(np.abs(psi[j - 1]) ** 2)
    pk = float(np.abs(psi[k - 1]) ** 2)
    return covariance_curve(N, pj, pk, pj * pk)


# ---------------------------------------------------------------------------
# observables and entropies
# ---------------------------------------------------------------------------

def observable_average(A: np.ndarray, psi: np.ndarray, t) -> float | np.ndarray:
    """Mean measured value E <psi_t, A psi_t> of a fixed observable:
    (<psi, A psi> - Tr A / N) e^(-t) + Tr A / N."""
    A = np.asarray(A, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    if A.shape != (psi.shape[0], psi.shape[0]):
        raise ValueError("A must be square with the state's dimension")
    if np.max(np.abs(A - A.conj().T)) > 1e-12 * max(1.0, float(np.abs(A).max())):
        raise ValueError("A must be Hermitian")
    N = psi.shape[0]
    mean_inf = float(np.real(np.trace(A))) / N
    mean_0 = float(np.real(psi.conj() @ A @ psi))
    t = np.asarray(t, dtype=float)
    value = (mean_0 - mean_inf) * np.exp(-t) + mean_inf
    return value if value.ndim else float(value)


def sum_moments_e1(N: int, p: int, t) -> float | np.ndarray:
    """Y_p(t) = sum_j E |psi_t^j|^(2p) for the first-basis-vector initial
    state: one c = 1 coordinate plus N-1 of the c = 0 kind."""
    if p < 1:
        raise ValueError("p must be >= 1")
    weights = np.array(
        [
            math.factorial(p)
            * math.comb(p, p - n)
            * (pochhammer(N - 1, n) / math.factorial(n) + (N - 1) * (-1.0) ** n)
            / (pochhammer(N + n - 1, n) * pochhammer(N + 2 * n, p - n))
            for n in range(p + 1)
        ]
    )
    rates = np.array([rate(n, N) for n in range(p + 1)])
    return _mode_sum(weights, rates, t)


def entropy_bound(N: int, p: int, t) -> float | np.ndarray:
    """Jensen lower bound (1/(1-p)) ln Y_p(t) on the mean Renyi-p entropy of
    states evolved from the first basis vector.  p >= 2 integer."""
    if p < 2 or int(p) != p:
        raise ValueError("p must be an integer >= 2")
    y = np.asarray(sum_moments_e1(N, int(p), t))
    if np.any(y <= 0):
        raise ArithmeticError(
            "sum of moments came out non-positive; coefficient bug upstream"
        )
    value = np.log(y) / (1 - p)
    return value if value.ndim else float(value)


def haar_entropy_bound(N: int) -> float:
    """Lower bound sum_{k=2}^N 1/k on the mean entropy of a uniform state
    (the formal p -> 1 limit of the Renyi bounds)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return sum(1.0 / k for k in range(2, N + 1))


# ---------------------------------------------------------------------------
# PDE self-consistency
# ---------------------------------------------------------------------------

def pde_residual(
    N: int,
    c: float,
    t_values,
    lam_values,
    n_max: int = MAX_COEFFICIENTS,
) -> float:
    """Maximum absolute residual of the one-coordinate PDE

        d_t phi = (lam/N) phi + (lam^2/N - lam) d_lam phi - (lam^2/N) d_ll phi

    over the (t, lam) grid, with every derivative taken term by term in the
    analytic series.  Each mode solves the PDE exactly, so the residual
    measures truncation and roundoff only.
    """
    coeffs = solve_coefficients(N, c, n_max).values
    t_values = np.atleast_1d(np.asarray(t_values, dtype=float))
    lam_values = np.atleast_1d(np.asarray(lam_values, dtype=float))
    worst = 0.0
    lam_max = float(np.abs(lam_values).max())
    t_min = float(t_values.min())
    for t in t_values:
        for lam in lam_values:
            phi = dphi_t = dphi_l = dphi_ll = 0.0
            small = 0
            for n in range(n_max + 1):
                tail = abs(coeffs[n]) * lam_max**n * math.exp(-rate(n, N) * t_min)
                if tail > 0.0:
                    tail *= kummer_1f1(n + 3, N + 2 * n + 2, lam_max)
                small = small + 1 if tail < 1e-18 else 0
                if small >= 2 and n > 2:
                    break
                a, b = n + 1.0, float(N + 2 * n)
                base = coeffs[n] * math.exp(-rate(n, N) * t)
                f0 = kummer_1f1(a, b, lam)
                f1 = (a / b) * kummer_1f1(a + 1, b + 1, lam)
                f2 = (a * (a + 1) / (b * (b + 1))) * kummer_1f1(a + 2, b + 2, lam)
                p0 = lam**n
                p1 = n * lam ** (n - 1) if n >= 1 else 0.0
                p2 = n * (n - 1) * lam ** (n - 2) if n >= 2 else 0.0
                phi += base * p0 * f0
                dphi_t += -rate(n, N) * base * p0 * f0
                dphi_l += base * (p1 * f0 + p0 * f1)
                dphi_ll += base * (p2 * f0 + 2 * p1 * f1 + p0 * f2)
            rhs = (lam / N) * phi + (lam**2 / N - lam) * dphi_l - (lam**2 / N) * dphi_ll
            worst = max(worst, abs(dphi_t - rhs))
    return worst
