"""Random streams, SPD linear algebra, the Bessel function K1, finite differences.

Random numbers come from numpy's PCG64 bit generator seeded through a
``SeedSequence``.  Streams are addressed by a path of integers below a master
seed, so ``stream(seed, 2, 5)`` is always the same sequence no matter how many
other streams were created before it.  Normal draws use numpy's ziggurat
transform (``Generator.standard_normal``).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, DomainError, NotPositiveDefinite

JITTER_SCHEDULE = (0.0, 1e-12, 1e-10, 1e-8)


# --------------------------------------------------------------------------
# random streams


def stream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the stream ``path`` below master ``seed``."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(seq))


def derive_child(state: np.random.Generator, k: int) -> np.random.Generator:
    """Independent child stream ``k`` of ``state``.

    The child depends only on the parent's seed lineage, never on how many
    draws the parent has already produced.
    """
    seq = state.bit_generator.seed_seq
    child = np.random.SeedSequence(seq.entropy, spawn_key=tuple(seq.spawn_key) + (int(k),))
    return np.random.Generator(np.random.PCG64(child))


def stream_id(state: np.random.Generator) -> int:
    """A 63-bit integer fingerprint of a stream's lineage, used as a printable seed."""
    word = state.bit_generator.seed_seq.generate_state(1, np.uint64)[0]
    return int(word >> np.uint64(1))


def next_standard_normal(state: np.random.Generator) -> float:
    return float(state.standard_normal())


# --------------------------------------------------------------------------
# dense SPD linear algebra


@dataclass(frozen=True)
class CholeskyFactor:
    lower: np.ndarray
    jitter: float

    @property
    def n(self) -> int:
        return self.lower.shape[0]


def cholesky(a, jitter_schedule: Sequence[float] = JITTER_SCHEDULE) -> CholeskyFactor:
    """Lower Cholesky factor of ``a + jitter * I`` for the first jitter that works."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    eye = np.eye(a.shape[0])
    for jitter in jitter_schedule:
        try:
            lower = scipy.linalg.cholesky(a + jitter * eye, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
        # LAPACK reports failure via info, but a zero pivot can slip through as nan
        if np.all(np.isfinite(lower)) and np.all(np.diag(lower) > 0):
            return CholeskyFactor(lower, float(jitter))
    raise NotPositiveDefinite(
        f"matrix of order {a.shape[0]} is not positive definite "
        f"even with jitter {jitter_schedule[-1]:g}"
    )


def spd_solve(factor: CholeskyFactor, b) -> np.ndarray:
    """Solve ``(L L^T) x = b`` by forward then back substitution."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != factor.n:
        raise DimensionMismatch(f"factor has order {factor.n}, right-hand side has {b.shape[0]} rows")
    return scipy.linalg.cho_solve((factor.lower, True), b, check_finite=False)


# --------------------------------------------------------------------------
# modified Bessel function of the second kind, order one

_EULER_GAMMA = 0.57721566490153286061
_SERIES_TERMS = 16


def _series_tables():
    inv = np.empty(_SERIES_TERMS)
    psi_sum = np.empty(_SERIES_TERMS)
    harmonic = 0.0
    for k in range(_SERIES_TERMS):
        inv[k] = 1.0 / (factorial(k) * factorial(k + 1))
        # psi(k+1) + psi(k+2) = -2 gamma + 2 H_k + 1/(k+1)
        psi_sum[k] = -2.0 * _EULER_GAMMA + 2.0 * harmonic + 1.0 / (k + 1)
        harmonic += 1.0 / (k + 1)
    return inv, inv * psi_sum


_SERIES_I1, _SERIES_PSI = _series_tables()

# exp(x) sqrt(x) K1(x) as a Chebyshev series in t = 4/x - 1, valid for x >= 2.
# Generated by tools/gen_k1_coeffs.py.
_TAIL_CHEB = np.array([
    1.3603130952422213347,
    1.0392373657681723844e-1,
    -2.8578168596227793868e-3,
    1.9521551847135163111e-4,
    -1.93619797416608296e-5,
    2.4064849478372171171e-6,
    -3.5019606030878125421e-7,
    5.7410841254500492923e-8,
    -1.0345762465678097027e-8,
    2.0150497551970346161e-9,
    -4.1903547593419255842e-10,
    9.2183151876053141258e-11,
    -2.1299678384277910216e-11,
    5.1396396734823435404e-12,
    -1.2891739609498229352e-12,
    3.3484196660522431201e-13,
    -8.9767051820101460692e-14,
    2.4771544242195986813e-14,
    -7.0198370892147688513e-15,
    2.0387031662398608799e-15,
    -6.0570472706430178228e-16,
    1.8380935752430454256e-16,
    -5.6894628491936483742e-17,
    1.7940510478863572914e-17,
])


def _k1_series(x: np.ndarray) -> np.ndarray:
    q = 0.25 * x * x
    i1_sum = np.zeros_like(x)
    psi_sum = np.zeros_like(x)
    for k in range(_SERIES_TERMS - 1, -1, -1):
        i1_sum = i1_sum * q + _SERIES_I1[k]
        psi_sum = psi_sum * q + _SERIES_PSI[k]
    i1 = 0.5 * x * i1_sum
    return 1.0 / x + np.log(0.5 * x) * i1 - 0.25 * x * psi_sum


def _k1_tail(x: np.ndarray) -> np.ndarray:
    t2 = 8.0 / x - 2.0
    # Clenshaw recurrence on rotating buffers
    b1 = np.zeros_like(x)
    b2 = np.zeros_like(x)
    b0 = np.empty_like(x)
    for c in _TAIL_CHEB[:0:-1]:
        np.multiply(t2, b1, out=b0)
        b0 -= b2
        b0 += c
        b0, b1, b2 = b2, b0, b1
    # g = t * b1 - b2 + c0 with t = t2 / 2
    np.multiply(t2, b1, out=b0)
    b0 *= 0.5
    b0 -= b2
    b0 += _TAIL_CHEB[0]
    np.negative(x, out=b1)
    np.exp(b1, out=b1)
    b0 *= b1
    np.sqrt(x, out=b1)
    b0 /= b1
    return b0


def bessel_k1(x):
    """Modified Bessel function of the second kind of order one.

    Uses the ascending series for ``x <= 2`` and a Chebyshev fit of
    ``exp(x) * sqrt(x) * K1(x)`` beyond.  Accepts scalars or arrays; every
    element must be strictly positive.
    """
    arr = np.asarray(x, dtype=np.float64)
    if np.any(~(arr > 0)):
        raise DomainError("bessel_k1 requires x > 0")
    flat = np.atleast_1d(arr)
    out = np.empty_like(flat)
    small = flat <= 2.0
    if small.any():
        out[small] = _k1_series(flat[small])
    if (~small).any():
        out[~small] = _k1_tail(flat[~small])
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def x_bessel_k1(x):
    """``x * K1(x)`` with the limit value 1 at ``x = 0``."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0):
        raise DomainError("x_bessel_k1 requires x >= 0")
    out = np.ones_like(arr, dtype=np.float64)
    pos = arr > 0
    if np.ndim(arr) == 0:
        return float(arr * bessel_k1(arr)) if pos else 1.0
    out[pos] = arr[pos] * bessel_k1(arr[pos])
    return out


# --------------------------------------------------------------------------
# finite differences


def finite_diff_gradient(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        orig = x.flat[i]
        x.flat[i] = orig + h
        f_plus = f(x)
        x.flat[i] = orig - h
        f_minus = f(x)
        x.flat[i] = orig
        grad.flat[i] = (f_plus - f_minus) / (2.0 * h)
    return grad
