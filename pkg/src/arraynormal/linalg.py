"""Symmetric positive-definite kernels and random-matrix samplers."""

from __future__ import annotations

from functools import cached_property, reduce
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import lapack, solve_triangular

__all__ = [
    "NotPositiveDefiniteError",
    "SpdMatrix",
    "RNG_ALGORITHM",
    "make_rng",
    "spawn_rngs",
    "cholesky",
    "solve_factor",
    "whiten",
    "logdet",
    "kron",
    "kron_list",
    "sym_eigen",
    "rinvwish",
    "rgamma",
    "rnorm_vec",
    "conditional_blocks",
]

SPD_RTOL = 1e-12
SYM_RTOL = 1e-12
RNG_ALGORITHM = "numpy.random.Generator(PCG64) seeded via SeedSequence"


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a Cholesky pivot falls below the SPD tolerance.

    ``pivot`` is the zero-based index of the offending pivot.
    """

    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


def make_rng(seed: int | np.random.SeedSequence | None) -> np.random.Generator:
    """Reproducible generator; identical seeds give identical streams."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent substreams for ``n`` parallel tasks."""
    return [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(seed).spawn(n)]


def cholesky(S: ArrayLike, ridge: float = 0.0) -> NDArray:
    """Lower Cholesky factor ``L`` with ``L @ L.T == S``.

    A pivot ``L_ii**2`` at or below ``1e-12 * max(diag(S))`` is rejected
    rather than regularized; pass ``ridge`` to add ``ridge * I`` first.
    """
    S = np.array(S, dtype=float, ndmin=2)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    scale = max(np.max(np.abs(S)), np.finfo(float).tiny)
    if np.max(np.abs(S - S.T)) > SYM_RTOL * scale * 10:
        raise ValueError("matrix is not symmetric")
    if ridge:
        S = S + ridge * np.eye(S.shape[0])
    L, info = lapack.dpotrf(S, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite (failed at pivot {info})", pivot=info - 1)
    if info < 0:
        raise ValueError(f"illegal argument to dpotrf (info={info})")
    tol = SPD_RTOL * max(np.max(np.diag(S)), 0.0)
    piv = np.diag(L) ** 2
    bad = np.flatnonzero(piv <= tol)
    if bad.size:
        raise NotPositiveDefiniteError(
            f"Cholesky pivot {bad[0]} is {piv[bad[0]]:.3g}, below tolerance {tol:.3g}",
            pivot=int(bad[0]))
    return L


def solve_factor(L: ArrayLike, B: ArrayLike) -> NDArray:
    """``L^{-1} B`` for a lower-triangular factor ``L``."""
    L = np.asarray(L)
    if np.any(np.diag(L) == 0):
        raise np.linalg.LinAlgError("singular triangular factor")
    return solve_triangular(L, B, lower=True)


class SpdMatrix:
    """A symmetric positive-definite matrix with its Cholesky factor cached.

    Instances are treated as immutable. The lower factor ``chol`` doubles
    as the square root used for whitening: ``whiten(X) = chol^{-1} X``.
    """

    def __init__(self, values: ArrayLike, ridge: float = 0.0):
        values = np.array(values, dtype=float, ndmin=2)
        values = 0.5 * (values + values.T)
        if ridge:
            values = values + ridge * np.eye(values.shape[0])
        self.values = values
        self.values.setflags(write=False)
        self.chol  # validate eagerly

    @classmethod
    def identity(cls, m: int) -> "SpdMatrix":
        return cls(np.eye(m))

    @classmethod
    def from_factor(cls, L: ArrayLike) -> "SpdMatrix":
        L = np.asarray(L, dtype=float)
        return cls(L @ L.T)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @cached_property
    def chol(self) -> NDArray:
        L = cholesky(self.values)
        L.setflags(write=False)
        return L

    @cached_property
    def chol_inv(self) -> NDArray:
        """``L^{-1}``, the whitening matrix."""
        return solve_factor(self.chol, np.eye(self.dim))

    @cached_property
    def inv(self) -> NDArray:
        Li = self.chol_inv
        return Li.T @ Li

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def trace(self) -> float:
        return float(np.trace(self.values))

    def whiten(self, X: ArrayLike) -> NDArray:
        return solve_factor(self.chol, X)

    def solve(self, B: ArrayLike) -> NDArray:
        return solve_triangular(self.chol.T, self.whiten(B), lower=False)

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.values, np.eye(self.dim)))

    def correlation(self) -> NDArray:
        d = np.sqrt(np.diag(self.values))
        return self.values / np.outer(d, d)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __repr__(self) -> str:
        return f"SpdMatrix(dim={self.dim})"


def _as_spd(S) -> SpdMatrix:
    return S if isinstance(S, SpdMatrix) else SpdMatrix(S)


def whiten(S, X: ArrayLike) -> NDArray:
    """``L^{-1} X`` where ``S = L L^T``."""
    return _as_spd(S).whiten(X)


def logdet(S) -> float:
    """``log|S|`` from the Cholesky diagonal."""
    return _as_spd(S).logdet()


def kron(A: ArrayLike, B: ArrayLike) -> NDArray:
    return np.kron(np.asarray(A, dtype=float), np.asarray(B, dtype=float))


def kron_list(mats: Sequence[ArrayLike]) -> NDArray:
    """``mats[0] (x) mats[1] (x) ...`` in the order given.

    For ``Cov(vec(Y))`` pass the components in reverse mode order.
    """
    if len(mats) == 0:
        raise ValueError("need at least one matrix")
    return reduce(kron, [np.atleast_2d(np.asarray(M, dtype=float)) for M in mats])


def sym_eigen(S: ArrayLike) -> tuple[NDArray, NDArray]:
    """Eigenvalues in descending order and matching orthonormal eigenvectors."""
    S = np.asarray(S, dtype=float)
    if np.max(np.abs(S - S.T)) > 1e-10 * max(np.max(np.abs(S)), 1.0):
        raise ValueError("matrix is not symmetric")
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    order = np.argsort(w)[::-1]
    return w[order], V[:, order]


def rinvwish(scale, nu: float, rng: np.random.Generator) -> SpdMatrix:
    """Draw from the inverse-Wishart with scale matrix ``scale`` and ``nu`` dof.

    The precision ``Sigma^{-1}`` is Wishart with scale ``scale^{-1}``, so
    ``E[Sigma] = scale / (nu - m - 1)``. Uses the Bartlett decomposition.
    """
    S = _as_spd(scale)
    m = S.dim
    if not nu > m - 1:
        raise ValueError(f"degrees of freedom {nu} must exceed dim - 1 = {m - 1}")
    A = np.zeros((m, m))
    A[np.diag_indices(m)] = np.sqrt(rng.chisquare(nu - np.arange(m)))
    il = np.tril_indices(m, -1)
    A[il] = rng.standard_normal(len(il[0]))
    # Sigma = (L A^{-T})(L A^{-T})^T with scale = L L^T
    X = solve_triangular(A, S.chol.T, lower=True).T
    return SpdMatrix(X @ X.T)


def rgamma(a: float, b: float, rng: np.random.Generator, size=None):
    """Gamma draw with shape ``a`` and rate ``b`` (mean ``a / b``)."""
    if not (a > 0 and b > 0):
        raise ValueError(f"gamma parameters must be positive, got a={a}, b={b}")
    return rng.gamma(a, 1.0 / b, size=size)


def rnorm_vec(n: int, rng: np.random.Generator) -> NDArray:
    return rng.standard_normal(n)


def conditional_blocks(S, a: Sequence[int], b: Sequence[int]) -> tuple[NDArray, NDArray]:
    """Regression matrix ``S[b,a] S[a,a]^{-1}`` and Schur complement ``S_{b|a}``.

    An empty ``a`` gives a zero regression and ``S[b,b]``.
    """
    S = np.asarray(S, dtype=float)
    a = [int(i) for i in a]
    b = [int(i) for i in b]
    if set(a) & set(b):
        raise ValueError("index sets a and b overlap")
    m = S.shape[0]
    for i in a + b:
        if not 0 <= i < m:
            raise ValueError(f"index {i} out of range for dimension {m}")
    Sbb = S[np.ix_(b, b)]
    if not a:
        return np.zeros((len(b), 0)), Sbb
    Saa = SpdMatrix(S[np.ix_(a, a)])
    Sba = S[np.ix_(b, a)]
    reg = Saa.solve(Sba.T).T
    schur = Sbb - reg @ Sba.T
    return reg, 0.5 * (schur + schur.T)
