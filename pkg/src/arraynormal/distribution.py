"""Array normal distributions with separable covariance."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .linalg import SpdMatrix, conditional_blocks, kron_list
from .tensor import kmode_product, norm2, slice_mode, tucker_product

__all__ = [
    "COVARIANCE_VEC_CAP",
    "SeparableCovariance",
    "ArrayNormal",
    "covariance_vec",
    "push_mode",
    "replicate",
    "condition_mode",
    "log_density",
    "sample",
]

LOG_2PI = float(np.log(2.0 * np.pi))
COVARIANCE_VEC_CAP = 4096


@dataclass(frozen=True)
class SeparableCovariance:
    """Ordered per-mode covariance components ``Sigma_1 o ... o Sigma_K``.

    Modes flagged in ``identity_flags`` are held at the identity and are
    skipped by whitening and by estimation routines.
    """

    comps: tuple[SpdMatrix, ...]
    identity_flags: tuple[bool, ...] = ()

    def __post_init__(self):
        comps = tuple(c if isinstance(c, SpdMatrix) else SpdMatrix(c) for c in self.comps)
        flags = tuple(bool(f) for f in self.identity_flags) or (False,) * len(comps)
        if len(flags) != len(comps):
            raise ValueError("identity_flags must have one entry per component")
        for k, (c, f) in enumerate(zip(comps, flags)):
            if f and not c.is_identity():
                raise ValueError(f"mode {k} is flagged identity but its component is not I")
        object.__setattr__(self, "comps", comps)
        object.__setattr__(self, "identity_flags", flags)

    @classmethod
    def identity(cls, dims: Sequence[int], flags: Sequence[bool] | None = None):
        dims = tuple(int(d) for d in dims)
        return cls(tuple(SpdMatrix.identity(d) for d in dims),
                   tuple(flags) if flags is not None else (False,) * len(dims))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(c.dim for c in self.comps)

    @property
    def order(self) -> int:
        return len(self.comps)

    def __len__(self) -> int:
        return len(self.comps)

    def __getitem__(self, k: int) -> SpdMatrix:
        return self.comps[k]

    def replace(self, k: int, comp) -> "SeparableCovariance":
        comps = list(self.comps)
        comps[k] = comp if isinstance(comp, SpdMatrix) else SpdMatrix(comp)
        return SeparableCovariance(tuple(comps), self.identity_flags)

    def scaled(self, k: int, c: float) -> "SeparableCovariance":
        return self.replace(k, SpdMatrix(c * self.comps[k].values))

    def whitening(self, skip: Sequence[int] = ()) -> list[NDArray | None]:
        """Matrix list ``{L_1^{-1}, ..., L_K^{-1}}`` with ``None`` at skipped or identity modes."""
        return [None if (k in skip or f) else c.chol_inv
                for k, (c, f) in enumerate(zip(self.comps, self.identity_flags))]

    def factors(self) -> list[NDArray | None]:
        return [None if f else c.chol for c, f in zip(self.comps, self.identity_flags)]

    def precisions(self) -> list[NDArray | None]:
        return [None if f else c.inv for c, f in zip(self.comps, self.identity_flags)]

    def logdet_terms(self) -> float:
        """``log|Sigma_K (x) ... (x) Sigma_1| = sum_k (m/m_k) log|Sigma_k|``."""
        m = int(np.prod(self.dims))
        return sum((m // c.dim) * c.logdet()
                   for c, f in zip(self.comps, self.identity_flags) if not f)

    def traces(self) -> list[float]:
        return [c.trace() for c in self.comps]

    def total_variance(self) -> float:
        """``tr(Sigma_K (x) ... (x) Sigma_1) = prod_k tr(Sigma_k)``."""
        return float(np.prod(self.traces()))


@dataclass(frozen=True)
class ArrayNormal:
    """``anorm(M, Sigma_1 o ... o Sigma_K)``."""

    mean: NDArray
    cov: SeparableCovariance

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        if mean.shape != self.cov.dims:
            raise ValueError(f"mean dims {mean.shape} do not match covariance dims {self.cov.dims}")
        object.__setattr__(self, "mean", mean)

    @classmethod
    def standard(cls, dims: Sequence[int]) -> "ArrayNormal":
        return cls(np.zeros(tuple(dims)), SeparableCovariance.identity(dims))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.cov.dims

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def log_density(self, Y: ArrayLike) -> float:
        return log_density(self, Y)

    def sample(self, rng: np.random.Generator) -> NDArray:
        return sample(self, rng)


def log_density(dist: ArrayNormal, Y: ArrayLike) -> float:
    """Exact log-density via the whitened Tucker product."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape != dist.dims:
        raise ValueError(f"array dims {Y.shape} do not match distribution dims {dist.dims}")
    if np.isnan(Y).any():
        raise ValueError("array has missing entries; impute them first")
    Z = tucker_product(Y - dist.mean, dist.cov.whitening())
    return -0.5 * dist.size * LOG_2PI - 0.5 * dist.cov.logdet_terms() - 0.5 * norm2(Z)


def sample(dist: ArrayNormal, rng: np.random.Generator) -> NDArray:
    """``M + Z x {L_1, ..., L_K}`` with ``Z`` standard normal in storage order."""
    Z = rng.standard_normal(dist.size).reshape(dist.dims, order="F")
    return dist.mean + tucker_product(Z, dist.cov.factors())


def covariance_vec(cov: SeparableCovariance, cap: int = COVARIANCE_VEC_CAP) -> NDArray:
    """Dense ``Cov(vec(Y)) = Sigma_K (x) ... (x) Sigma_1``; small problems only."""
    m = int(np.prod(cov.dims))
    if m > cap:
        raise ValueError(f"array has {m} cells, above the dense covariance cap of {cap}")
    return kron_list([c.values for c in reversed(cov.comps)])


def push_mode(cov: SeparableCovariance, G: ArrayLike, k: int) -> SeparableCovariance:
    """Covariance of ``Y x_k G`` when ``Cov(Y) = cov``: component ``k`` becomes ``G Sigma_k G^T``."""
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[1] != cov.comps[k].dim:
        raise ValueError(f"matrix of shape {G.shape} does not conform to mode {k}")
    comps = list(cov.comps)
    comps[k] = SpdMatrix(G @ comps[k].values @ G.T)
    flags = list(cov.identity_flags)
    flags[k] = False
    return SeparableCovariance(tuple(comps), tuple(flags))


def replicate(dist: ArrayNormal, n: int) -> ArrayNormal:
    """Distribution of ``n`` i.i.d. draws stacked along a new trailing mode."""
    if n < 1:
        raise ValueError("n must be at least 1")
    mean = np.repeat(dist.mean[..., None], n, axis=-1)
    cov = SeparableCovariance(dist.cov.comps + (SpdMatrix.identity(n),),
                              dist.cov.identity_flags + (True,))
    return ArrayNormal(mean, cov)


def condition_mode(dist: ArrayNormal, k: int, a: Sequence[int], Ya: ArrayLike,
                   b: Sequence[int]) -> ArrayNormal:
    """Conditional law of the mode-``k`` slices ``b`` given observed slices ``a``.

    The result is array normal with mean
    ``M_b + (Y_a - M_a) x_k (Sigma_k[b,a] Sigma_k[a,a]^{-1})`` and with
    ``Sigma_k`` replaced by its Schur complement; the slice order within
    the result follows the order of ``b``.
    """
    a = [int(i) for i in a]
    b = [int(i) for i in b]
    if set(a) & set(b):
        raise ValueError("index sets a and b overlap")
    Sk = dist.cov.comps[k].values
    reg, schur = conditional_blocks(Sk, a, b)
    Mb = slice_mode(dist.mean, k, b)
    if a:
        Ya = np.asarray(Ya, dtype=float)
        Ma = slice_mode(dist.mean, k, a)
        if Ya.shape != Ma.shape:
            raise ValueError(f"observed slices have dims {Ya.shape}, expected {Ma.shape}")
        if np.isnan(Ya).any():
            raise ValueError("observed slices contain missing values")
        Mb = Mb + kmode_product(Ya - Ma, reg, k)
    comps = list(dist.cov.comps)
    comps[k] = SpdMatrix(schur)
    # the Schur complement of an identity block is again an identity
    return ArrayNormal(Mb, SeparableCovariance(tuple(comps), dist.cov.identity_flags))

