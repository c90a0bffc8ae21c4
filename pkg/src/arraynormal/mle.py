"""Maximum likelihood for i.i.d. array normal samples (flip-flop iterations).

Samples are stacked along a trailing replication mode, so ``Ys`` has dims
``(m_1, ..., m_K, n)``. Covariances returned here have ``K`` components;
the replication mode always carries the identity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .distribution import ArrayNormal, SeparableCovariance, log_density, replicate
from .linalg import NotPositiveDefiniteError, SpdMatrix
from .tensor import tucker_product, unfold

__all__ = ["MleConfig", "MleResult", "mle_mean", "residuals", "flipflop_step",
           "normalize_scales", "fit_mle", "loglik"]

logger = logging.getLogger(__name__)


@dataclass
class MleConfig:
    max_iters: int = 1000
    rel_tol: float = 1e-8
    init: Literal["identity", "sample-moment"] = "identity"
    scale_norm: Literal["trace-per-mode", "first-mode-absorbs", "none"] = "trace-per-mode"
    ridge: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.init not in ("identity", "sample-moment"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.scale_norm not in ("trace-per-mode", "first-mode-absorbs", "none"):
            raise ValueError(f"unknown scale_norm {self.scale_norm!r}")


@dataclass
class MleResult:
    mean_hat: NDArray
    cov_hat: SeparableCovariance
    loglik_trace: list[float] = field(default_factory=list)
    converged: bool = False
    iters: int = 0

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1]


def _check_complete(Ys: NDArray):
    if np.isnan(Ys).any():
        raise ValueError("maximum likelihood requires complete data; found missing cells")


def mle_mean(Ys: ArrayLike, mask: ArrayLike | None = None) -> NDArray:
    """Average over the trailing replication mode.

    With a ``mask`` (True = missing), each cell is averaged over its observed
    replicates only.
    """
    Ys = np.asarray(Ys, dtype=float)
    if mask is None:
        return Ys.mean(axis=-1)
    mask = np.asarray(mask, dtype=bool)
    obs = ~mask
    counts = obs.sum(axis=-1)
    if np.any(counts == 0):
        raise ValueError("a cell is missing in every replicate")
    return np.where(obs, Ys, 0.0).sum(axis=-1) / counts


def residuals(Ys: NDArray, M: NDArray) -> NDArray:
    return Ys - M[..., None]


def flipflop_step(E: ArrayLike, Sigma: SeparableCovariance, k: int,
                  ridge: bool = False) -> SpdMatrix:
    """Conditional maximizer ``S_k / n_k`` of the likelihood in ``Sigma_k``.

    ``E`` is the residual array with the replication mode last; it is
    whitened along every mode except ``k`` and the replication mode.
    """
    E = np.asarray(E, dtype=float)
    if E.ndim != len(Sigma) + 1:
        raise ValueError("residual array must have one more mode than the covariance")
    Et = tucker_product(E, Sigma.whitening(skip=(k,)) + [None])
    Ek = unfold(Et, k)
    Sk = Ek @ Ek.T
    nk = Ek.shape[1]
    if ridge:
        Sk = Sk + 1e-8 * np.trace(Sk) / Sk.shape[0] * np.eye(Sk.shape[0])
    try:
        return SpdMatrix(Sk / nk)
    except NotPositiveDefiniteError as exc:
        raise NotPositiveDefiniteError(
            f"mode-{k + 1} scatter matrix is rank deficient: {exc}", pivot=exc.pivot) from exc


def normalize_scales(cov: SeparableCovariance, how: str = "trace-per-mode") -> SeparableCovariance:
    """Fix the scale gauge without changing ``Sigma_K (x) ... (x) Sigma_1``.

    ``trace-per-mode`` rescales every estimated mode after the first to
    ``tr(Sigma_k) = m_k``; ``first-mode-absorbs`` rescales them to unit
    determinant. The compensating factor goes into the first estimated mode.
    """
    if how == "none":
        return cov
    free = [k for k, f in enumerate(cov.identity_flags) if not f]
    if len(free) < 2:
        return cov
    first, rest = free[0], free[1:]
    total = 1.0
    for k in rest:
        Sk = cov.comps[k]
        if how == "trace-per-mode":
            c = Sk.dim / Sk.trace()
        elif how == "first-mode-absorbs":
            c = float(np.exp(-Sk.logdet() / Sk.dim))
        else:
            raise ValueError(f"unknown scale normalization {how!r}")
        cov = cov.scaled(k, c)
        total *= c
    return cov.scaled(first, 1.0 / total)


def loglik(Ys: ArrayLike, M: ArrayLike, Sigma: SeparableCovariance) -> float:
    """Log-likelihood of i.i.d. samples stacked along the trailing mode."""
    Ys = np.asarray(Ys, dtype=float)
    dist = ArrayNormal(np.asarray(M, dtype=float), Sigma)
    if Ys.shape[:-1] != dist.dims:
        raise ValueError(f"sample dims {Ys.shape[:-1]} do not match model dims {dist.dims}")
    return log_density(replicate(dist, Ys.shape[-1]), Ys)


def _initial_cov(E: NDArray, flags: Sequence[bool], init: str) -> SeparableCovariance:
    dims = E.shape[:-1]
    if init == "identity":
        return SeparableCovariance.identity(dims, flags)
    comps = []
    for k, (m, f) in enumerate(zip(dims, flags)):
        if f:
            comps.append(SpdMatrix.identity(m))
        else:
            Ek = unfold(E, k)
            comps.append(SpdMatrix(Ek @ Ek.T / Ek.shape[1]))
    return SeparableCovariance(tuple(comps), tuple(flags))


def fit_mle(Ys: ArrayLike, cfg: MleConfig | None = None,
            identity_modes: Sequence[int] = ()) -> MleResult:
    """Block coordinate ascent over the mode covariances.

    Modes are updated in order ``1..K`` each sweep. Stops when the relative
    change in log-likelihood over a sweep drops below ``cfg.rel_tol``; hitting
    ``max_iters`` leaves ``converged=False`` rather than raising.
    """
    cfg = cfg or MleConfig()
    Ys = np.asarray(Ys, dtype=float)
    if Ys.ndim < 2:
        raise ValueError("need at least one data mode plus the replication mode")
    _check_complete(Ys)
    dims, n = Ys.shape[:-1], Ys.shape[-1]
    flags = tuple(k in set(identity_modes) for k in range(len(dims)))
    m = int(np.prod(dims))
    for k, mk in enumerate(dims):
        nk = n * m // mk
        if not flags[k] and nk <= mk:
            raise ValueError(f"mode {k + 1}: sample size n_k={nk} does not exceed m_k={mk}")

    M = mle_mean(Ys)
    E = residuals(Ys, M)
    cov = _initial_cov(E, flags, cfg.init)
    trace = [loglik(Ys, M, cov)]
    converged = False
    it = 0
    free = [k for k in range(len(dims)) if not flags[k]]
    while it < cfg.max_iters and free:
        it += 1
        for k in free:
            cov = cov.replace(k, flipflop_step(E, cov, k, ridge=cfg.ridge))
        trace.append(loglik(Ys, M, cov))
        if abs(trace[-1] - trace[-2]) <= cfg.rel_tol * abs(trace[-2]):
            converged = True
            break
    if not free:
        converged = True
    if not converged:
        logger.warning("flip-flop did not converge in %d sweeps", cfg.max_iters)
    cov = normalize_scales(cov, cfg.scale_norm)
    return MleResult(M, cov, trace, converged, it)
