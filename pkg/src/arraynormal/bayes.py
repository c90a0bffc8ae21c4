"""Semiconjugate Gibbs sampling for the array normal model.

Data arrays have dims ``(m_1, ..., m_p, n)`` with the replication mode last.
The mean ``M`` has dims ``(m_1, ..., m_p)`` and the covariance always has
``p + 1`` components so that it describes the whole data array:

* i.i.d. replication: the last component is an identity-flagged ``I_n``;
* dependent replication (``dependent_last_mode=True``): the last component
  is an estimated ``n x n`` covariance, e.g. temporal correlation.

Priors are ``M | Sigma ~ anorm(M0, Sigma_1 o ... o Sigma_p / kappa0)`` and
``Sigma_k ~ inverse-Wishart`` with scale ``gamma * Sigma0_k`` and ``nu0_k``
degrees of freedom, where the inverse-Wishart is parameterized by its scale
matrix so that ``E[Sigma_k] = gamma * Sigma0_k / (nu0_k - m_k - 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .distribution import ArrayNormal, SeparableCovariance, covariance_vec, log_density
from .linalg import SpdMatrix, make_rng, rgamma, rinvwish, RNG_ALGORITHM
from .tensor import kmode_product, tucker_product, unfold

__all__ = [
    "PriorSpec",
    "GibbsConfig",
    "GibbsState",
    "Chain",
    "SamplerError",
    "empirical_gamma",
    "m_conditional_iid",
    "m_conditional_dep",
    "sample_M_iid",
    "sample_M_dep",
    "sigma_conditional_iid",
    "sigma_conditional_dep",
    "sample_Sigma_k_iid",
    "sample_Sigma_k_dep",
    "gamma_conditional",
    "sample_gamma",
    "cell_conditionals",
    "impute_missing",
    "initial_state",
    "gibbs_step",
    "run_gibbs",
]

class SamplerError(RuntimeError):
    """A full-conditional step failed; ``iteration`` is 1-based."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass
class PriorSpec:
    """Hyperparameters. Per-mode entries cover every mode of the data array."""

    M0: NDArray
    Sigma0: tuple[NDArray, ...]
    nu0: tuple[float, ...]
    identity_flags: tuple[bool, ...]
    kappa0: float = 1.0
    gamma: float | None = None
    gamma_prior: tuple[float, float] | None = None

    def __post_init__(self):
        self.M0 = np.asarray(self.M0, dtype=float)
        self.Sigma0 = tuple(np.array(S, dtype=float, ndmin=2) for S in self.Sigma0)
        self.nu0 = tuple(float(v) for v in self.nu0)
        self.identity_flags = tuple(bool(f) for f in self.identity_flags)
        K = len(self.identity_flags)
        if not (len(self.Sigma0) == len(self.nu0) == K):
            raise ValueError("Sigma0, nu0 and identity_flags need one entry per data mode")
        if self.M0.shape != self.dims[:-1]:
            raise ValueError(f"M0 dims {self.M0.shape} do not match the mean dims {self.dims[:-1]}")
        if not self.kappa0 > 0:
            raise ValueError("kappa0 must be positive")
        for k, (S, nu, f) in enumerate(zip(self.Sigma0, self.nu0, self.identity_flags)):
            if f:
                continue
            SpdMatrix(S)
            if not nu > S.shape[0] + 1:
                raise ValueError(f"mode {k + 1}: nu0={nu} must exceed m_k + 1 = {S.shape[0] + 1}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.gamma_prior is not None:
            a, b = self.gamma_prior
            if not (a > 0 and b > 0):
                raise ValueError("gamma prior parameters must be positive")
            if self.gamma is not None:
                raise ValueError("give either a fixed gamma or a gamma prior, not both")

    @classmethod
    def default(cls, dims: Sequence[int], identity_modes: Sequence[int] = (),
                dependent_last_mode: bool = False, kappa0: float = 1.0,
                gamma: float | None = None,
                gamma_prior: tuple[float, float] | None = None) -> "PriorSpec":
        """``Sigma0_k = I/m_k``, ``nu0_k = m_k + 2`` and ``M0 = 0``.

        ``dims`` are the full data dims including the replication mode.
        """
        dims = tuple(int(d) for d in dims)
        flags = [k in set(identity_modes) for k in range(len(dims))]
        if not dependent_last_mode:
            flags[-1] = True
        return cls(M0=np.zeros(dims[:-1]),
                   Sigma0=tuple(np.eye(m) / m for m in dims),
                   nu0=tuple(m + 2.0 for m in dims),
                   identity_flags=tuple(flags), kappa0=kappa0,
                   gamma=gamma, gamma_prior=gamma_prior)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(S.shape[0] for S in self.Sigma0)

    @property
    def dependent_last_mode(self) -> bool:
        return not self.identity_flags[-1]

    @property
    def free_modes(self) -> list[int]:
        return [k for k, f in enumerate(self.identity_flags) if not f]


@dataclass
class GibbsConfig:
    n_iters: int = 5000
    burn_in: int = 1000
    thin: int = 4
    seed: int = 0
    dependent_last_mode: bool = False

    def __post_init__(self):
        if self.n_iters < 1 or self.burn_in < 0 or self.thin < 1:
            raise ValueError("need n_iters >= 1, burn_in >= 0 and thin >= 1")
        if self.burn_in >= self.n_iters:
            raise ValueError("burn_in must be smaller than n_iters")

    @property
    def n_saved(self) -> int:
        return (self.n_iters - self.burn_in) // self.thin


@dataclass
class GibbsState:
    """``Y`` is the data array with the current imputations filled in."""

    M: NDArray
    Sigma: SeparableCovariance
    gamma: float
    Y: NDArray
    iter: int = 0


@dataclass
class Chain:
    """Thinned draws and scalar traces.

    ``Sigma`` maps each estimated mode (zero-based) to an array of draws of
    shape ``(S, m_k, m_k)``. ``gamma_k`` has one column per data mode, and
    ``gamma0`` is their row product.
    """

    M: NDArray
    Sigma: dict[int, NDArray]
    gamma: NDArray
    gamma0: NDArray
    gamma_k: NDArray
    loglik: NDArray
    dims: tuple[int, ...]
    identity_flags: tuple[bool, ...]
    imputed_mean: NDArray | None = None
    mask: NDArray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.gamma)

    @property
    def dependent_last_mode(self) -> bool:
        return not self.identity_flags[-1]

    def covariance(self, s: int) -> SeparableCovariance:
        comps = [SpdMatrix(self.Sigma[k][s]) if k in self.Sigma else SpdMatrix.identity(m)
                 for k, m in enumerate(self.dims)]
        return SeparableCovariance(tuple(comps), self.identity_flags)

    def state(self, s: int) -> GibbsState:
        """Saved state ``s``; ``Y`` holds the chain-averaged imputations, if any."""
        iters = self.meta.get("saved_iters") or [0] * len(self)
        return GibbsState(self.M[s], self.covariance(s), float(self.gamma[s]),
                          self.imputed_mean, iter=int(iters[s]))

    def posterior_mean_covariance_vec(self) -> NDArray:
        """Posterior mean of the identified ``Sigma_K (x) ... (x) Sigma_1``."""
        total = None
        for s in range(len(self)):
            C = covariance_vec(self.covariance(s))
            total = C if total is None else total + C
        return total / len(self)


# --------------------------------------------------------------------------
# helpers

def _full_mean(M: NDArray, n: int) -> NDArray:
    return np.repeat(M[..., None], n, axis=-1)


def _observed_mean(Y: NDArray, mask: NDArray | None) -> NDArray:
    """Replicate mean over observed cells; NaN where a cell is never observed."""
    if mask is None:
        return Y.mean(axis=-1)
    obs = ~mask
    counts = obs.sum(axis=-1)
    total = np.where(obs, Y, 0.0).sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, total / np.maximum(counts, 1), np.nan)


def empirical_gamma(Y: ArrayLike, identity_flags: Sequence[bool],
                    mask: ArrayLike | None = None) -> float:
    """Data-based ``gamma``.

    Solves ``gamma^K_est * prod(m_k over identity modes) = ||Y - Ybar o 1||^2``
    so the prior centers the total variation at the observed value. The norm
    runs over observed cells and is scaled by ``m / #observed``.
    """
    Y = np.asarray(Y, dtype=float)
    mask = None if mask is None else np.asarray(mask, dtype=bool)
    Ybar = _observed_mean(Y, mask)
    E = Y - Ybar[..., None]
    obs = np.isfinite(E) if mask is None else (~mask & np.isfinite(E))
    ss = float(np.sum(E[obs] ** 2)) * Y.size / max(int(obs.sum()), 1)
    fixed = float(np.prod([m for m, f in zip(Y.shape, identity_flags) if f]))
    K_est = sum(1 for f in identity_flags if not f)
    if K_est == 0:
        return 1.0
    return (ss / fixed) ** (1.0 / K_est)


def _prior_gamma(prior: PriorSpec, Y: NDArray, mask: NDArray | None) -> float:
    if prior.gamma is not None:
        return prior.gamma
    return empirical_gamma(Y, prior.identity_flags, mask)


# --------------------------------------------------------------------------
# full conditionals for M

def m_conditional_iid(Y: ArrayLike, Sigma: SeparableCovariance,
                      prior: PriorSpec) -> tuple[NDArray, float]:
    """Mean and precision weight of ``M | Y, Sigma`` under i.i.d. replication.

    ``M | Y, Sigma ~ anorm(mean, Sigma_1 o ... o Sigma_p / weight)`` with
    ``mean = (kappa0 M0 + n Ybar)/(kappa0 + n)`` and ``weight = kappa0 + n``.
    """
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[-1]
    w = prior.kappa0 + n
    return (prior.kappa0 * prior.M0 + n * Y.mean(axis=-1)) / w, w


def m_conditional_dep(Y: ArrayLike, Sigma: SeparableCovariance,
                      prior: PriorSpec) -> tuple[NDArray, float]:
    """Mean and precision weight of ``M | Y, Sigma`` with a dependent last mode.

    With ``Ytil = Y x_K L_K^{-1}`` and ``c = L_K^{-1} 1`` the mean is
    ``(kappa0 M0 + sum_i c_i Ytil_i) / (kappa0 + sum_i c_i^2)``.
    """
    Y = np.asarray(Y, dtype=float)
    K = Y.ndim - 1
    Linv = Sigma.comps[-1].chol_inv
    c = Linv @ np.ones(Y.shape[-1])
    Yt = kmode_product(Y, Linv, K)
    w = prior.kappa0 + float(c @ c)
    mean = (prior.kappa0 * prior.M0 + np.tensordot(Yt, c, axes=([K], [0]))) / w
    return mean, w


def _draw_M(mean: NDArray, Sigma: SeparableCovariance, weight: float,
            rng: np.random.Generator) -> NDArray:
    Z = rng.standard_normal(mean.size).reshape(mean.shape, order="F")
    factors = Sigma.factors()[:-1]
    return mean + tucker_product(Z, factors) / np.sqrt(weight)


def sample_M_iid(Y, Sigma, prior, rng) -> NDArray:
    mean, w = m_conditional_iid(Y, Sigma, prior)
    return _draw_M(mean, Sigma, w, rng)


def sample_M_dep(Y, Sigma, prior, rng) -> NDArray:
    mean, w = m_conditional_dep(Y, Sigma, prior)
    return _draw_M(mean, Sigma, w, rng)


# --------------------------------------------------------------------------
# full conditionals for Sigma_k

def _scatter(A: NDArray, Sigma_list: list, k: int) -> NDArray:
    At = tucker_product(A, Sigma_list)
    Ak = unfold(At, k)
    return Ak @ Ak.T


def sigma_conditional_iid(Y: ArrayLike, Sigma: SeparableCovariance, prior: PriorSpec,
                          k: int, gamma: float) -> tuple[NDArray, float]:
    """Scale and dof of ``Sigma_k | Y, Sigma_{-k}`` with ``M`` integrated out.

    scale ``= gamma Sigma0_k + S_k + R_(k) R_(k)^T`` and dof ``= nu0_k + n_k``,
    where ``S_k`` is the scatter of ``Y - Ybar o 1`` standardized on every
    other mode and ``R = sqrt(kappa0 n / (kappa0 + n)) (Ybar - M0)`` likewise.
    """
    Y = np.asarray(Y, dtype=float)
    p, n = Y.ndim - 1, Y.shape[-1]
    if k >= p:
        raise ValueError("the replication mode has no covariance under i.i.d. replication")
    Ybar = Y.mean(axis=-1)
    W = Sigma.whitening(skip=(k,))
    Sk = _scatter(Y - Ybar[..., None], W[:-1] + [None], k)
    R = np.sqrt(prior.kappa0 * n / (prior.kappa0 + n)) * (Ybar - prior.M0)
    RR = _scatter(R, W[:-1], k)
    m = int(np.prod(Y.shape[:-1]))
    nk = n * m // Y.shape[k]
    return gamma * prior.Sigma0[k] + Sk + RR, prior.nu0[k] + nk


def sigma_conditional_dep(Y: ArrayLike, M: ArrayLike, Sigma: SeparableCovariance,
                          prior: PriorSpec, k: int, gamma: float) -> tuple[NDArray, float]:
    """Scale and dof of ``Sigma_k | Y, M, Sigma_{-k}`` with a dependent last mode.

    For a mean mode ``k``: scale ``= gamma Sigma0_k + E_(k) E_(k)^T + R_(k) R_(k)^T``
    and dof ``= nu0_k + n_k (1 + 1/n)``, with ``E`` the residual ``Y - M o 1``
    standardized on every mode but ``k`` (the dependent mode included) and
    ``R = sqrt(kappa0) (M - M0)`` standardized likewise. ``M`` carries no
    replication mode, so for ``k`` equal to that mode the ``R`` term and its
    ``n_k / n`` degrees of freedom drop out.
    """
    Y = np.asarray(Y, dtype=float)
    M = np.asarray(M, dtype=float)
    p, n = Y.ndim - 1, Y.shape[-1]
    W = Sigma.whitening(skip=(k,))
    Ek = _scatter(Y - M[..., None], W, k)
    nk = Y.size // Y.shape[k]
    scale = gamma * prior.Sigma0[k] + Ek
    dof = prior.nu0[k] + nk
    if k < p:
        R = np.sqrt(prior.kappa0) * (M - prior.M0)
        scale = scale + _scatter(R, W[:-1], k)
        dof += nk // n
    return scale, dof


def sample_Sigma_k_iid(Y, Sigma, prior, k, gamma, rng) -> SpdMatrix:
    scale, dof = sigma_conditional_iid(Y, Sigma, prior, k, gamma)
    return rinvwish(scale, dof, rng)


def sample_Sigma_k_dep(Y, M, Sigma, prior, k, gamma, rng) -> SpdMatrix:
    scale, dof = sigma_conditional_dep(Y, M, Sigma, prior, k, gamma)
    return rinvwish(scale, dof, rng)


# --------------------------------------------------------------------------
# gamma

def gamma_conditional(Sigma: SeparableCovariance, prior: PriorSpec) -> tuple[float, float]:
    """Shape ``a + sum nu0_k m_k / 2`` and rate ``b + sum tr(Sigma_k^{-1} Sigma0_k) / 2``.

    Sums run over estimated modes only.
    """
    if prior.gamma_prior is None:
        raise ValueError("gamma is fixed; no gamma prior was given")
    a, b = prior.gamma_prior
    for k in prior.free_modes:
        a += prior.nu0[k] * Sigma.comps[k].dim / 2.0
        b += float(np.sum(Sigma.comps[k].inv * prior.Sigma0[k])) / 2.0
    return a, b


def sample_gamma(Sigma: SeparableCovariance, prior: PriorSpec, rng) -> float:
    a, b = gamma_conditional(Sigma, prior)
    return float(rgamma(a, b, rng))


# --------------------------------------------------------------------------
# missing data

def _precision_columns(P: list, idx: tuple[int, ...], dims) -> list[NDArray]:
    cols = []
    for k, i in enumerate(idx):
        if P[k] is None:
            e = np.zeros(dims[k])
            e[i] = 1.0
            cols.append(e)
        else:
            cols.append(P[k][:, i])
    return cols


def _missing_cells(mask: NDArray) -> list[tuple[int, ...]]:
    flat = np.flatnonzero(mask.ravel(order="F"))
    return list(zip(*(ix.tolist() for ix in np.unravel_index(flat, mask.shape, order="F"))))


def cell_conditionals(Y: ArrayLike, mean: ArrayLike, Sigma: SeparableCovariance,
                      cells: Sequence[tuple[int, ...]]) -> tuple[NDArray, NDArray]:
    """Conditional mean and variance of each cell given all other cells.

    Uses precision ``q_ii = prod_k (Sigma_k^{-1})[i_k, i_k]`` and
    ``w = (Y - mean) x {Sigma_1^{-1}, ..., Sigma_K^{-1}}``.
    """
    Y = np.asarray(Y, dtype=float)
    E = Y - np.asarray(mean, dtype=float)
    P = Sigma.precisions()
    W = tucker_product(E, P)
    mus, vars_ = [], []
    for idx in cells:
        q = float(np.prod([1.0 if P[k] is None else P[k][i, i] for k, i in enumerate(idx)]))
        mus.append(mean[idx] + E[idx] - W[idx] / q)
        vars_.append(1.0 / q)
    return np.array(mus), np.array(vars_)


def impute_missing(Y: ArrayLike, mask: ArrayLike, mean: ArrayLike,
                   Sigma: SeparableCovariance, rng: np.random.Generator) -> NDArray:
    """Single-site Gibbs sweep over masked cells in storage order.

    ``mean`` is the full-array mean (``M o 1``). Returns a new array.
    """
    Y = np.array(Y, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    cells = _missing_cells(mask)
    if not cells:
        return Y
    mean = np.asarray(mean, dtype=float)
    P = Sigma.precisions()
    dims = Y.shape
    E = Y - mean
    W = tucker_product(E, P)
    z = rng.standard_normal(len(cells))
    for j, idx in enumerate(cells):
        cols = _precision_columns(P, idx, dims)
        q = float(np.prod([c[i] for c, i in zip(cols, idx)]))
        e_old = E[idx]
        e_new = e_old - W[idx] / q + z[j] / np.sqrt(q)
        delta = e_new - e_old
        E[idx] = e_new
        W += delta * reduce(np.multiply.outer, cols)
    return np.where(mask, mean + E, Y)


# --------------------------------------------------------------------------
# the sampler

def _complete_loglik(Y: NDArray, M: NDArray, Sigma: SeparableCovariance) -> float:
    return log_density(ArrayNormal(_full_mean(M, Y.shape[-1]), Sigma), Y)


def initial_state(Y: ArrayLike, prior: PriorSpec, mask: ArrayLike | None = None) -> GibbsState:
    """Imputations at replicate means, ``M = Ybar``, ``Sigma_k = gamma I / m_k``."""
    Y = np.array(Y, dtype=float)
    mask = None if mask is None else np.asarray(mask, dtype=bool)
    gamma = _prior_gamma(prior, Y, mask)
    if mask is not None and mask.any():
        Ybar = _observed_mean(Y, mask)
        Ybar = np.where(np.isnan(Ybar), np.nanmean(Y[~mask]), Ybar)
        Y = np.where(mask, Ybar[..., None], Y)
    comps = tuple(SpdMatrix.identity(m) if f else SpdMatrix(gamma * np.eye(m) / m)
                  for m, f in zip(Y.shape, prior.identity_flags))
    Sigma = SeparableCovariance(comps, prior.identity_flags)
    return GibbsState(Y.mean(axis=-1), Sigma, gamma, Y, iter=0)


def gibbs_step(state: GibbsState, prior: PriorSpec, rng: np.random.Generator,
               mask: NDArray | None = None) -> GibbsState:
    """One systematic scan: impute, each estimated ``Sigma_k``, ``M``, ``gamma``.

    In the i.i.d. case the ``Sigma_k`` updates integrate ``M`` out, so ``M``
    is redrawn right after them, before anything conditions on it.
    """
    dependent = prior.dependent_last_mode
    Y, M, Sigma, gamma = state.Y, state.M, state.Sigma, state.gamma
    n = Y.shape[-1]
    if mask is not None and mask.any():
        Y = impute_missing(Y, mask, _full_mean(M, n), Sigma, rng)
    for k in prior.free_modes:
        if dependent:
            Sigma = Sigma.replace(k, sample_Sigma_k_dep(Y, M, Sigma, prior, k, gamma, rng))
        else:
            Sigma = Sigma.replace(k, sample_Sigma_k_iid(Y, Sigma, prior, k, gamma, rng))
    M = sample_M_dep(Y, Sigma, prior, rng) if dependent else sample_M_iid(Y, Sigma, prior, rng)
    if prior.gamma_prior is not None:
        gamma = sample_gamma(Sigma, prior, rng)
    return GibbsState(M, Sigma, gamma, Y, state.iter + 1)


def run_gibbs(Y: ArrayLike, prior: PriorSpec, cfg: GibbsConfig,
              mask: ArrayLike | None = None, rng: np.random.Generator | None = None) -> Chain:
    """Run a single chain and keep every ``thin``-th state after burn-in."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape != prior.dims:
        raise ValueError(f"data dims {Y.shape} do not match prior dims {prior.dims}")
    if cfg.dependent_last_mode != prior.dependent_last_mode:
        raise ValueError("dependent_last_mode in the config disagrees with the prior's flags")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != Y.shape:
            raise ValueError("mask must have the same dims as the data")
        if not mask.any():
            mask = None
    if mask is None and np.isnan(Y).any():
        raise ValueError("data has NaN cells but no mask")
    rng = rng if rng is not None else make_rng(cfg.seed)

    state = initial_state(Y, prior, mask)
    S = cfg.n_saved
    free = prior.free_modes
    Ms = np.empty((S,) + state.M.shape)
    Sig = {k: np.empty((S, Y.shape[k], Y.shape[k])) for k in free}
    gam = np.empty(S)
    gk = np.empty((S, Y.ndim))
    ll = np.empty(S)
    imputed_sum = np.zeros(Y.shape) if mask is not None else None
    saved_iters = []
    s = 0
    for t in range(1, cfg.n_iters + 1):
        try:
            state = gibbs_step(state, prior, rng, mask)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SamplerError(str(exc), t) from exc
        if t > cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0 and s < S:
            Ms[s] = state.M
            for k in free:
                Sig[k][s] = state.Sigma.comps[k].values
            gam[s] = state.gamma
            gk[s] = state.Sigma.traces()
            ll[s] = _complete_loglik(state.Y, state.M, state.Sigma)
            if imputed_sum is not None:
                imputed_sum += state.Y
            saved_iters.append(t)
            s += 1
    imputed = None if imputed_sum is None else np.where(mask, imputed_sum / max(S, 1), Y)
    meta = {"seed": cfg.seed, "n_iters": cfg.n_iters, "burn_in": cfg.burn_in,
            "thin": cfg.thin, "dependent_last_mode": cfg.dependent_last_mode,
            "rng": RNG_ALGORITHM, "saved_iters": saved_iters}
    return Chain(M=Ms, Sigma=Sig, gamma=gam, gamma0=np.prod(gk, axis=1), gamma_k=gk,
                 loglik=ll, dims=Y.shape, identity_flags=prior.identity_flags,
                 imputed_mean=imputed,
                 mask=mask, meta=meta)
