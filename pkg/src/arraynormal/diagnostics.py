"""Chain and model-fit diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .bayes import Chain
from .distribution import ArrayNormal, sample
from .linalg import NotPositiveDefiniteError, SpdMatrix, sym_eigen
from .tensor import unfold

__all__ = ["PpcReport", "t_stat", "predictive_indices", "posterior_predictive",
           "observed_array", "ppc", "autocorrelation", "ess", "correlation_summary"]


@dataclass
class PpcReport:
    """Posterior predictive check for one mode statistic.

    ``tail_probability`` is the fraction of predictive draws at or below the
    observed value. The statistic peaks (at 0) when the scaled scatter is a
    scaled identity, so structure the model misses shows up as a small lower
    tail. ``upper_tail`` is the complementary fraction at or above it.
    """

    mode: int
    observed: float
    predictive: NDArray
    tail_probability: float
    upper_tail: float
    interval: tuple[float, float]

    def __post_init__(self):
        if self.predictive.size == 0:
            raise ValueError("empty predictive sample")


def t_stat(Y: ArrayLike, k: int) -> float:
    """``log|S_k / tr(S_k)| + m_k log m_k`` for the replicate-centered data.

    ``Y`` has its replication mode last; the center is the replicate mean.
    Equals 0 exactly when the scaled mode-``k`` scatter is ``I / m_k`` and is
    negative otherwise.
    """
    Y = np.asarray(Y, dtype=float)
    if np.isnan(Y).any():
        raise ValueError("fill missing cells before computing the statistic")
    E = Y - Y.mean(axis=-1, keepdims=True)
    Ek = unfold(E, k)
    S = Ek @ Ek.T
    tr = np.trace(S)
    if not tr > 0:
        raise NotPositiveDefiniteError(f"mode-{k + 1} scatter is zero")
    St = S / tr
    try:
        ld = SpdMatrix(St).logdet()
    except NotPositiveDefiniteError as exc:
        raise NotPositiveDefiniteError(
            f"mode-{k + 1} scaled scatter is singular; statistic is -inf", pivot=exc.pivot) from exc
    m = S.shape[0]
    return ld + m * np.log(m)


def predictive_indices(n_states: int, n_draws: int) -> NDArray:
    """Evenly spaced saved-state indices."""
    if n_states < 1:
        raise ValueError("chain is empty")
    return np.linspace(0, n_states - 1, n_draws).round().astype(int)


def posterior_predictive(chain: Chain, n_draws: int,
                         rng: np.random.Generator) -> Iterator[NDArray]:
    """Yield datasets simulated at evenly spaced saved states.

    Each draw is ``M o 1 + E`` with ``E`` array normal under the full-array
    covariance of that state, so a dependent replication mode is respected.
    """
    n = chain.dims[-1]
    for s in predictive_indices(len(chain), n_draws):
        mean = np.repeat(chain.M[s][..., None], n, axis=-1)
        yield sample(ArrayNormal(mean, chain.covariance(s)), rng)


def observed_array(Y: ArrayLike, chain: Chain, mask: ArrayLike | None = None) -> NDArray:
    """The data with missing cells replaced by their chain-averaged imputations."""
    Y = np.asarray(Y, dtype=float)
    mask = chain.mask if mask is None else np.asarray(mask, dtype=bool)
    if mask is None or not mask.any():
        return Y
    if chain.imputed_mean is None:
        raise ValueError("chain carries no imputations for the missing cells")
    return np.where(mask, chain.imputed_mean, Y)


def ppc(Y: ArrayLike, chain: Chain, modes: Sequence[int], n_draws: int,
        rng: np.random.Generator, mask: ArrayLike | None = None,
        level: float = 0.95) -> list[PpcReport]:
    """Compare observed ``t_k`` with its posterior predictive distribution."""
    Yobs = observed_array(Y, chain, mask)
    observed = {k: t_stat(Yobs, k) for k in modes}
    draws = {k: [] for k in modes}
    for Yrep in posterior_predictive(chain, n_draws, rng):
        for k in modes:
            draws[k].append(t_stat(Yrep, k))
    lo, hi = (1 - level) / 2, 1 - (1 - level) / 2
    reports = []
    for k in modes:
        pred = np.asarray(draws[k])
        reports.append(PpcReport(
            mode=k, observed=observed[k], predictive=pred,
            tail_probability=float(np.mean(pred <= observed[k])),
            upper_tail=float(np.mean(pred >= observed[k])),
            interval=(float(np.quantile(pred, lo)), float(np.quantile(pred, hi)))))
    return reports


def autocorrelation(x: ArrayLike) -> NDArray:
    """Sample autocorrelations at lags ``0..N-1`` (FFT, biased normalization)."""
    x = np.asarray(x, dtype=float)
    N = x.size
    d = x - x.mean()
    nfft = 1 << (2 * N - 1).bit_length()
    f = np.fft.rfft(d, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:N] / N
    if not acov[0] > 0:
        raise ValueError("trace has zero variance")
    return acov / acov[0]


def ess(trace: ArrayLike) -> float:
    """Effective sample size with initial-positive-sequence truncation.

    ``N / (1 + 2 sum_l rho_l)`` where the sum stops before the first pair
    ``rho_{2j} + rho_{2j+1}`` that is not positive. Capped at ``N``.
    """
    x = np.asarray(trace, dtype=float).ravel()
    N = x.size
    if N < 10:
        raise ValueError("need at least 10 draws")
    if np.ptp(x) == 0:
        raise ValueError("trace has zero variance")
    rho = autocorrelation(x)
    npairs = N // 2
    pairs = rho[0:2 * npairs:2] + rho[1:2 * npairs:2]
    nonpos = np.flatnonzero(pairs <= 0)
    J = nonpos[0] if nonpos.size else npairs
    tau = -1.0 + 2.0 * float(np.sum(pairs[:J]))
    return float(min(N, N / tau)) if tau > 0 else float(N)


def correlation_summary(draws: Sequence[ArrayLike]) -> tuple[NDArray, NDArray, NDArray]:
    """Posterior-mean correlation matrix, its eigenvalues, first two eigenvectors.

    Each eigenvector's sign is fixed so its largest-magnitude entry is positive.
    """
    if len(draws) == 0:
        raise ValueError("no draws")
    total = None
    for S in draws:
        S = np.asarray(S, dtype=float)
        d = np.sqrt(np.diag(S))
        C = S / np.outer(d, d)
        total = C if total is None else total + C
    R = total / len(draws)
    w, V = sym_eigen(R)
    V = V[:, :min(2, V.shape[1])].copy()
    for j in range(V.shape[1]):
        i = np.argmax(np.abs(V[:, j]))
        if V[i, j] < 0:
            V[:, j] = -V[:, j]
    return R, w, V
