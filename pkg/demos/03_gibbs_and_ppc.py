# coding: utf-8

# # Bayesian fit and posterior predictive check
#
# We simulate an (8, 8, 4) array observed over 6 dependent time points,
# then compare two models:
#
# * a reduced model in which the first three modes have identity
#   covariance, so only the time mode is estimated;
# * the full model, with every mode covariance estimated.
#
# The check statistic t_k = log|S_k / tr S_k| + m_k log m_k is zero when the
# mode-k scatter is isotropic and negative otherwise. A reduced model that
# ignores real mode-k correlation predicts t_k near zero, so the observed
# value falls in the far lower tail of its predictive distribution.

import numpy as np

from arraynormal import (ArrayNormal, GibbsConfig, PriorSpec, SeparableCovariance, make_rng,
                         ppc, run_gibbs, sample)

def ar1(m, rho):
    i = np.arange(m)
    return rho ** np.abs(i[:, None] - i[None, :])

dims = (8, 8, 4, 6)
truth = tuple(ar1(m, 0.5) for m in dims)
rng = make_rng(1)
Y = sample(ArrayNormal(np.zeros(dims), SeparableCovariance(truth)), rng)

cfg = GibbsConfig(n_iters=1500, burn_in=500, thin=2, seed=8, dependent_last_mode=True)
reduced = PriorSpec.default(dims, identity_modes=[0, 1, 2], dependent_last_mode=True)
full = PriorSpec.default(dims, dependent_last_mode=True)

for name, prior in [("reduced", reduced), ("full", full)]:
    chain = run_gibbs(Y, prior, cfg)
    reports = ppc(Y, chain, [0, 1, 2], 300, make_rng(9))
    tails = ", ".join(f"mode {r.mode + 1}: {r.tail_probability:.3f}" for r in reports)
    print(f"{name:8s} model, P(t_pred <= t_obs) -> {tails}")

# Tail probabilities near zero flag the reduced model; the full model's
# values sit comfortably inside (0, 1).
