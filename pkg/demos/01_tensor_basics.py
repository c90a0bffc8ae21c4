# coding: utf-8

# # Arrays, unfoldings and separable covariance
#
# A K-way array Y of dims (m_1, ..., m_K) is stored column-major, so vec(Y)
# runs the first index fastest. The mode-k unfolding Y_(k) lays out the
# mode-k fibers as columns of an m_k x (m / m_k) matrix.

import numpy as np

from arraynormal import (ArrayNormal, SeparableCovariance, covariance_vec, kmode_product,
                         log_density, make_rng, sample, tucker_product, unfold, vec)

rng = make_rng(0)
Y = rng.standard_normal((3, 4, 2))
print("Y_(2) shape:", unfold(Y, 1).shape)

# Multiplying along a mode is the same as left-multiplying that unfolding.
A = rng.standard_normal((5, 4))
lhs = unfold(kmode_product(Y, A, 1), 1)
print("mode product matches A @ Y_(2):", np.allclose(lhs, A @ unfold(Y, 1)))

# A Tucker product applies one matrix per mode. Its vec is a Kronecker
# product acting on vec(Y), with the last mode's matrix outermost.
mats = [rng.standard_normal((m, m)) for m in Y.shape]
K = np.kron(mats[2], np.kron(mats[1], mats[0]))
print("vec of Tucker product matches Kronecker form:",
      np.allclose(vec(tucker_product(Y, mats)), K @ vec(Y)))

# ## The array normal density
#
# Cov(vec Y) = Sigma_3 (x) Sigma_2 (x) Sigma_1. The density is evaluated by
# whitening each mode with its Cholesky factor, never building the
# 24 x 24 matrix. Here it is compared with the dense evaluation.

def ar1(m, rho):
    i = np.arange(m)
    return rho ** np.abs(i[:, None] - i[None, :])

cov = SeparableCovariance((ar1(3, 0.6), ar1(4, -0.4), np.array([[2.0, 0.5], [0.5, 1.0]])))
dist = ArrayNormal(np.zeros((3, 4, 2)), cov)
Z = sample(dist, rng)

from scipy.stats import multivariate_normal
dense = multivariate_normal(np.zeros(24), covariance_vec(cov)).logpdf(vec(Z))
print(f"log density (separable) {log_density(dist, Z):.10f}")
print(f"log density (dense)     {dense:.10f}")
