"""Dense multiway array algebra.

Arrays are plain :class:`numpy.ndarray` objects. The canonical element
ordering is column-major: the index of a lower-numbered mode moves faster
than that of a higher-numbered one, so ``vec(Z) = Z.ravel(order="F")`` and
the columns of every matricization follow the same rule. Modes are
zero-based throughout the Python API.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

__all__ = [
    "vec",
    "unvec",
    "unfold",
    "fold",
    "kmode_product",
    "tucker_product",
    "inner",
    "norm2",
    "stack",
    "slice_mode",
]


def _check_mode(ndim: int, k: int) -> int:
    if not isinstance(k, (int, np.integer)) or not 0 <= k < ndim:
        raise ValueError(f"invalid mode index {k} for an array of order {ndim}")
    return int(k)


def vec(Z: ArrayLike) -> NDArray:
    """Flatten ``Z`` in storage order (first index fastest)."""
    return np.asarray(Z).ravel(order="F")


def unvec(v: ArrayLike, dims: Sequence[int]) -> NDArray:
    """Inverse of :func:`vec`."""
    v = np.asarray(v)
    dims = tuple(int(d) for d in dims)
    if v.size != int(np.prod(dims)):
        raise ValueError(f"cannot reshape {v.size} values to dims {dims}")
    return v.reshape(dims, order="F")


def unfold(Z: ArrayLike, k: int) -> NDArray:
    """k-mode matricization.

    Returns an ``m_k x (m / m_k)`` matrix whose columns are the mode-``k``
    fibers of ``Z``, with the remaining indices ordered so that the lowest
    remaining mode moves fastest.
    """
    Z = np.asarray(Z)
    k = _check_mode(Z.ndim, k)
    return np.moveaxis(Z, k, 0).reshape(Z.shape[k], -1, order="F")


def fold(M: ArrayLike, k: int, dims: Sequence[int]) -> NDArray:
    """Invert :func:`unfold` for an array of dimension ``dims``."""
    M = np.asarray(M)
    dims = tuple(int(d) for d in dims)
    k = _check_mode(len(dims), k)
    rest = dims[:k] + dims[k + 1:]
    expected = (dims[k], int(np.prod(rest)))
    if M.shape != expected:
        raise ValueError(f"matrix of shape {M.shape} cannot fold to dims {dims} "
                         f"along mode {k}; expected shape {expected}")
    return np.moveaxis(M.reshape((dims[k],) + rest, order="F"), 0, k)


def kmode_product(Z: ArrayLike, A: ArrayLike, k: int) -> NDArray:
    """Multiply matrix ``A`` (``n x m_k``) into mode ``k`` of ``Z``.

    Defined by ``unfold(Z x_k A, k) == A @ unfold(Z, k)``.
    """
    Z = np.asarray(Z)
    A = np.asarray(A)
    k = _check_mode(Z.ndim, k)
    if A.ndim != 2 or A.shape[1] != Z.shape[k]:
        raise ValueError(f"matrix of shape {A.shape} does not conform to mode {k} "
                         f"of an array with dims {Z.shape}")
    dims = list(Z.shape)
    dims[k] = A.shape[0]
    return fold(A @ unfold(Z, k), k, dims)


def tucker_product(Z: ArrayLike, A: Sequence[ArrayLike | None]) -> NDArray:
    """Tucker product ``Z x_1 A_1 x_2 ... x_K A_K``.

    Entries of ``A`` may be ``None`` to leave a mode untouched (an identity).
    """
    Z = np.asarray(Z)
    if len(A) != Z.ndim:
        raise ValueError(f"need {Z.ndim} matrices for an order-{Z.ndim} array, got {len(A)}")
    out = Z
    for k, Ak in enumerate(A):
        if Ak is not None:
            out = kmode_product(out, Ak, k)
    return out


def inner(X: ArrayLike, Y: ArrayLike) -> float:
    """Sum over all cells of the elementwise product."""
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape != Y.shape:
        raise ValueError(f"dims mismatch: {X.shape} vs {Y.shape}")
    return float(np.vdot(X.ravel(order="F"), Y.ravel(order="F")))


def norm2(X: ArrayLike) -> float:
    """Squared array norm ``<X, X>``."""
    return inner(X, X)


def stack(Ys: Sequence[ArrayLike]) -> NDArray:
    """Stack equal-shape arrays along a new trailing mode."""
    if len(Ys) == 0:
        raise ValueError("need at least one array to stack")
    arrs = [np.asarray(Y) for Y in Ys]
    shape = arrs[0].shape
    for Y in arrs[1:]:
        if Y.shape != shape:
            raise ValueError(f"ragged input: {Y.shape} vs {shape}")
    return np.stack(arrs, axis=-1)


def slice_mode(Y: ArrayLike, k: int, idx: Sequence[int]) -> NDArray:
    """Copy of the slices ``idx`` (in the given order) along mode ``k``."""
    Y = np.asarray(Y)
    k = _check_mode(Y.ndim, k)
    idx = [int(i) for i in idx]
    if not idx:
        raise ValueError("index subset must be nonempty")
    if len(set(idx)) != len(idx):
        raise ValueError(f"duplicate indices in {idx}")
    bad = [i for i in idx if not 0 <= i < Y.shape[k]]
    if bad:
        raise ValueError(f"indices {bad} out of range for mode {k} of size {Y.shape[k]}")
    return np.take(Y, idx, axis=k)

