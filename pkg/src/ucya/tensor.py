"""Dense complex tensor algebra.

Tensors are plain ``numpy.ndarray`` objects. Axis ``n`` (zero-based) is
"mode n+1" in the usual 1-based tensor notation. The canonical flat layout
(used for serialization) is first-index-fastest, i.e. ``order='F'``.

The mode-n unfolding orders its columns cyclically over the remaining
modes n+1, ..., N, 1, ..., n-1 with the *last* of these varying fastest, so
that for ``C = A x_1 B1 ... x_N BN``::

    unfold(C, n) == Bn @ unfold(A, n) @ kron(B_{n+1}, ..., BN, B1, ..., B_{n-1}).T
"""
from dataclasses import dataclass
from functools import reduce

import numpy as np

RANK_RTOL = 1e-8


def _check_mode(ndim, n):
    if not 0 <= n < ndim:
        raise ValueError(f"mode index {n} out of range for an order-{ndim} tensor")


def _cyclic_axes(ndim, n):
    return [n] + list(range(n + 1, ndim)) + list(range(n))


def unfold(t, n):
    """Mode-`n` unfolding (matricization) of `t`.

    Parameters
    ----------
    t : ndarray
    n : int
        Zero-based mode index.

    Returns
    -------
    ndarray of shape ``(t.shape[n], t.size // t.shape[n])``
    """
    t = np.asarray(t)
    _check_mode(t.ndim, n)
    return np.transpose(t, _cyclic_axes(t.ndim, n)).reshape(t.shape[n], -1)


def fold(mat, shape, n):
    """Inverse of :func:`unfold`."""
    shape = tuple(shape)
    _check_mode(len(shape), n)
    axes = _cyclic_axes(len(shape), n)
    permuted = mat.reshape([shape[a] for a in axes])
    return np.transpose(permuted, np.argsort(axes))


def mode_product(t, m, n):
    """Mode-`n` product ``t x_n m`` with ``m`` of shape ``(J, t.shape[n])``."""
    t = np.asarray(t)
    m = np.asarray(m)
    _check_mode(t.ndim, n)
    if m.ndim != 2 or m.shape[1] != t.shape[n]:
        raise ValueError(
            f"matrix of shape {m.shape} does not match mode {n} of extent {t.shape[n]}"
        )
    return np.moveaxis(np.tensordot(m, t, axes=(1, n)), 0, n)


def multi_mode_product(t, matrices, modes=None):
    """Apply ``t x_{modes[0]} matrices[0] x_{modes[1]} matrices[1] ...``.

    ``None`` entries in `matrices` are skipped.
    """
    if modes is None:
        modes = range(len(matrices))
    for m, n in zip(matrices, modes):
        if m is not None:
            t = mode_product(t, m, n)
    return t


def outer(*vectors):
    """Outer product ``v1 o v2 o ... o vN``."""
    return reduce(np.multiply.outer, [np.asarray(v) for v in vectors])


def frobenius(t):
    return float(np.linalg.norm(np.ravel(t)))


def concat(a, b, n):
    """Concatenate `a` and `b` along mode `n`."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != b.ndim:
        raise ValueError("tensors must have the same order")
    _check_mode(a.ndim, n)
    for k in range(a.ndim):
        if k != n and a.shape[k] != b.shape[k]:
            raise ValueError(
                f"extent mismatch in mode {k}: {a.shape[k]} != {b.shape[k]}"
            )
    return np.concatenate([a, b], axis=n)


def superdiagonal_identity(order, size):
    """Order-`order` tensor of extent `size` with ones on the superdiagonal."""
    if order < 2 or size < 1:
        raise ValueError("need order >= 2 and size >= 1")
    z = np.zeros((size,) * order, dtype=complex)
    idx = np.arange(size)
    z[(idx,) * order] = 1.0
    return z


def cp_tensor(factors, weights=None):
    """Tensor ``[[Z; F1, ..., FN]]`` for a superdiagonal core ``Z``."""
    k = factors[0].shape[1]
    core = superdiagonal_identity(len(factors), k)
    if weights is not None:
        idx = (np.arange(k),) * len(factors)
        core[idx] = weights
    return multi_mode_product(core, factors)


def numerical_rank(mat, rtol=RANK_RTOL):
    """Number of singular values above ``rtol * sigma_max``."""
    s = np.linalg.svd(np.asarray(mat), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def multilinear_rank(t, rtol=RANK_RTOL):
    return tuple(numerical_rank(unfold(t, n), rtol) for n in range(np.ndim(t)))


@dataclass(frozen=True)
class HosvdModel:
    """Tucker model ``core x_1 U1 x_2 U2 ... x_N UN``.

    `mode_singular_values[k]` holds all singular values of the mode-k
    unfolding of the decomposed tensor, including discarded ones.
    """

    core: np.ndarray
    factors: tuple
    mode_singular_values: tuple

    @property
    def ranks(self):
        return tuple(f.shape[1] for f in self.factors)

    def reconstruct(self):
        return multi_mode_product(self.core, self.factors)


def _left_singular(mat, method="svd"):
    rows, cols = mat.shape
    if method == "gram":
        # eigenvectors of mat mat^H: cost linear in the column count, but
        # singular values below ~1e-8 sigma_max lose relative accuracy
        w, u = np.linalg.eigh(mat @ mat.conj().T)
        w, u = w[::-1], u[:, ::-1]
        return u, np.sqrt(np.clip(w, 0.0, None))
    if method != "svd":
        raise ValueError(f"unknown method {method!r}")
    # full U only when the unfolding is tall; wide unfoldings already give a square U
    u, s, _ = np.linalg.svd(mat, full_matrices=rows > cols)
    if s.size < rows:
        s = np.concatenate([s, np.zeros(rows - s.size)])
    return u, s


def hosvd(t):
    """Full higher-order SVD of `t`."""
    return truncated_hosvd(t, np.shape(t))


def truncated_hosvd(t, ranks, method="svd"):
    """HOSVD keeping the leading ``ranks[k]`` left singular vectors per mode.

    The core is ``t x_1 U1^H ... x_N UN^H`` with the truncated factors.
    ``method="gram"`` takes the factors from the eigenvectors of each
    unfolding's Gram matrix instead of its SVD; it is faster for long
    unfoldings and spans the same dominant subspaces.
    """
    t = np.asarray(t, dtype=complex)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != t.ndim:
        raise ValueError(f"expected {t.ndim} ranks, got {len(ranks)}")
    for k, (r, ext) in enumerate(zip(ranks, t.shape)):
        if not 1 <= r <= ext:
            raise ValueError(f"rank {r} for mode {k} outside [1, {ext}]")
    factors = []
    svals = []
    for n, r in enumerate(ranks):
        u, s = _left_singular(unfold(t, n), method)
        factors.append(u[:, :r])
        svals.append(s)
    core = multi_mode_product(t, [f.conj().T for f in factors])
    return HosvdModel(core=core, factors=tuple(factors), mode_singular_values=tuple(svals))
