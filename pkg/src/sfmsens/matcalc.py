"""Matrix derivative calculus.

A derivative of an m x n matrix A(theta) with respect to theta in R^p is held
as the block row [dA/dtheta_1 | ... | dA/dtheta_p] of shape m x (n p).  With
that layout the product and inverse rules read literally as

    d(AB)  = dA (I kron B) + A dB
    d(A^-1) = -A^-1 dA (I kron A^-1)

and that is how they are written below.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, NonFinite, SingularMatrix


# ---------------------------------------------------------------------------
# dense linear algebra helpers

def solve(A, B, exc=SingularMatrix, what="matrix"):
    """Solve A X = B, raising `exc` when A is singular or badly conditioned."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"{what}: expected a square matrix, got {A.shape}")
    if A.shape[0] != B.shape[0]:
        raise DimensionMismatch(f"{what}: {A.shape} cannot solve against {B.shape}")
    dtype = np.result_type(A, B, float)
    if A.shape[0] == 0:
        return np.zeros(B.shape, dtype=dtype)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise NonFinite(f"{what}: non-finite entries")
    with warnings.catch_warnings():
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            return sla.solve(A, B)
        except (np.linalg.LinAlgError, sla.LinAlgWarning) as err:
            raise exc(f"{what} is singular to working precision") from err


def rsolve(B, A, exc=SingularMatrix, what="matrix"):
    """Solve X A = B."""
    return solve(np.asarray(A).T, np.asarray(B).T, exc, what).T


def inv(A, exc=SingularMatrix, what="matrix"):
    A = np.asarray(A)
    return solve(A, np.eye(A.shape[0], dtype=np.result_type(A, float)), exc, what)


def expm(A):
    """Matrix exponential (scaling and squaring with a Pade approximant)."""
    A = np.asarray(A)
    if A.shape[0] == 0:
        return np.zeros(A.shape, dtype=np.result_type(A, float))
    E = sla.expm(A)
    if not np.all(np.isfinite(E)):
        raise NonFinite("matrix exponential overflowed")
    return E


# ---------------------------------------------------------------------------
# block-row jacobian

class BlockJacobian:
    """Derivative of an m x n matrix with respect to p parameters.

    ``data`` is the m x (n p) block row; ``block(k)`` is the m x n slab for
    parameter k.  Instances are read-only.
    """

    __slots__ = ("data", "rows", "cols", "params")

    def __init__(self, data, cols, params):
        data = np.array(data, copy=True)
        if data.ndim != 2:
            raise DimensionMismatch("jacobian storage must be two-dimensional")
        if data.shape[1] != cols * params:
            raise DimensionMismatch(
                f"storage width {data.shape[1]} != cols {cols} x params {params}")
        data.setflags(write=False)
        self.data = data
        self.rows = data.shape[0]
        self.cols = cols
        self.params = params

    @classmethod
    def zero(cls, rows, cols, params, dtype=float):
        return cls(np.zeros((rows, cols * params), dtype=dtype), cols, params)

    @classmethod
    def from_slabs(cls, slabs):
        slabs = np.asarray(slabs)
        if slabs.ndim != 3:
            raise DimensionMismatch("slabs must have shape (p, m, n)")
        p, m, n = slabs.shape
        return cls(slabs.transpose(1, 0, 2).reshape(m, n * p), n, p)

    @classmethod
    def of_vector_slabs(cls, vectors):
        """Jacobian of a row vector from a (p, n) array of its partials."""
        v = np.asarray(vectors)
        return cls.from_slabs(v[:, None, :])

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def slabs(self):
        """Stacked slabs with shape (p, m, n)."""
        return self.data.reshape(self.rows, self.params, self.cols).transpose(1, 0, 2)

    def block(self, k):
        if not 0 <= k < self.params:
            raise IndexError(k)
        return self.data[:, k * self.cols:(k + 1) * self.cols]

    def _check(self, other):
        if not isinstance(other, BlockJacobian):
            return NotImplemented
        if (self.rows, self.cols, self.params) != (other.rows, other.cols, other.params):
            raise DimensionMismatch("jacobians of different shapes")
        return other

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return BlockJacobian(self.data + other.data, self.cols, self.params)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return BlockJacobian(self.data - other.data, self.cols, self.params)

    def __neg__(self):
        return BlockJacobian(-self.data, self.cols, self.params)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return BlockJacobian(self.data * scalar, self.cols, self.params)

    __rmul__ = __mul__

    def __repr__(self):
        return f"BlockJacobian(rows={self.rows}, cols={self.cols}, params={self.params})"

    def lmul(self, A):
        """A x dX, i.e. the jacobian of A X for constant A."""
        A = np.asarray(A)
        if A.shape[-1] != self.rows:
            raise DimensionMismatch(f"cannot left-multiply {A.shape} into {self.shape}")
        return BlockJacobian(A @ self.data, self.cols, self.params)

    def rmul(self, B):
        """dX x (I kron B), i.e. the jacobian of X B for constant B."""
        B = np.asarray(B)
        if B.shape[0] != self.cols:
            raise DimensionMismatch(f"cannot right-multiply {self.shape} by {B.shape}")
        return BlockJacobian.from_slabs(self.slabs @ B)

    def sub(self, rows=slice(None), cols=slice(None)):
        """Jacobian of a submatrix X[rows, cols]."""
        return BlockJacobian.from_slabs(self.slabs[:, rows, :][:, :, cols])


def kron_eye(p, B):
    """I_p kron B."""
    return np.kron(np.eye(p), B)


def hstack(*jacs):
    """Jacobian of [X1 X2 ...] from the jacobians of the pieces."""
    return BlockJacobian.from_slabs(np.concatenate([j.slabs for j in jacs], axis=2))


def vstack(*jacs):
    return BlockJacobian.from_slabs(np.concatenate([j.slabs for j in jacs], axis=1))


def block_matrix(grid):
    """Jacobian of a block matrix from a grid of jacobians."""
    return vstack(*[hstack(*row) for row in grid])


# ---------------------------------------------------------------------------
# the three rules

def dproduct(A, dA, B, dB):
    """d(AB) = dA (I kron B) + A dB."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape[1] != B.shape[0]:
        raise DimensionMismatch(f"product {A.shape} x {B.shape} does not conform")
    if dA.shape != A.shape or dB.shape != B.shape:
        raise DimensionMismatch("jacobian shape differs from its matrix")
    if dA.params != dB.params:
        raise DimensionMismatch("jacobians carry different parameter counts")
    p = dA.params
    data = dA.data @ kron_eye(p, B) + A @ dB.data
    return BlockJacobian(data, B.shape[1], p)


def dinverse(A, dA):
    """d(A^-1) = -A^-1 dA (I kron A^-1)."""
    A = np.asarray(A)
    if dA.shape != A.shape:
        raise DimensionMismatch("jacobian shape differs from its matrix")
    Ai = inv(A)
    data = -Ai @ dA.data @ kron_eye(dA.params, Ai)
    return BlockJacobian(data, A.shape[0], dA.params)


def expm_and_dexp(A, dA, x):
    """Return (e^{Ax}, d e^{Ax}) using the block-augmented exponential.

    For each parameter, exp([[A, dA_k], [0, A]] x) carries e^{Ax} on the
    diagonal and d e^{Ax}/dtheta_k in the top-right corner.
    """
    A = np.asarray(A)
    n = A.shape[0]
    if A.shape != (n, n) or dA.shape != (n, n):
        raise DimensionMismatch("dexp needs a square matrix and matching jacobian")
    if x < 0:
        raise ValueError("dexp requires x >= 0")
    dtype = np.result_type(A, dA.data, float)
    E = expm(A * x)
    slabs = np.zeros((dA.params, n, n), dtype=dtype)
    live = [k for k, dAk in enumerate(dA.slabs) if np.any(dAk)]
    if live and n:
        aug = np.zeros((len(live), 2 * n, 2 * n), dtype=dtype)
        aug[:, :n, :n] = A * x
        aug[:, n:, n:] = A * x
        aug[:, :n, n:] = dA.slabs[live] * x
        big = sla.expm(aug)
        if not np.all(np.isfinite(big)):
            raise NonFinite("matrix exponential overflowed")
        slabs[live] = big[:, :n, n:]
    return E, BlockJacobian.from_slabs(slabs)


def dexp(A, dA, x):
    """d e^{Ax}/dtheta as a block-row jacobian."""
    return expm_and_dexp(A, dA, x)[1]


def dexp_via_ilt(A, dA, x, method="euler", order=None):
    """d e^{Ax}/dtheta by inverting its Laplace transform in x.

    The transform of x -> d e^{Ax}/dtheta is (vI - A)^-1 dA (I kron (vI - A)^-1).
    A is shifted by its spectral abscissa when that is positive so the
    inversion contour stays to the right of every singularity.
    """
    from . import ilt

    A = np.asarray(A)
    n = A.shape[0]
    p = dA.params
    if x == 0 or n == 0:
        return BlockJacobian.zero(n, n, p, dtype=np.result_type(A, dA.data, float))
    sigma = max(0.0, float(np.max(np.linalg.eigvals(A).real)))
    As = A - sigma * np.eye(n)

    def F(v):
        R = inv(v * np.eye(n) - As)
        return R @ dA.data @ kron_eye(p, R)

    if np.iscomplexobj(A) or np.iscomplexobj(dA.data):
        raise ValueError("dexp_via_ilt supports real matrices only")
    res = ilt.invert(F, x, method=method, order=order)
    return BlockJacobian(res.value * np.exp(sigma * x), n, p)
