"""First-return matrices Psi(s), Xi(s), the closures D, U, K, J, and their
parameter derivatives.

Psi is the minimal nonnegative solution of

    0 = Q+- + Q++ Psi + Psi Q-- + Psi Q-+ Psi

and Xi solves the same equation with the roles of + and - exchanged.
Differentiating the equation in theta_k gives, with K = Q++ + Psi Q-+ and
D = Q-- + Q-+ Psi, the Sylvester equation

    K X + X D = -(dQ+- + dQ++ Psi + Psi dQ-- + Psi dQ-+ Psi)

for X = dPsi/dtheta_k.  The block-diagonal structure of the stacked system
means every parameter is solved on its own, sharing one factorisation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import matcalc
from .errors import DimensionMismatch, NoConvergence, NullRecurrent, SpectraOverlap
from .matcalc import BlockJacobian, dproduct
from .model import ParamModel, QBlocks, QJacobians, as_scalar, fluid_generator, \
    fluid_generator_jacobian

MAX_NEWTON = 200
STEP_RTOL = 1e-14
RESID_RTOL = 1e-12
NULL_RECURRENT_TOL = 1e-10
KRON_LIMIT = 2500


# ---------------------------------------------------------------------------
# Sylvester

def _kron_operator(A, B):
    n, m = A.shape[0], B.shape[0]
    return np.kron(np.eye(m), A) + np.kron(B.T, np.eye(n))


def sylvester_many(A, B, Cs):
    """Solve A X_k + X_k B = C_k for a stack Cs of shape (p, n, m)."""
    A = np.asarray(A)
    B = np.asarray(B)
    Cs = np.asarray(Cs)
    n, m = A.shape[0], B.shape[0]
    if A.shape != (n, n) or B.shape != (m, m) or Cs.shape[1:] != (n, m):
        raise DimensionMismatch(
            f"sylvester: A {A.shape}, B {B.shape}, C {Cs.shape[1:]} do not conform")
    dtype = np.result_type(A, B, Cs, float)
    if n == 0 or m == 0 or Cs.shape[0] == 0:
        return np.zeros(Cs.shape, dtype=dtype)
    if n * m > KRON_LIMIT:
        raise DimensionMismatch(
            f"sylvester: n*m = {n * m} exceeds the dense Kronecker limit {KRON_LIMIT}")
    L = _kron_operator(A, B)
    rhs = Cs.transpose(2, 1, 0).reshape(n * m, -1)  # column-major vec per slab
    with warnings.catch_warnings():
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            sol = sla.solve(L, rhs)
        except (np.linalg.LinAlgError, sla.LinAlgWarning) as err:
            raise SpectraOverlap(
                "spectra of A and -B (nearly) intersect; the solution is not unique") from err
    return sol.reshape(m, n, -1).transpose(2, 1, 0)


def sylvester(A, B, C):
    """Solve A X + X B = C by a dense Kronecker solve."""
    return sylvester_many(A, B, np.asarray(C)[None])[0]


# ---------------------------------------------------------------------------
# Riccati

def _riccati_residual(A12, A11, A22, A21, X):
    return A12 + A11 @ X + X @ A22 + X @ A21 @ X


def _newton(A12, A11, A22, A21, X0, qnorm):
    X = X0
    tol = RESID_RTOL * max(qnorm, 1e-300)
    for _ in range(MAX_NEWTON):
        R = _riccati_residual(A12, A11, A22, A21, X)
        done = np.linalg.norm(R, np.inf) <= tol
        H = sylvester(A11 + X @ A21, A22 + A21 @ X, -R)
        X = X + H
        if done:
            # one step past the tolerance costs little and, the convergence
            # being quadratic, lands at working precision
            return X
        if not np.all(np.isfinite(X)):
            break
        if np.linalg.norm(H, np.inf) <= STEP_RTOL * np.linalg.norm(X, np.inf):
            R = _riccati_residual(A12, A11, A22, A21, X)
            if np.linalg.norm(R, np.inf) <= 1e2 * tol:
                return X
    raise NoConvergence("Newton iteration for the Riccati equation did not converge")


def _is_stable(M):
    return M.size == 0 or np.max(np.linalg.eigvals(M).real) < 0


def _roles(q, swap):
    if swap:
        return q.Qmp, q.Qmm, q.Qpp, q.Qpm
    return q.Qpm, q.Qpp, q.Qmm, q.Qmp


def _solve_riccati(q, swap, model=None):
    A12, A11, A22, A21 = _roles(q, swap)
    if q.mu is not None and abs(q.mu) < NULL_RECURRENT_TOL:
        raise NullRecurrent(f"drift {q.mu:.3g} is zero to tolerance at s = 0")
    dtype = np.result_type(A12, A11, float)
    X0 = np.zeros(A12.shape, dtype=dtype)
    qnorm = q.norm
    s = q.s
    if not np.iscomplexobj(s) or s.real <= 0:
        return _newton(A12, A11, A22, A21, X0, qnorm)
    try:
        X = _newton(A12, A11, A22, A21, X0, qnorm)
        if _is_stable(A11 + X @ A21) and _is_stable(A22 + A21 @ X):
            return X
    except (NoConvergence, SpectraOverlap):
        pass
    if model is None:
        raise NoConvergence(
            "Newton from zero failed at complex s; pass the model to allow continuation")
    return _continuation(model, s, swap)


def _continuation(model, s, swap, steps=16):
    """Follow the solution from Re(s) up the vertical segment to s."""
    q0 = fluid_generator(model, s.real)
    A12, A11, A22, A21 = _roles(q0, swap)
    X = _newton(A12, A11, A22, A21, np.zeros(A12.shape), q0.norm).astype(complex)
    for j in range(1, steps + 1):
        qj = fluid_generator(model, complex(s.real, s.imag * j / steps))
        A12, A11, A22, A21 = _roles(qj, swap)
        X = _newton(A12, A11, A22, A21, X, qj.norm)
    return X


def solve_psi(q, model=None):
    """Minimal nonnegative solution of 0 = Q+- + Q++ X + X Q-- + X Q-+ X.

    For complex s the root is the one continuous in s from the real axis;
    `model` enables the continuation fallback when Newton from zero lands
    elsewhere.
    """
    X = _solve_riccati(q, False, model)
    if q.mu is not None and q.mu < 0 and X.size:
        # return to level 0 is certain: Psi is stochastic, and rescaling the
        # rows removes the rounding left by the solve
        X = X / X.sum(axis=1, keepdims=True)
    return X


def solve_xi(q, model=None):
    """Minimal nonnegative solution of 0 = Q-+ + Q-- X + X Q++ + X Q+- X."""
    return _solve_riccati(q, True, model)


def riccati_residual(q, Psi):
    return _riccati_residual(q.Qpm, q.Qpp, q.Qmm, q.Qmp, Psi)


# ---------------------------------------------------------------------------
# derivatives

def _psi_rhs(dq: QJacobians, Psi):
    return (dq.dQpm.slabs + dq.dQpp.slabs @ Psi + Psi @ dq.dQmm.slabs
            + Psi @ dq.dQmp.slabs @ Psi)


def _xi_rhs(dq: QJacobians, Xi):
    return (dq.dQmp.slabs + dq.dQmm.slabs @ Xi + Xi @ dq.dQpp.slabs
            + Xi @ dq.dQpm.slabs @ Xi)


def dpsi(Psi, K, D, dq):
    """dPsi/dtheta: per parameter, K X + X D = -R_k."""
    return BlockJacobian.from_slabs(sylvester_many(K, D, -_psi_rhs(dq, Psi)))


def dxi(Xi, J, U, dq):
    """dXi/dtheta: per parameter, J X + X U = -R_k with roles swapped."""
    return BlockJacobian.from_slabs(sylvester_many(J, U, -_xi_rhs(dq, Xi)))


def differentiated_residual(q, dq, Psi, dPsi):
    """Slabs of Q++ dPsi + dPsi Q-- + dPsi Q-+ Psi + Psi Q-+ dPsi + R.

    This is the theta-derivative of the Riccati equation; it vanishes when
    dPsi is correct, whatever solver produced it.
    """
    X = dPsi.slabs
    return (q.Qpp @ X + X @ q.Qmm + X @ q.Qmp @ Psi + Psi @ q.Qmp @ X
            + _psi_rhs(dq, Psi))


def dclosures(q, dq, Psi, Xi, dPsi, dXi):
    """Jacobians of D, U, K, J by the product rule on their definitions."""
    dD = dq.dQmm + dproduct(q.Qmp, dq.dQmp, Psi, dPsi)
    dU = dq.dQpp + dproduct(q.Qpm, dq.dQpm, Xi, dXi)
    dK = dq.dQpp + dproduct(Psi, dPsi, q.Qmp, dq.dQmp)
    dJ = dq.dQmm + dproduct(Xi, dXi, q.Qpm, dq.dQpm)
    return dD, dU, dK, dJ


# ---------------------------------------------------------------------------
# bundle

@dataclass(frozen=True)
class FirstReturnBundle:
    s: complex
    q: QBlocks
    Psi: np.ndarray
    Xi: np.ndarray
    D: np.ndarray
    U: np.ndarray
    K: np.ndarray
    J: np.ndarray
    dq: QJacobians | None = None
    dPsi: BlockJacobian | None = None
    dXi: BlockJacobian | None = None
    dD: BlockJacobian | None = None
    dU: BlockJacobian | None = None
    dK: BlockJacobian | None = None
    dJ: BlockJacobian | None = None

    @property
    def has_derivatives(self):
        return self.dPsi is not None


def first_return(obj, s=0.0, derivatives=True):
    """Solve for Psi, Xi and the closures at s (and their jacobians).

    `obj` is an SfmModel, or a ParamModel when derivatives are wanted.
    """
    s = as_scalar(s)
    model = obj.model if isinstance(obj, ParamModel) else obj
    q = fluid_generator(model, s)
    Psi = solve_psi(q, model)
    Xi = solve_xi(q, model)
    D = q.Qmm + q.Qmp @ Psi
    U = q.Qpp + q.Qpm @ Xi
    K = q.Qpp + Psi @ q.Qmp
    J = q.Qmm + Xi @ q.Qpm
    if not (derivatives and isinstance(obj, ParamModel)):
        return FirstReturnBundle(s, q, Psi, Xi, D, U, K, J)
    dq = fluid_generator_jacobian(obj, s)
    dP = dpsi(Psi, K, D, dq)
    dX = dxi(Xi, J, U, dq)
    dD, dU, dK, dJ = dclosures(q, dq, Psi, Xi, dP, dX)
    return FirstReturnBundle(s, q, Psi, Xi, D, U, K, J, dq, dP, dX, dD, dU, dK, dJ)
