"""Stationary distribution of an SFM with a lower boundary at 0, and its
parameter derivatives.

Notation: the "minus-zero" phases S- u S0 are listed minus first; N is
(-T_{(-0)(-0)})^-1 and R = [C+^-1, Psi |C-|^-1].  With xi the normalised
left fixed vector of M = [I 0] N T_{(-0)+} Psi,

    Z      = [xi 0] N (1 + T_{(-0)+} (-K)^-1 R (1 + T_{(+-)0} (-T00)^-1 1))
    alpha  = 1 / Z
    p      = alpha [xi 0] N                        (mass at level 0)
    [pi+ pi-](x) = p T_{(-0)+} e^{Kx} R
    pi0(x) = [pi+ pi-](x) T_{(+-)0} (-T00)^-1

Derivatives follow by the product and inverse rules; d alpha is taken as
-alpha^2 dZ.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ilt, matcalc
from .errors import SingularConstraintSystem, SingularK, UnstableModel
from .firstreturn import FirstReturnBundle, first_return
from .matcalc import BlockJacobian, dinverse, dproduct, hstack
from .model import ParamModel, SfmModel, drift

CONSTRAINT_RTOL = 1e-10


def _const(A, p):
    A = np.atleast_2d(A)
    return BlockJacobian.zero(A.shape[0], A.shape[1], p, dtype=A.dtype)


def _diag_jac(d_entries):
    """Jacobian of diag(v) from the (p, n) partials of v."""
    p, n = d_entries.shape
    slabs = np.zeros((p, n, n))
    idx = np.arange(n)
    slabs[:, idx, idx] = d_entries
    return BlockJacobian.from_slabs(slabs)


class _Pieces:
    """Blocks of T and their jacobians used by several formulas."""

    def __init__(self, model, pm=None):
        self.model = model
        n_p, n_m, n_0 = model.sizes
        self.n_p, self.n_m, self.n_0 = n_p, n_m, n_0
        B = model.block
        self.Tmm0 = B("-0", "-0")
        self.Tm0p = B("-0", "+")
        self.Tpm0 = B("+-", "0")
        self.T00 = B("0", "0")
        self.ip = 1.0 / model.rates("+")
        self.im = 1.0 / np.abs(model.rates("-"))
        self.N = matcalc.inv(-self.Tmm0, what="-T_(-0)(-0)")
        self.V0 = matcalc.inv(-self.T00, what="-T00") if n_0 else np.zeros((0, 0))
        self.E = np.hstack([np.eye(n_m), np.zeros((n_m, n_0))])
        self.pm = pm
        if pm is None:
            return
        p = pm.p
        self.p = p
        self.dTmm0 = pm.dT_block("-0", "-0")
        self.dTm0p = pm.dT_block("-0", "+")
        self.dTpm0 = pm.dT_block("+-", "0")
        self.dN = dinverse(-self.Tmm0, -self.dTmm0)
        dT00 = pm.dT_block("0", "0")
        self.dV0 = dinverse(-self.T00, -dT00) if n_0 else _const(np.zeros((0, 0)), p)
        cp = model.rates("+")
        cm = model.rates("-")
        self.dip = _diag_jac(-pm.dc("+") / cp ** 2)
        self.dim = _diag_jac(pm.dc("-") / cm ** 2)

    def R(self, Psi):
        return np.hstack([np.diag(self.ip), Psi @ np.diag(self.im)])

    def dR(self, Psi, dPsi):
        return hstack(self.dip, dproduct(Psi, dPsi, np.diag(self.im), self.dim))

    def zero_map(self):
        """T_{(+-)0} (-T00)^-1, the map from [pi+ pi-] to pi0."""
        return self.Tpm0 @ self.V0

    def dzero_map(self):
        return dproduct(self.Tpm0, self.dTpm0, self.V0, self.dV0)


# ---------------------------------------------------------------------------
# the individual steps

def _check_stable(model, bundle):
    if len(model.minus) == 0:
        raise UnstableModel("no phase with negative rate; the level never returns to 0")
    mu = bundle.q.mu if bundle.q.mu is not None else drift(model)
    if mu >= 0:
        raise UnstableModel(f"drift {mu:.6g} >= 0; no stationary distribution")


def _fixed_map(pc, Psi):
    return pc.E @ pc.N @ pc.Tm0p @ Psi


def _constrained_left_solve(M, rhs_rows, what, scale=1.0):
    """Rows x with x (I - M) = r and x 1 = target, by least squares.

    ``scale`` bounds the size of the terms r was computed from; the residual
    is judged against it because r itself may be a near cancellation.
    """
    n = M.shape[0]
    A = np.vstack([(np.eye(n) - M).T, np.ones((1, n))])
    sol, *_ = np.linalg.lstsq(A, rhs_rows.T, rcond=None)
    resid = np.abs(A @ sol - rhs_rows.T).max(initial=0.0)
    scale = max(1.0, scale, np.abs(rhs_rows).max(initial=0.0))
    if resid > CONSTRAINT_RTOL * scale:
        raise SingularConstraintSystem(f"{what}: residual {resid:.3g} after least squares")
    return sol.T


def solve_xi_vector(model, bundle):
    """Normalised left fixed vector of M = [I 0](-T_{(-0)(-0)})^-1 T_{(-0)+} Psi."""
    _check_stable(model, bundle)
    pc = _Pieces(model)
    M = _fixed_map(pc, bundle.Psi.real)
    n = M.shape[0]
    rhs = np.zeros((1, n + 1))
    rhs[0, -1] = 1.0
    return _constrained_left_solve(M, rhs, "xi")[0]


def _z_pieces(pc, bundle):
    Psi, K = bundle.Psi.real, bundle.K.real
    Kinv = matcalc.inv(-K, SingularK, "-K")
    inner = np.ones((pc.n_p + pc.n_m, 1)) + pc.zero_map() @ np.ones((pc.n_0, 1))
    w = Kinv @ pc.R(Psi) @ inner
    y = np.ones((pc.n_m + pc.n_0, 1)) + pc.Tm0p @ w
    return Kinv, inner, w, y


def normalizing_alpha(model, xi, bundle):
    """alpha = 1/Z with Z the total (unnormalised) mass."""
    pc = _Pieces(model)
    _, _, _, y = _z_pieces(pc, bundle)
    xi0 = np.concatenate([xi, np.zeros(pc.n_0)])[None, :]
    return float(1.0 / (xi0 @ pc.N @ y)[0, 0])


def boundary_mass(model, xi, alpha):
    """[p- p0] = alpha [xi 0] (-T_{(-0)(-0)})^-1."""
    pc = _Pieces(model)
    xi0 = np.concatenate([xi, np.zeros(pc.n_0)])
    return alpha * xi0 @ pc.N


def density(model, p, bundle, x):
    """(pi+(x), pi-(x), pi0(x)) for x > 0."""
    pc = _Pieces(model)
    u = p @ pc.Tm0p @ matcalc.expm(bundle.K.real * x) @ pc.R(bundle.Psi.real)
    return u[:pc.n_p], u[pc.n_p:], u @ pc.zero_map()


# ---------------------------------------------------------------------------
# bundle with derivatives

@dataclass(frozen=True)
class StationaryBundle:
    model: SfmModel
    first: FirstReturnBundle
    xi: np.ndarray
    alpha: float
    p: np.ndarray
    dxi: BlockJacobian | None = None
    dalpha: BlockJacobian | None = None
    dp: BlockJacobian | None = None
    pm: ParamModel | None = None

    @property
    def sizes(self):
        return self.model.sizes

    @property
    def p_minus(self):
        return self.p[:len(self.model.minus)]

    @property
    def p_zero(self):
        return self.p[len(self.model.minus):]

    def _pc(self):
        return _Pieces(self.model, self.pm)

    def density(self, x):
        """(pi+(x), pi-(x), pi0(x))."""
        return density(self.model, self.p, self.first, x)

    def density_row(self, x):
        """pi(x) as one row in the model's phase order."""
        return self._scatter(np.concatenate(self.density(x)))

    def _scatter(self, v):
        m = self.model
        out = np.zeros(v.shape[:-1] + (m.m,), dtype=v.dtype)
        out[..., m.index("+-0")] = v
        return out

    def boundary_row(self):
        """Mass at level 0 in the model's phase order (zero on S+)."""
        out = np.zeros(self.model.m)
        out[self.model.index("-0")] = self.p
        return out

    def integrated_density(self):
        """int_0^inf pi(x) dx per phase, in closed form."""
        pc = self._pc()
        Kinv = matcalc.inv(-self.first.K.real, SingularK, "-K")
        u = self.p @ pc.Tm0p @ Kinv @ pc.R(self.first.Psi.real)
        return self._scatter(np.concatenate([u, u @ pc.zero_map()]))

    def dintegrated_density(self):
        """d/dtheta of int_0^inf pi(x) dx with shape (p, m)."""
        if self.dp is None:
            raise ValueError("bundle was computed without derivatives")
        pc = self._pc()
        u = self.transform(0.0)[None, :]
        du = self.dtransform(0.0)
        d0 = dproduct(u, du, pc.zero_map(), pc.dzero_map())
        slabs = np.concatenate([du.slabs, d0.slabs], axis=2)[:, 0, :]
        return self._scatter(slabs)

    def ddensity(self, x):
        """Jacobians of (pi+(x), pi-(x), pi0(x)) as 1 x n block rows."""
        if self.dp is None:
            raise ValueError("bundle was computed without derivatives")
        pc = self._pc()
        fr = self.first
        K, dK = fr.K.real, BlockJacobian(fr.dK.data.real, fr.dK.cols, fr.dK.params)
        Psi, dPsi = fr.Psi.real, BlockJacobian(fr.dPsi.data.real, fr.dPsi.cols, fr.dPsi.params)
        eK, deK = matcalc.expm_and_dexp(K, dK, x)
        P = self.p[None, :]
        a = dproduct(P, self.dp, pc.Tm0p, pc.dTm0p)
        b = dproduct(P @ pc.Tm0p, a, eK, deK)
        u = P @ pc.Tm0p @ eK
        du = dproduct(u, b, pc.R(Psi), pc.dR(Psi, dPsi))
        uR = u @ pc.R(Psi)
        d0 = dproduct(uR, du, pc.zero_map(), pc.dzero_map())
        n_p = pc.n_p
        return du.sub(cols=slice(0, n_p)), du.sub(cols=slice(n_p, None)), d0

    def ddensity_row(self, x):
        dp_, dm_, d0 = self.ddensity(x)
        slabs = np.concatenate([dp_.slabs, dm_.slabs, d0.slabs], axis=2)[:, 0, :]
        return self._scatter(slabs)  # shape (p, m)

    def transform(self, v):
        """L_pi(v) = int e^{-vx} [pi+ pi-](x) dx = p T (vI - K)^-1 R."""
        pc = self._pc()
        K = self.first.K.real
        Rv = matcalc.inv(v * np.eye(pc.n_p) - K)
        return self.p @ pc.Tm0p @ Rv @ pc.R(self.first.Psi.real)

    def dtransform(self, v):
        """Jacobian of L_pi(v) (the transform of the density derivative)."""
        pc = self._pc()
        fr = self.first
        K = fr.K.real
        dK = BlockJacobian(fr.dK.data.real, fr.dK.cols, fr.dK.params)
        Psi = fr.Psi.real
        dPsi = BlockJacobian(fr.dPsi.data.real, fr.dPsi.cols, fr.dPsi.params)
        A = v * np.eye(pc.n_p) - K
        Rv = matcalc.inv(A)
        dRv = dinverse(A, -dK)
        P = self.p[None, :]
        a = dproduct(P, self.dp, pc.Tm0p, pc.dTm0p)
        b = dproduct(P @ pc.Tm0p, a, Rv, dRv)
        return dproduct(P @ pc.Tm0p @ Rv, b, pc.R(Psi), pc.dR(Psi, dPsi))

    def density_via_transform(self, x, method="euler", order=None):
        return ilt.invert(lambda v: self.transform(v), x, method, order).value

    def ddensity_via_transform(self, x, method="euler", order=None):
        return ilt.invert(lambda v: self.dtransform(v).data, x, method, order).value


def stationary(obj, derivatives=True):
    """Stationary distribution (and jacobians when `obj` is a ParamModel)."""
    pm = obj if isinstance(obj, ParamModel) else None
    model = obj.model if pm is not None else obj
    want = derivatives and pm is not None
    fr = first_return(pm if want else model, 0.0, derivatives=want)
    xi = solve_xi_vector(model, fr)
    alpha = normalizing_alpha(model, xi, fr)
    p = boundary_mass(model, xi, alpha)
    if not want:
        return StationaryBundle(model, fr, xi, alpha, p)
    dxi, dalpha, dp = dstationary(pm, fr, xi, alpha)
    return StationaryBundle(model, fr, xi, alpha, p, dxi, dalpha, dp, pm)


def dstationary(pm, bundle, xi, alpha):
    """Jacobians of xi, alpha and p."""
    model = pm.model
    pc = _Pieces(model, pm)
    P = pm.p
    Psi = bundle.Psi.real
    dPsi = BlockJacobian(bundle.dPsi.data.real, bundle.dPsi.cols, P)
    K = bundle.K.real
    dK = BlockJacobian(bundle.dK.data.real, bundle.dK.cols, P)

    # xi: dxi (I - M) = xi dM, dxi 1 = 0
    EN = pc.E @ pc.N
    dEN = pc.dN.lmul(pc.E)
    ENT = EN @ pc.Tm0p
    dENT = dproduct(EN, dEN, pc.Tm0p, pc.dTm0p)
    M = ENT @ Psi
    dM = dproduct(ENT, dENT, Psi, dPsi)
    r = xi @ dM.slabs  # (p, n_m)
    rhs = np.hstack([r, np.zeros((P, 1))])
    # dPsi loses accuracy like 1/mu^2 as the drift mu approaches 0, and the
    # solvability condition r 1 = 0 holds only to that accuracy
    size = max(float((np.abs(xi) @ np.abs(dM.slabs)).max(initial=0.0)),
               1.0 / drift(model) ** 2)
    dxi = BlockJacobian.of_vector_slabs(_constrained_left_solve(M, rhs, "dxi", size))

    # Z and alpha
    Kinv = matcalc.inv(-K, SingularK, "-K")
    dKinv = dinverse(-K, -dK)
    R = pc.R(Psi)
    dR = pc.dR(Psi, dPsi)
    ones_pm = np.ones((pc.n_p + pc.n_m, 1))
    zm = pc.zero_map()
    inner = ones_pm + zm @ np.ones((pc.n_0, 1))
    dinner = pc.dzero_map().rmul(np.ones((pc.n_0, 1)))
    KR = Kinv @ R
    dKR = dproduct(Kinv, dKinv, R, dR)
    w = KR @ inner
    dw = dproduct(KR, dKR, inner, dinner)
    y = np.ones((pc.n_m + pc.n_0, 1)) + pc.Tm0p @ w
    dy = dproduct(pc.Tm0p, pc.dTm0p, w, dw)
    xi0 = np.concatenate([xi, np.zeros(pc.n_0)])[None, :]
    dxi0 = hstack(dxi, _const(np.zeros((1, pc.n_0)), P))
    xN = xi0 @ pc.N
    dxN = dproduct(xi0, dxi0, pc.N, pc.dN)
    dZ = dproduct(xN, dxN, y, dy)
    dalpha = dZ * (-alpha ** 2)

    # p = alpha [xi 0] N
    dp = BlockJacobian.from_slabs(dalpha.slabs * xN[None] + alpha * dxN.slabs)
    return dxi, dalpha, dp
