"""Transient analysis in the Laplace domain and its parameter derivatives.

The process starts at level z > 0 in a phase drawn from g, which lives on
S- (``side="minus"``) or on S+ (``side="plus"``).  For Re(s) > 0 the module
evaluates

* p~(s): transform of the mass at level 0, a row over S- u S0;
* f~(x, s): transform of the density at level x, split over S+, S-, S0;

and their jacobians, then inverts them numerically to the time domain.

Two-sided first-passage matrices come from the linear relation

    [G H] Mbig = [[0, Psi e^{Dx}, e^{U(y-x)},    0],
                  [0, e^{Dx},     Xi e^{U(y-x)}, 0]]

with block columns ordered (+, -, +, -); y = x is allowed directly.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from . import ilt, matcalc
from .errors import SingularPassageSystem, SingularRepeatFactor
from .firstreturn import FirstReturnBundle, first_return
from .matcalc import BlockJacobian, block_matrix, dinverse, dproduct, hstack
from .model import ParamModel, as_scalar

TIME_TOL = 1e-5


def _zero_jac(rows, cols, p, dtype=complex):
    return BlockJacobian.zero(rows, cols, p, dtype=dtype)


def _eye_jac(n, p):
    return _zero_jac(n, n, p)


# ---------------------------------------------------------------------------
# passage matrices

@dataclass(frozen=True)
class PassageMatrices:
    x: float
    y: float
    s: complex
    G_pm: np.ndarray
    G_mm: np.ndarray
    H_pp: np.ndarray
    H_mp: np.ndarray
    GH: np.ndarray
    dGH: BlockJacobian | None = None
    dGH_alt: BlockJacobian | None = None

    def _split(self, jac, n_p, n_m):
        n = n_p + n_m
        return {"G_pm": jac.sub(slice(0, n_p), slice(n_p, n)),
                "G_mm": jac.sub(slice(n_p, n), slice(n_p, n)),
                "H_pp": jac.sub(slice(0, n_p), slice(n, n + n_p)),
                "H_mp": jac.sub(slice(n_p, n), slice(n, n + n_p))}

    def jacobians(self, route="product"):
        """Dict of jacobians of G_pm, G_mm, H_pp, H_mp."""
        jac = self.dGH if route == "product" else self.dGH_alt
        if jac is None:
            raise ValueError("passage matrices were computed without derivatives")
        return self._split(jac, self.G_pm.shape[0], self.G_mm.shape[0])


def _passage_parts(bundle, x, y):
    n_p, n_m = bundle.Psi.shape
    Psi, Xi, D, U = bundle.Psi, bundle.Xi, bundle.D, bundle.U
    eDx = matcalc.expm(D * x)
    eDy = matcalc.expm(D * y)
    eUyx = matcalc.expm(U * (y - x))
    eUy = matcalc.expm(U * y)
    Ip, Im = np.eye(n_p), np.eye(n_m)
    Zpp, Zpm, Zmp, Zmm = (np.zeros((n_p, n_p)), np.zeros((n_p, n_m)),
                          np.zeros((n_m, n_p)), np.zeros((n_m, n_m)))
    left = np.block([[Zpp, Psi @ eDx, eUyx, Zpm],
                     [Zmp, eDx, Xi @ eUyx, Zmm]])
    big = np.block([[Ip, Zpm, eUy, Zpm],
                    [Zmp, Im, Xi @ eUy, Zmm],
                    [Zpp, Psi @ eDy, Ip, Zpm],
                    [Zmp, eDy, Zmp, Im]])
    return left, big


def _passage_jacobians(bundle, x, y):
    n_p, n_m = bundle.Psi.shape
    p = bundle.dPsi.params
    Psi, Xi, D, U = bundle.Psi, bundle.Xi, bundle.D, bundle.U
    eDx, deDx = matcalc.expm_and_dexp(D, bundle.dD, x)
    eDy, deDy = matcalc.expm_and_dexp(D, bundle.dD, y)
    eUyx, deUyx = matcalc.expm_and_dexp(U, bundle.dU, y - x)
    eUy, deUy = matcalc.expm_and_dexp(U, bundle.dU, y)
    Z = _zero_jac
    d_left = block_matrix([
        [Z(n_p, n_p, p), dproduct(Psi, bundle.dPsi, eDx, deDx), deUyx, Z(n_p, n_m, p)],
        [Z(n_m, n_p, p), deDx, dproduct(Xi, bundle.dXi, eUyx, deUyx), Z(n_m, n_m, p)]])
    d_big = block_matrix([
        [Z(n_p, n_p, p), Z(n_p, n_m, p), deUy, Z(n_p, n_m, p)],
        [Z(n_m, n_p, p), Z(n_m, n_m, p), dproduct(Xi, bundle.dXi, eUy, deUy), Z(n_m, n_m, p)],
        [Z(n_p, n_p, p), dproduct(Psi, bundle.dPsi, eDy, deDy), Z(n_p, n_p, p), Z(n_p, n_m, p)],
        [Z(n_m, n_p, p), deDy, Z(n_m, n_p, p), Z(n_m, n_m, p)]])
    return d_left, d_big


def passage_matrices(bundle, x, y, derivatives=None):
    """Two-sided first-passage transforms G^{(x,y)}(s), H^{(x,y)}(s).

    ``derivatives`` defaults to whether the bundle carries jacobians; when
    on, both the direct product-rule route and the alternative route are
    evaluated.
    """
    if not (0 <= x <= y) or y <= 0:
        raise ValueError(f"need 0 <= x <= y and y > 0, got x={x}, y={y}")
    left, big = _passage_parts(bundle, x, y)
    big_inv = matcalc.inv(big, SingularPassageSystem, "passage system")
    GH = left @ big_inv
    n_p, n_m = bundle.Psi.shape
    n = n_p + n_m
    parts = dict(G_pm=GH[:n_p, n_p:n], G_mm=GH[n_p:, n_p:n],
                 H_pp=GH[:n_p, n:n + n_p], H_mp=GH[n_p:, n:n + n_p])
    if derivatives is None:
        derivatives = bundle.has_derivatives
    if not derivatives:
        return PassageMatrices(x, y, bundle.s, GH=GH, **parts)
    d_left, d_big = _passage_jacobians(bundle, x, y)
    # product rule on left x big^-1
    d_big_inv = dinverse(big, d_big)
    dGH = dproduct(left, d_left, big_inv, d_big_inv)
    # alternative: (d left - [G H] d big)(I kron big^-1)
    dGH_alt = (d_left - d_big.lmul(GH)).rmul(big_inv)
    return PassageMatrices(x, y, bundle.s, GH=GH, dGH=dGH, dGH_alt=dGH_alt, **parts)


# ---------------------------------------------------------------------------
# transforms

@dataclass(frozen=True)
class TransientPoint:
    """Transform values at one s (and one x for the density)."""
    s: complex
    p: np.ndarray
    dp: BlockJacobian | None = None
    x: float | None = None
    f_plus: np.ndarray | None = None
    f_minus: np.ndarray | None = None
    f_zero: np.ndarray | None = None
    df_plus: BlockJacobian | None = None
    df_minus: BlockJacobian | None = None
    df_zero: BlockJacobian | None = None


class Transient:
    """Transient quantities of an SFM started at level z with phase law g.

    Parameters
    ----------
    obj : SfmModel or ParamModel
        A ParamModel enables the derivative methods.
    z : float
        Initial level, z > 0.
    g : array_like
        Initial phase distribution over S- (``side="minus"``) or S+
        (``side="plus"``), in the model's index order within that set.
    side : {"minus", "plus"}
    """

    def __init__(self, obj, z, g, side="minus"):
        if side not in ("minus", "plus"):
            raise ValueError("side must be 'minus' or 'plus'")
        self.pm = obj if isinstance(obj, ParamModel) else None
        self.model = obj.model if self.pm is not None else obj
        if not z > 0:
            raise ValueError("initial level must be positive")
        g = np.asarray(g, dtype=float).reshape(-1)
        n_p, n_m, _ = self.model.sizes
        want = n_m if side == "minus" else n_p
        if g.shape[0] != want:
            raise ValueError(f"g must have {want} entries for a {side}-side start")
        if np.any(g < 0) or abs(g.sum() - 1) > 1e-12:
            raise ValueError("g must be a probability vector")
        self.z = float(z)
        self.g = g
        self.side = side
        self._bundle = functools.lru_cache(maxsize=256)(self._make_bundle)

    def _make_bundle(self, s, derivatives):
        obj = self.pm if derivatives else self.model
        return first_return(obj, s, derivatives=derivatives)

    def bundle(self, s, derivatives=False):
        if derivatives and self.pm is None:
            raise ValueError("derivatives need a ParamModel")
        return self._bundle(as_scalar(s), derivatives)

    # -- shared pieces ------------------------------------------------------

    def _pieces(self, s, fr, derivatives):
        m = self.model
        n_p, n_m, n_0 = m.sizes
        B = m.block
        Tmm0 = B("-0", "-0")
        Tm0p = B("-0", "+")
        E = np.hstack([np.eye(n_m), np.zeros((n_m, n_0))])
        A = s * np.eye(n_m + n_0) - Tmm0
        Ns = matcalc.inv(A, what="sI - T_(-0)(-0)")
        ENs = E @ Ns
        rep = np.eye(n_m) - ENs @ Tm0p @ fr.Psi
        rep_inv = matcalc.inv(rep, SingularRepeatFactor, "boundary repeat factor")
        out = dict(E=E, Ns=Ns, ENs=ENs, Tm0p=Tm0p, rep_inv=rep_inv,
                   ip=np.diag(1.0 / m.rates("+")), im=np.diag(1.0 / np.abs(m.rates("-"))))
        if n_0:
            W = matcalc.inv(s * np.eye(n_0) - B("0", "0"), what="sI - T00")
        else:
            W = np.zeros((0, 0))
        out["zero_map"] = B("+-", "0") @ W
        if not derivatives:
            return out
        pm = self.pm
        dA = -pm.dT_block("-0", "-0")
        dNs = dinverse(A, dA)
        dENs = dNs.lmul(E)
        dTm0p = pm.dT_block("-0", "+")
        a = dproduct(ENs, dENs, Tm0p, dTm0p)
        d_rep = -dproduct(ENs @ Tm0p, a, fr.Psi, fr.dPsi)
        cp, cm = m.rates("+"), m.rates("-")
        p = pm.p
        dip = np.zeros((p, n_p, n_p))
        dip[:, np.arange(n_p), np.arange(n_p)] = -pm.dc("+") / cp ** 2
        dim = np.zeros((p, n_m, n_m))
        dim[:, np.arange(n_m), np.arange(n_m)] = pm.dc("-") / cm ** 2
        if n_0:
            dW = dinverse(s * np.eye(n_0) - B("0", "0"), -pm.dT_block("0", "0"))
        else:
            dW = BlockJacobian.zero(0, 0, p)
        d_zero_map = dproduct(B("+-", "0"), pm.dT_block("+-", "0"), W, dW)
        out.update(dENs=dENs, dTm0p=dTm0p, d_rep_inv=dinverse(rep, d_rep),
                   dip=BlockJacobian.from_slabs(dip), dim=BlockJacobian.from_slabs(dim),
                   d_zero_map=d_zero_map)
        return out

    def _g_start(self, fr, derivatives):
        """Row g' with p~ = g' e^{Dz} (...): g itself, or g+ Psi."""
        g = self.g[None, :]
        if self.side == "minus":
            gs = g.astype(complex)
            return gs, (_zero_jac(1, gs.shape[1], self.pm.p) if derivatives else None)
        return g @ fr.Psi, (fr.dPsi.lmul(g) if derivatives else None)

    # -- p~ -----------------------------------------------------------------

    def p_transform(self, s, derivatives=False):
        """p~(s) (and its jacobian) as a TransientPoint."""
        s = as_scalar(s)
        fr = self.bundle(s, derivatives)
        pc = self._pieces(s, fr, derivatives)
        g0, dg0 = self._g_start(fr, derivatives)
        eDz = matcalc.expm(fr.D * self.z)
        head = g0 @ eDz
        tail = pc["rep_inv"] @ pc["ENs"]
        pt = (head @ tail)[0]
        if not derivatives:
            return TransientPoint(s, pt)
        _, deDz = matcalc.expm_and_dexp(fr.D, fr.dD, self.z)
        dhead = dproduct(g0, dg0, eDz, deDz)
        dtail = dproduct(pc["rep_inv"], pc["d_rep_inv"], pc["ENs"], pc["dENs"])
        return TransientPoint(s, pt, dproduct(head, dhead, tail, dtail))

    # -- f~ -----------------------------------------------------------------

    def f_transform(self, x, s, derivatives=False):
        """f~(x, s) split over S+, S-, S0, with p~(s) and jacobians."""
        if not x > 0:
            raise ValueError("density level must be positive")
        s = as_scalar(s)
        fr = self.bundle(s, derivatives)
        pc = self._pieces(s, fr, derivatives)
        pt = self.p_transform(s, derivatives)
        Psi = fr.Psi
        n_p, n_m = Psi.shape
        P = pt.p[None, :]
        # boundary-launched part: p~ T e^{Kx} [C+^-1, Psi |C-|^-1]
        pT = P @ pc["Tm0p"]
        eKx = matcalc.expm(fr.K * x)
        R = np.hstack([pc["ip"], Psi @ pc["im"]])
        base = pT @ eKx @ R
        # first-passage part
        Hxx = passage_matrices(fr, x, x, derivatives)
        H = Hxx.H_mp
        g0, dg0 = self._g_start(fr, derivatives)
        if x <= self.z:
            eD = matcalc.expm(fr.D * (self.z - x))
            rep = np.eye(n_m) - H @ Psi
            rep_inv = matcalc.inv(rep, SingularRepeatFactor, "level-x repeat factor")
            lead = g0 @ eD @ rep_inv
            extra = np.hstack([lead @ H @ pc["ip"], lead @ pc["im"]])
        else:
            if self.side == "minus":
                Hzz = passage_matrices(fr, self.z, self.z, derivatives)
                g1 = self.g[None, :] @ Hzz.H_mp
            else:
                g1 = self.g[None, :].astype(complex)
            Hzx = passage_matrices(fr, self.z, x, derivatives)
            rep = np.eye(n_p) - Psi @ H
            rep_inv = matcalc.inv(rep, SingularRepeatFactor, "level-x repeat factor")
            lead = g1 @ Hzx.H_pp @ rep_inv
            extra = np.hstack([lead @ pc["ip"], lead @ Psi @ pc["im"]])
        fpm = base + extra
        f0 = fpm @ pc["zero_map"]
        if not derivatives:
            return TransientPoint(s, pt.p, None, x, fpm[0, :n_p], fpm[0, n_p:], f0[0])

        p = self.pm.p
        dP = pt.dp
        dpT = dproduct(P, dP, pc["Tm0p"], pc["dTm0p"])
        _, deKx = matcalc.expm_and_dexp(fr.K, fr.dK, x)
        dpTe = dproduct(pT, dpT, eKx, deKx)
        dR = hstack(pc["dip"], dproduct(Psi, fr.dPsi, pc["im"], pc["dim"]))
        dbase = dproduct(pT @ eKx, dpTe, R, dR)
        dH = Hxx.jacobians()["H_mp"]
        if x <= self.z:
            eD, deD = matcalc.expm_and_dexp(fr.D, fr.dD, self.z - x)
            d_rep = -dproduct(H, dH, Psi, fr.dPsi)
            d_rep_inv = dinverse(rep, d_rep)
            ge = g0 @ eD
            dge = dproduct(g0, dg0, eD, deD)
            dlead = dproduct(ge, dge, rep_inv, d_rep_inv)
            dlh = dproduct(lead, dlead, H, dH)
            dextra = hstack(dproduct(lead @ H, dlh, pc["ip"], pc["dip"]),
                            dproduct(lead, dlead, pc["im"], pc["dim"]))
        else:
            if self.side == "minus":
                dg1 = Hzz.jacobians()["H_mp"].lmul(self.g[None, :])
            else:
                dg1 = _zero_jac(1, n_p, p)
            dHzx = Hzx.jacobians()["H_pp"]
            d_rep = -dproduct(Psi, fr.dPsi, H, dH)
            d_rep_inv = dinverse(rep, d_rep)
            gh = g1 @ Hzx.H_pp
            dgh = dproduct(g1, dg1, Hzx.H_pp, dHzx)
            dlead = dproduct(gh, dgh, rep_inv, d_rep_inv)
            dlp = dproduct(lead, dlead, Psi, fr.dPsi)
            dextra = hstack(dproduct(lead, dlead, pc["ip"], pc["dip"]),
                            dproduct(lead @ Psi, dlp, pc["im"], pc["dim"]))
        dfpm = dbase + dextra
        df0 = dproduct(fpm, dfpm, pc["zero_map"], pc["d_zero_map"])
        return TransientPoint(s, pt.p, dP, x, fpm[0, :n_p], fpm[0, n_p:], f0[0],
                              dfpm.sub(cols=slice(0, n_p)), dfpm.sub(cols=slice(n_p, None)),
                              df0)

    # -- time domain --------------------------------------------------------

    def _invert(self, F, t, method, order, tol):
        return ilt.invert(F, t, method=method, order=order, tol=tol)

    @property
    def drain_time(self):
        """Minimum time to reach level 0: z over the fastest down rate."""
        return self.arrival_time(0.0)

    def arrival_time(self, x):
        """Earliest time at which the level can be at x.

        f(x, .) and p vanish before it, and the first arrivals make a jump
        there.
        """
        if x < self.z:
            return (self.z - x) / np.max(np.abs(self.model.rates("-")))
        if x > self.z:
            return (x - self.z) / np.max(self.model.rates("+"))
        return 0.0

    def _invert_shifted(self, F, t, method, order, tol, t0=None):
        # inverting e^{s t0} F(s) at t - t0 moves the jump at t0 to the origin
        t0 = self.drain_time if t0 is None else t0
        if t <= t0:
            return self._invert(F, t, method, order, tol)
        return self._invert(lambda s: np.exp(s * t0) * F(s), t - t0, method, order, tol)

    def p_time(self, t, method="euler", order=None, tol=TIME_TOL):
        """p(t): probability of being at level 0 at time t, per S- u S0 phase."""
        return self._invert_shifted(lambda s: self.p_transform(s).p, t, method, order, tol)

    def dp_time(self, t, method="euler", order=None, tol=TIME_TOL):
        """dp(t)/dtheta with shape (p, n- + n0)."""
        return self._invert_shifted(lambda s: self.p_transform(s, True).dp.slabs[:, 0, :],
                                    t, method, order, tol)

    def p_dp_time(self, t, method="euler", order=None, tol=TIME_TOL):
        """p(t) and dp(t)/dtheta from one inversion; value has shape (1 + p, n- + n0)."""
        def F(s):
            pt = self.p_transform(s, True)
            return np.vstack([pt.p[None, :], pt.dp.slabs[:, 0, :]])
        return self._invert_shifted(F, t, method, order, tol)

    def f_df_time(self, x, t, method="euler", order=None, tol=TIME_TOL):
        """f(x, t) and df/dtheta from one inversion; value has shape (1 + p, m)."""
        def F(s):
            pt = self.f_transform(x, s, True)
            f = np.concatenate([pt.f_plus, pt.f_minus, pt.f_zero])
            df = np.concatenate([pt.df_plus.slabs, pt.df_minus.slabs,
                                 pt.df_zero.slabs], axis=2)[:, 0, :]
            return np.vstack([f[None, :], df])
        return self._invert_shifted(F, t, method, order, tol, self.arrival_time(x))

    def f_time(self, x, t, method="euler", order=None, tol=TIME_TOL):
        """f(x, t) over S+ u S- u S0 (in that block order)."""
        def F(s):
            pt = self.f_transform(x, s)
            return np.concatenate([pt.f_plus, pt.f_minus, pt.f_zero])
        return self._invert_shifted(F, t, method, order, tol, self.arrival_time(x))

    def df_time(self, x, t, method="euler", order=None, tol=TIME_TOL):
        """df(x, t)/dtheta with shape (p, m) in S+, S-, S0 block order."""
        def F(s):
            pt = self.f_transform(x, s, True)
            return np.concatenate([pt.df_plus.slabs, pt.df_minus.slabs,
                                   pt.df_zero.slabs], axis=2)[:, 0, :]
        return self._invert_shifted(F, t, method, order, tol, self.arrival_time(x))
