"""Lifetime of a fluid model on [0, 1] with boundary behaviour at both ends.

The level starts at 0 in a phase drawn from alpha over S+.  On reaching 0
in a down phase it re-enters S+ through P_return; on reaching 1 it spends
an exponential-phase sojourn at the upper boundary.  With

    W(s) = (I - G+-^{(0,1)}(s) P_return)^-1 H++^{(0,1)}(s),
    Pbar(s) = P_hat_pp + P_hat_p0 (sI - T_hat_00)^-1 T_hat_0p,

the lifetime transform is L(s) = W(s) Pbar(s) 1 and h(t) inverts alpha L.
Rates are parameterised by theta_i = |c_i|.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq

from . import ilt, matcalc
from .errors import ModelError
from .firstreturn import first_return
from .matcalc import dinverse, dproduct
from .model import ParamModel, SfmModel, as_scalar
from .transient import passage_matrices

HYDRO_T = np.array([
    [-83.9, 40.7, 0.0, 43.2, 0.0, 0.0],
    [180.2, -262.9, 0.0, 82.7, 0.0, 0.0],
    [1085.5, 314.9, -1440.0, 39.6, 0.0, 0.0],
    [0.0, 0.0, 17.6, -1440.0, 1422.4, 0.0],
    [0.0, 0.0, 62.3, 0.0, -64.8, 2.5],
    [0.0, 0.0, 0.0, 0.0, 39.4, -39.4],
])
HYDRO_RATES = np.array([0.004, 0.017, 0.020, 0.020, 0.001, -0.01])
HYDRO_PHASES = ("on-design", "off-design", "start", "stop", "idle", "maintenance")


def rate_family(T, rates, names=None, param_names=None):
    """ParamModel with theta_i = |c_i| and T held fixed."""
    T = np.asarray(T, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if np.any(rates == 0):
        raise ModelError("every rate must be nonzero to be parameterised by its magnitude")
    signs = np.sign(rates)
    m = len(rates)

    def build(theta):
        return SfmModel(T, signs * np.asarray(theta, dtype=float), names=names)

    def derivative(theta):
        return np.zeros((m, m, m)), np.diag(signs)

    if param_names is None:
        param_names = tuple(f"theta{i + 1}" for i in range(m))
    return ParamModel(build, np.abs(rates), derivative, names=param_names)


@dataclass(frozen=True)
class LifetimeSpec:
    pm: ParamModel
    P_return: np.ndarray
    P_hat_pp: np.ndarray
    P_hat_p0: np.ndarray
    T_hat_00: np.ndarray
    T_hat_0p: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        n_p, n_m, _ = self.pm.model.sizes
        k = np.asarray(self.T_hat_00).shape[0]
        shapes = {"P_return": (n_m, n_p), "P_hat_pp": (n_p, n_p), "P_hat_p0": (n_p, k),
                  "T_hat_00": (k, k), "T_hat_0p": (k, n_p), "alpha": (n_p,)}
        for name, shape in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ModelError(f"{name} has shape {arr.shape}, expected {shape}")
            object.__setattr__(self, name, arr)
        for name in ("P_return", "P_hat_pp"):
            arr = getattr(self, name)
            if np.any(arr < 0) or np.any(arr.sum(axis=1) > 1 + 1e-12):
                raise ModelError(f"{name} must be substochastic")
        off = self.T_hat_00 - np.diag(np.diag(self.T_hat_00))
        if np.any(off < 0) or np.any(self.T_hat_00.sum(axis=1) > 1e-12):
            raise ModelError("T_hat_00 must be a subgenerator")
        if np.any(self.alpha < 0) or abs(self.alpha.sum() - 1) > 1e-12:
            raise ModelError("alpha must be a probability vector over S+")

    def at(self, theta):
        return LifetimeSpec(self.pm.at(theta), self.P_return, self.P_hat_pp,
                            self.P_hat_p0, self.T_hat_00, self.T_hat_0p, self.alpha)


def hydro_spec(theta=None, alpha=None):
    """The six-phase deterioration model with its boundary data."""
    pm = rate_family(HYDRO_T, HYDRO_RATES, names=HYDRO_PHASES,
                     param_names=tuple(f"theta{i}" for i in range(1, 7)))
    if theta is not None:
        pm = pm.at(theta)
    to_idle = np.zeros((5, 5))
    to_idle[:4, 4] = 1.0
    spec = LifetimeSpec(
        pm=pm,
        P_return=np.array([[0.0, 0.0, 0.0, 0.0, 1.0]]),
        P_hat_pp=to_idle,
        P_hat_p0=np.array([[0.0], [0.0], [0.0], [0.0], [1.0]]),
        T_hat_00=np.array([[-64.8]]),
        T_hat_0p=np.array([[0.0, 0.0, 0.0, 0.0, 64.8]]),
        alpha=np.eye(5)[4] if alpha is None else alpha,
    )
    return spec


def upper_boundary(spec, s):
    """Pbar(s) 1: transform of the sojourn at level 1, per entry phase."""
    k = spec.T_hat_00.shape[0]
    R = matcalc.solve(s * np.eye(k) - spec.T_hat_00, spec.T_hat_0p)
    return (spec.P_hat_pp + spec.P_hat_p0 @ R) @ np.ones(spec.P_hat_pp.shape[1])


def lifetime_transform(spec, s, derivatives=True):
    """alpha L(s) and (optionally) its gradient in theta."""
    s = as_scalar(s)
    fr = first_return(spec.pm if derivatives else spec.pm.model, s, derivatives=derivatives)
    pas = passage_matrices(fr, 0.0, 1.0, derivatives)
    G, H = pas.G_pm, pas.H_pp
    n_p = H.shape[0]
    A = np.eye(n_p) - G @ spec.P_return
    A_inv = matcalc.inv(A, what="lower-boundary repeat factor")
    W = A_inv @ H
    v = upper_boundary(spec, s)[:, None]
    value = (spec.alpha @ W @ v).item()
    if not derivatives:
        return value, None
    jac = pas.jacobians()
    dA = -jac["G_pm"].rmul(spec.P_return)
    dW = dproduct(A_inv, dinverse(A, dA), H, jac["H_pp"])
    dL = dW.rmul(v).lmul(spec.alpha[None, :])
    return value, dL.slabs[:, 0, 0]


@dataclass(frozen=True)
class LifetimeDensity:
    t: np.ndarray
    h: np.ndarray
    dh: np.ndarray
    h_error: np.ndarray
    dh_error: np.ndarray
    theta: np.ndarray

    @property
    def semi_relative(self):
        """theta_i * dh/dtheta_i with shape (len(t), p)."""
        return self.dh * self.theta[None, :]

    def total_mass(self):
        return float(simpson(self.h, x=self.t))

    def zero_crossings(self, k):
        """Levels of t where dh/dtheta_k changes sign (linear interpolation)."""
        y = self.dh[:, k]
        idx = np.flatnonzero(np.sign(y[:-1]) * np.sign(y[1:]) < 0)
        return self.t[idx] - y[idx] * (self.t[idx + 1] - self.t[idx]) / (y[idx + 1] - y[idx])


def lifetime_density(spec, ts, method="euler", order=None, tol=None):
    """h(t) and dh/dtheta on the grid ts by numerical inversion."""
    ts = np.asarray(ts, dtype=float)
    p = spec.pm.p
    h = np.empty(ts.size)
    dh = np.empty((ts.size, p))
    he = np.empty(ts.size)
    dhe = np.empty((ts.size, p))

    def F(s):
        val, grad = lifetime_transform(spec, s)
        return np.concatenate([[val], grad])

    for i, t in enumerate(ts):
        res = ilt.invert(F, t, method=method, order=order, tol=tol)
        h[i], dh[i] = res.value[0], res.value[1:]
        he[i], dhe[i] = res.error_estimate[0], res.error_estimate[1:]
    return LifetimeDensity(ts, h, dh, he, dhe, np.asarray(spec.pm.theta, dtype=float))


def lifetime_cdf(spec, t, method="euler", order=None):
    """P(lifetime <= t) by inverting alpha L(s) / s."""
    res = ilt.invert(lambda s: lifetime_transform(spec, s, False)[0] / s, t,
                     method=method, order=order)
    return float(res.value)


def lifetime_median(spec, lo, hi, method="euler", order=None):
    """Median of the lifetime, bracketed in [lo, hi]."""
    return brentq(lambda t: lifetime_cdf(spec, t, method, order) - 0.5, lo, hi, xtol=1e-6)


__all__ = ["HYDRO_T", "HYDRO_RATES", "LifetimeSpec", "LifetimeDensity", "hydro_spec",
           "rate_family", "upper_boundary", "lifetime_transform", "lifetime_density",
           "lifetime_cdf", "lifetime_median"]
