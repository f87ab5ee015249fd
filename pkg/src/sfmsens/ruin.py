"""Ruin probabilities of a compound Poisson risk process via a fluid model.

The surplus R_t = x + c t - sum_{k <= N_t} U_k has Poisson(lam) claims with
phase-type sizes (alpha, M).  Stretching every claim into a unit-rate
descent through the claim phases gives a fluid model with

    T_11 = -lam,  T_1(k+1) = lam alpha_k,  T_(i+1)(j+1) = M_ij,  T_(k+1)1 = t_k,
    c = (c, -1, ..., -1),

which reaches level 0 exactly when the risk process is ruined, so
psi(x) = (Psi e^{Dx} 1)_1 at s = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matcalc
from .errors import InvalidPhaseType, NegativeLoading
from .firstreturn import first_return
from .matcalc import dproduct
from .model import ParamModel, SfmModel, drift


@dataclass(frozen=True)
class RuinSpec:
    """Premium c, claim intensity lam and claim law (alpha, M).

    ``dM`` (p, N, N) and ``dalpha`` (p, N) give the derivatives of the claim
    law in theta; ``theta`` names the parameter point they belong to.
    """
    premium: float
    lam: float
    alpha: np.ndarray
    M: np.ndarray
    theta: np.ndarray | None = None
    dM: np.ndarray | None = None
    dalpha: np.ndarray | None = None
    dlam: np.ndarray | None = None
    dpremium: np.ndarray | None = None
    param_names: tuple | None = None

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        M = np.asarray(self.M, dtype=float)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "M", M)
        n = alpha.size
        if M.shape != (n, n):
            raise InvalidPhaseType(f"M has shape {M.shape}, expected {(n, n)}")
        if np.any(alpha < 0) or alpha.sum() > 1 + 1e-12:
            raise InvalidPhaseType("alpha must be nonnegative with alpha 1 <= 1")
        off = M - np.diag(np.diag(M))
        if np.any(off < 0) or np.any(M.sum(axis=1) > 1e-12):
            raise InvalidPhaseType("M must be a subgenerator")
        if np.any(self.exit_vector < -1e-12):
            raise InvalidPhaseType("exit vector -M 1 must be nonnegative")
        if abs(np.linalg.det(M)) < 1e-300:
            raise InvalidPhaseType("M must be nonsingular")
        if not (self.premium > 0 and self.lam > 0):
            raise InvalidPhaseType("premium and claim intensity must be positive")

    @property
    def exit_vector(self):
        return -self.M.sum(axis=1)

    @property
    def mean_claim(self):
        return float(self.alpha @ np.linalg.solve(-self.M, np.ones(self.alpha.size)))

    @property
    def loading(self):
        """Relative safety loading c / (lam E U) - 1."""
        return self.premium / (self.lam * self.mean_claim) - 1

    @property
    def n_params(self):
        return 0 if self.theta is None else len(self.theta)


def embed(premium, lam, alpha, M):
    """Generator and rates of the fluid embedding."""
    alpha = np.asarray(alpha, dtype=float)
    M = np.asarray(M, dtype=float)
    n = alpha.size
    t = -M.sum(axis=1)
    T = np.zeros((n + 1, n + 1))
    T[0, 0] = -lam
    T[0, 1:] = lam * alpha
    T[1:, 1:] = M
    T[1:, 0] = t
    # a defective alpha means zero-size claims, which return at once
    T[0, 0] += lam * (1 - alpha.sum())
    c = np.concatenate([[premium], -np.ones(n)])
    return T, c


def _embed_derivatives(spec):
    n = spec.alpha.size
    p = spec.n_params
    zeros = np.zeros
    dM = zeros((p, n, n)) if spec.dM is None else np.asarray(spec.dM, dtype=float)
    dal = zeros((p, n)) if spec.dalpha is None else np.asarray(spec.dalpha, dtype=float)
    dlam = zeros(p) if spec.dlam is None else np.asarray(spec.dlam, dtype=float)
    dprem = zeros(p) if spec.dpremium is None else np.asarray(spec.dpremium, dtype=float)
    dT = zeros((p, n + 1, n + 1))
    dT[:, 0, 0] = -dlam * spec.alpha.sum() - spec.lam * dal.sum(axis=1)
    dT[:, 0, 1:] = dlam[:, None] * spec.alpha + spec.lam * dal
    dT[:, 1:, 1:] = dM
    dT[:, 1:, 0] = -dM.sum(axis=2)
    dC = zeros((p, n + 1))
    dC[:, 0] = dprem
    return dT, dC


def ruin_param_model(spec: RuinSpec, builder=None):
    """ParamModel of the embedding.

    ``builder(theta) -> RuinSpec`` lets the family be re-evaluated at
    other parameter points (needed for finite-difference checks).
    """
    if spec.theta is None:
        raise ValueError("spec carries no parameters")

    def build(theta):
        s = spec if builder is None else builder(theta)
        T, c = embed(s.premium, s.lam, s.alpha, s.M)
        return SfmModel(T, c, names=("premium",) + tuple(f"claim{i + 1}" for i in range(s.alpha.size)))

    def derivative(theta):
        s = spec if builder is None else builder(theta)
        return _embed_derivatives(s)

    return ParamModel(build, spec.theta, derivative, names=spec.param_names)


def erlang_mixture(theta1=1.0, theta2=2.0, premium=4.0, lam=1.0, weights=(0.5, 0.5)):
    """Equal-weight mixture of Erlang(2, theta1) and Erlang(2, theta2) claims."""
    th1, th2 = float(theta1), float(theta2)
    M = np.array([[-th1, th1, 0, 0], [0, -th1, 0, 0], [0, 0, -th2, th2], [0, 0, 0, -th2]])
    dM = np.zeros((2, 4, 4))
    dM[0, :2, :2] = [[-1, 1], [0, -1]]
    dM[1, 2:, 2:] = [[-1, 1], [0, -1]]
    alpha = np.array([weights[0], 0.0, weights[1], 0.0])
    return RuinSpec(premium, lam, alpha, M, theta=np.array([th1, th2]), dM=dM,
                    param_names=("theta1", "theta2"))


@dataclass(frozen=True)
class RuinResult:
    x: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray | None
    drift: float


def ruin_probability(spec: RuinSpec, xs, derivatives=True, builder=None):
    """psi(x) and d psi/dtheta on the grid xs."""
    if spec.loading <= 0:
        raise NegativeLoading("no positive safety loading: ruin is certain (psi = 1)")
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if np.any(xs < 0):
        raise ValueError("initial surplus must be nonnegative")
    derivatives = derivatives and spec.theta is not None
    if derivatives:
        pm = ruin_param_model(spec, builder)
        model = pm.model
        fr = first_return(pm, 0.0)
    else:
        T, c = embed(spec.premium, spec.lam, spec.alpha, spec.M)
        model = SfmModel(T, c)
        fr = first_return(model, 0.0, derivatives=False)
    ones = np.ones(fr.D.shape[0])
    psi = np.empty(xs.size)
    dpsi = np.empty((xs.size, spec.n_params)) if derivatives else None
    for i, x in enumerate(xs):
        if derivatives:
            E, dE = matcalc.expm_and_dexp(fr.D, fr.dD, x)
            dG = dproduct(fr.Psi, fr.dPsi, E, dE)
            dpsi[i] = (dG.slabs @ ones)[:, 0].real
        else:
            E = matcalc.expm(fr.D * x)
        psi[i] = (fr.Psi @ E @ ones)[0].real
    return RuinResult(xs, psi, dpsi, drift(model))
