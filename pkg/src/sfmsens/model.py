"""Stochastic fluid models, their parameterised families, and Q(s).

Phases are split by the sign of their rate into S+ (c > 0), S- (c < 0) and
S0 (c = 0).  Blocks of T are addressed by short keys: ``block("+", "-")`` is
T_{+-}, ``block("-0", "-0")`` is T_{(-0)(-0)} with the minus phases listed
first, and so on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import matcalc
from .errors import (DimensionMismatch, GeneratorRowSum, ModelError, NotIrreducible,
                     SignPartitionMismatch, SingularSystem, SingularTabooBlock)
from .matcalc import BlockJacobian

ROW_SUM_RTOL = 1e-12


def _as_matrix(T):
    T = np.array(T, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise DimensionMismatch(f"generator must be square, got shape {T.shape}")
    return T


class SfmModel:
    """Generator T, rate vector c and the induced phase partition.

    Parameters
    ----------
    T : (m, m) array_like
    c : (m,) array_like
    partition : (plus, minus, zero) index sequences, optional
        When given it must agree with the signs of c.
    names : sequence of str, optional
    check : bool
        Validate on construction (default).  Turning it off is only useful
        for exercising `validate` itself.
    """

    def __init__(self, T, c, partition=None, names=None, check=True):
        T = _as_matrix(T)
        c = np.array(c, dtype=float).reshape(-1)
        if c.shape[0] != T.shape[0]:
            raise DimensionMismatch(f"{T.shape[0]} phases but {c.shape[0]} rates")
        T.setflags(write=False)
        c.setflags(write=False)
        self.T = T
        self.c = c
        self.m = T.shape[0]
        self.names = tuple(names) if names is not None else tuple(str(i + 1) for i in range(self.m))
        if len(self.names) != self.m:
            raise DimensionMismatch("one name per phase is required")
        if partition is None:
            partition = (np.flatnonzero(c > 0), np.flatnonzero(c < 0), np.flatnonzero(c == 0))
        self.plus, self.minus, self.zero = (np.array(sorted(int(i) for i in part), dtype=int)
                                             for part in partition)
        self._idx = {"+": self.plus, "-": self.minus, "0": self.zero}
        if check:
            validate(self)

    def __repr__(self):
        return (f"SfmModel(m={self.m}, |S+|={len(self.plus)}, |S-|={len(self.minus)}, "
                f"|S0|={len(self.zero)})")

    @property
    def sizes(self):
        return len(self.plus), len(self.minus), len(self.zero)

    def index(self, key):
        return np.concatenate([self._idx[k] for k in key]) if key else np.zeros(0, int)

    def block(self, rows, cols):
        return self.T[np.ix_(self.index(rows), self.index(cols))]

    def rates(self, key):
        return self.c[self.index(key)]


def validate(model):
    """Raise if `model` violates a generator, partition or irreducibility invariant."""
    T, c = model.T, model.c
    m = model.m
    scale = max(np.abs(T).sum(axis=1).max(initial=0.0), 1.0)
    off = T - np.diag(np.diag(T))
    if np.any(off < 0):
        i, j = np.argwhere(off < 0)[0]
        raise GeneratorRowSum(f"negative off-diagonal rate T[{i},{j}] = {T[i, j]}")
    rows = np.abs(T.sum(axis=1))
    if np.any(rows > ROW_SUM_RTOL * scale):
        i = int(np.argmax(rows))
        raise GeneratorRowSum(f"row {i} of T sums to {T[i].sum():.3g}")
    parts = (model.plus, model.minus, model.zero)
    seen = np.concatenate(parts)
    if len(seen) != m or set(seen.tolist()) != set(range(m)):
        raise SignPartitionMismatch("partition must cover every phase exactly once")
    for part, ok, label in ((model.plus, c > 0, "+"), (model.minus, c < 0, "-"),
                            (model.zero, c == 0, "0")):
        bad = [int(i) for i in part if not ok[i]]
        if bad:
            raise SignPartitionMismatch(
                f"phase {bad[0]} has rate {c[bad[0]]} but is listed in S{label}")
    if m > 1:
        n_comp, _ = connected_components(off > 0, directed=True, connection="strong")
        if n_comp != 1:
            raise NotIrreducible(f"generator splits into {n_comp} communicating classes")


def ctmc_stationary(model):
    """Stationary vector nu of T (nu T = 0, nu 1 = 1)."""
    T = model.T
    m = model.m
    A = T.T.copy()
    A[-1, :] = 1.0
    b = np.zeros(m)
    b[-1] = 1.0
    nu = matcalc.solve(A, b, SingularSystem, "stationary system")
    scale = max(np.abs(T).max(), 1.0)
    if np.max(np.abs(nu @ T)) > 1e-12 * scale * m or np.any(nu < -1e-12):
        raise SingularSystem("stationary solve lost accuracy")
    return np.clip(nu, 0.0, None) / np.clip(nu, 0.0, None).sum()


def drift(model):
    """Mean drift mu = sum_i c_i nu_i."""
    return float(ctmc_stationary(model) @ model.c)


# ---------------------------------------------------------------------------
# fluid generator

@dataclass(frozen=True)
class QBlocks:
    """The four blocks of Q(s), with the drift attached when s = 0."""
    s: complex
    Qpp: np.ndarray
    Qpm: np.ndarray
    Qmm: np.ndarray
    Qmp: np.ndarray
    mu: float | None = None

    @property
    def norm(self):
        full = np.block([[self.Qpp, self.Qpm], [self.Qmp, self.Qmm]])
        return float(np.linalg.norm(full, np.inf)) if full.size else 0.0

    def assembled(self):
        return np.block([[self.Qpp, self.Qpm], [self.Qmp, self.Qmm]])


@dataclass(frozen=True)
class QJacobians:
    dQpp: BlockJacobian
    dQpm: BlockJacobian
    dQmm: BlockJacobian
    dQmp: BlockJacobian


def as_scalar(s):
    """Real float when s has no imaginary part, complex otherwise."""
    s = complex(s)
    return s.real if s.imag == 0 else s


def _taboo_solver(model, s):
    n0 = len(model.zero)
    A = model.block("0", "0") - s * np.eye(n0)
    return matcalc.inv(A, SingularTabooBlock, "T00 - sI")


def _q_parts(model, s):
    """Unscaled blocks A with Q = |C|^-1 A, and the taboo inverse W."""
    n_p, n_m, _ = model.sizes
    W = _taboo_solver(model, s)
    B = model.block
    A_pp = B("+", "+") - s * np.eye(n_p) - B("+", "0") @ W @ B("0", "+")
    A_pm = B("+", "-") - B("+", "0") @ W @ B("0", "-")
    A_mm = B("-", "-") - s * np.eye(n_m) - B("-", "0") @ W @ B("0", "-")
    A_mp = B("-", "+") - B("-", "0") @ W @ B("0", "+")
    return A_pp, A_pm, A_mm, A_mp, W


def fluid_generator(model, s=0.0):
    """Q(s) split into its ++, +-, --, -+ blocks."""
    s = as_scalar(s)
    A_pp, A_pm, A_mm, A_mp, _ = _q_parts(model, s)
    ip = 1.0 / model.rates("+")
    im = 1.0 / np.abs(model.rates("-"))
    mu = drift(model) if s == 0 else None
    return QBlocks(s, ip[:, None] * A_pp, ip[:, None] * A_pm,
                   im[:, None] * A_mm, im[:, None] * A_mp, mu)


# ---------------------------------------------------------------------------
# parameterised families

class ParamModel:
    """A family theta -> SfmModel with its first derivatives at a point.

    Parameters
    ----------
    build : callable
        theta -> SfmModel.
    theta : array_like, shape (p,)
    derivative : callable
        theta -> (dT, dC) with dT of shape (p, m, m) and dC of shape (p, m).
    names : sequence of str, optional
    """

    def __init__(self, build, theta, derivative, names=None):
        theta = np.array(theta, dtype=float).reshape(-1)
        theta.setflags(write=False)
        self.build = build
        self.derivative = derivative
        self.theta = theta
        self.p = theta.shape[0]
        self.names = tuple(names) if names is not None else tuple(
            f"theta{k + 1}" for k in range(self.p))
        self.model = build(theta)
        dT, dC = derivative(theta)
        dT = np.array(dT, dtype=float).reshape(self.p, self.model.m, self.model.m)
        dC = np.array(dC, dtype=float).reshape(self.p, self.model.m)
        scale = max(1.0, float(np.abs(dT).max(initial=0.0)))
        rows = np.abs(dT.sum(axis=2))
        if np.any(rows > ROW_SUM_RTOL * scale * max(self.model.m, 1)):
            k, i = np.argwhere(rows == rows.max())[0]
            raise GeneratorRowSum(
                f"dT/dtheta_{k + 1} row {i} sums to {dT[k, i].sum():.3g}; "
                "a generator family must keep zero row sums")
        moving = np.any(dC != 0, axis=0)
        if np.any(moving & (self.model.c == 0)):
            raise ModelError("a rate that is zero at theta may not depend on theta")
        dT.setflags(write=False)
        dC.setflags(write=False)
        self.dT = dT
        self.dC = dC

    def __repr__(self):
        return f"ParamModel({self.model!r}, p={self.p})"

    def at(self, theta):
        return ParamModel(self.build, theta, self.derivative, self.names)

    @classmethod
    def affine(cls, model, theta, dT, dC, names=None):
        """T(theta) = T + sum_k (theta_k - theta0_k) dT_k, likewise for c."""
        theta0 = np.array(theta, dtype=float).reshape(-1)
        p = theta0.shape[0]
        dT = np.array(dT, dtype=float).reshape(p, model.m, model.m)
        dC = np.array(dC, dtype=float).reshape(p, model.m)
        T0, c0, names_ph = model.T, model.c, model.names
        part = (model.plus, model.minus, model.zero)

        def build(th):
            d = np.asarray(th, dtype=float) - theta0
            return SfmModel(T0 + np.tensordot(d, dT, 1), c0 + d @ dC, part, names_ph)

        return cls(build, theta0, lambda th: (dT, dC), names)

    def dT_block(self, rows, cols):
        ri, ci = self.model.index(rows), self.model.index(cols)
        return BlockJacobian.from_slabs(self.dT[:, ri][:, :, ci])

    def dc(self, key):
        return self.dC[:, self.model.index(key)]

    def finite_difference_check(self, h=1e-6):
        """Largest relative gap between dT/dC and central differences of build."""
        worst = 0.0
        for k in range(self.p):
            e = np.zeros(self.p)
            e[k] = h
            hi, lo = self.build(self.theta + e), self.build(self.theta - e)
            fT = (hi.T - lo.T) / (2 * h)
            fC = (hi.c - lo.c) / (2 * h)
            for a, b in ((fT, self.dT[k]), (fC, self.dC[k])):
                scale = max(np.abs(b).max(initial=0.0), 1e-9)
                worst = max(worst, float(np.abs(a - b).max(initial=0.0) / scale))
        return worst


def fluid_generator_jacobian(pm, s=0.0):
    """Derivatives of the four Q blocks, including both rate and generator terms."""
    model = pm.model
    A_pp, A_pm, A_mm, A_mp, W = _q_parts(model, as_scalar(s))
    B = model.block
    dT = {key: pm.dT_block(*key).slabs for key in
          [("+", "+"), ("+", "-"), ("-", "-"), ("-", "+"), ("+", "0"), ("-", "0"),
           ("0", "+"), ("0", "-"), ("0", "0")]}
    # d(T00 - sI)^-1 = -W dT00 W
    dW = -W @ dT[("0", "0")] @ W

    def dtaboo(r, c):
        return (dT[(r, "0")] @ W @ B("0", c) + B(r, "0") @ dW @ B("0", c)
                + B(r, "0") @ W @ dT[("0", c)])

    dA_pp = dT[("+", "+")] - dtaboo("+", "+")
    dA_pm = dT[("+", "-")] - dtaboo("+", "-")
    dA_mm = dT[("-", "-")] - dtaboo("-", "-")
    dA_mp = dT[("-", "+")] - dtaboo("-", "+")

    cp = model.rates("+")
    cm = model.rates("-")
    ip, im = 1.0 / cp, 1.0 / np.abs(cm)
    # d(1/c) = -dc/c^2 on S+, d(1/|c|) = d(-1/c) = dc/c^2 on S-
    dip = -pm.dc("+") / cp ** 2
    dim = pm.dc("-") / cm ** 2

    def scaled(inv_rates, d_inv, A, dA):
        return BlockJacobian.from_slabs(d_inv[:, :, None] * A[None] + inv_rates[None, :, None] * dA)

    return QJacobians(scaled(ip, dip, A_pp, dA_pp), scaled(ip, dip, A_pm, dA_pm),
                      scaled(im, dim, A_mm, dA_mm), scaled(im, dim, A_mp, dA_mp))


# ---------------------------------------------------------------------------
# model files

def parse_model(doc):
    """Build a ParamModel from a decoded model document (see README)."""
    try:
        T = doc["T"]
        c = doc["c"]
    except KeyError as err:
        raise ModelError(f"model document lacks field {err}") from None
    names = doc.get("phases")
    model = SfmModel(T, c, names=names)
    params = doc.get("params", [])
    if isinstance(params, dict):
        pnames = list(params.get("names", []))
        values = list(params.get("values", []))
    else:
        pnames = [q["name"] for q in params]
        values = [q["value"] for q in params]
    if len(pnames) != len(values):
        raise ModelError("params: names and values differ in length")
    p = len(values)
    dT = doc.get("dT", [np.zeros((model.m, model.m)).tolist()] * p)
    dC = doc.get("dC", [np.zeros(model.m).tolist()] * p)
    if len(dT) != p or len(dC) != p:
        raise ModelError("dT and dC need one entry per parameter")
    if p == 0:
        return ParamModel.affine(model, np.zeros(0), np.zeros((0, model.m, model.m)),
                                 np.zeros((0, model.m)), [])
    return ParamModel.affine(model, values, dT, dC, pnames)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return parse_model(json.load(fh))


def dump_model(pm):
    """Model document for `pm` (affine around its current theta)."""
    m = pm.model
    return {
        "phases": list(m.names),
        "T": m.T.tolist(),
        "c": m.c.tolist(),
        "params": [{"name": n, "value": float(v)} for n, v in zip(pm.names, pm.theta)],
        "dT": pm.dT.tolist(),
        "dC": pm.dC.tolist(),
    }
