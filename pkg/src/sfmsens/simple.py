"""Closed forms for the two-phase on/off fluid queue.

Phase 1 fills at rate 1, phase 2 drains at rate 1, T = [[-a, a], [b, -b]]
with a > b > 0.  Everything here is scalar algebra, written independently
of the general pipeline so the two can be compared cell by cell.
"""

from __future__ import annotations

import numpy as np

from .errors import UnstableModel
from .model import ParamModel, SfmModel


def param_model(a=1.0, b=0.5):
    """The family theta = (a, b) as a ParamModel."""
    def build(theta):
        a_, b_ = theta
        return SfmModel([[-a_, a_], [b_, -b_]], [1.0, -1.0], names=("up", "down"))

    def derivative(theta):
        dT = np.array([[[-1.0, 1.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, -1.0]]])
        return dT, np.zeros((2, 2))

    return ParamModel(build, [a, b], derivative, names=("a", "b"))


class SimpleClosedForm:
    def __init__(self, a=1.0, b=0.5):
        if not a > b > 0:
            raise UnstableModel(f"need a > b > 0, got a={a}, b={b}")
        self.a = float(a)
        self.b = float(b)

    # -- stationary ---------------------------------------------------------

    @property
    def nu(self):
        a, b = self.a, self.b
        return np.array([b, a]) / (a + b)

    @property
    def drift(self):
        return (self.b - self.a) / (self.a + self.b)

    @property
    def p_minus(self):
        return (self.a - self.b) / (self.a + self.b)

    @property
    def alpha(self):
        a, b = self.a, self.b
        return b * (a - b) / (a + b)

    @property
    def dp_minus(self):
        a, b = self.a, self.b
        return np.array([2 * b, -2 * a]) / (a + b) ** 2

    @property
    def dalpha(self):
        a, b = self.a, self.b
        return np.array([2 * b * b, a * a - 2 * a * b - b * b]) / (a + b) ** 2

    def pi_plus(self, x):
        """Stationary density in phase 1 (equal to that in phase 2)."""
        a, b = self.a, self.b
        return self.p_minus * b * np.exp((b - a) * np.asarray(x, dtype=float))

    def dpi_plus(self, x):
        """(d/da, d/db) of pi_plus, stacked along the last axis."""
        a, b = self.a, self.b
        x = np.asarray(x, dtype=float)
        e = np.exp((b - a) * x)
        r = (a - b) / (a + b)
        da = 2 * b / (a + b) ** 2 * b * e - r * b * e * x
        db = -2 * a / (a + b) ** 2 * b * e + r * (e + b * e * x)
        return np.stack([da, db], axis=-1)

    @property
    def dpi_da_root(self):
        """Level where d pi_plus/da changes sign: 2b / (a^2 - b^2)."""
        return 2 * self.b / (self.a ** 2 - self.b ** 2)

    @property
    def dpi_db_root(self):
        """Level where d pi_plus/db changes sign: 2a/(a^2 - b^2) - 1/b."""
        a, b = self.a, self.b
        return 2 * a / (a * a - b * b) - 1 / b

    @property
    def busy_period_mean(self):
        return 2 / (self.a - self.b)

    # -- Laplace domain -----------------------------------------------------

    def _root(self, s):
        a, b = self.a, self.b
        w = a + b + 2 * s
        return w - np.sqrt(w * w - 4 * a * b + 0j), w

    def psi(self, s):
        return self._root(s)[0] / (2 * self.b)

    def xi(self, s):
        return self._root(s)[0] / (2 * self.a)

    def D(self, s):
        return -self.b - s + self._root(s)[0] / 2

    def U(self, s):
        return -self.a - s + self._root(s)[0] / 2

    K = U
    J = D

    def _dpsi_dD(self, s):
        a, b = self.a, self.b
        r, w = self._root(s)
        q = np.sqrt(w * w - 4 * a * b + 0j)
        ga = 1 - 0.5 / q * (2 * w - 4 * b)
        gb = 1 - 0.5 / q * (2 * w - 4 * a)
        dpsi = np.array([ga / (2 * b), (gb * 2 * b - r * 2) / (4 * b * b)])
        dD = np.array([ga / 2, -1 + gb / 2])
        return dpsi, dD

    def dpsi_ds(self, s):
        a, b = self.a, self.b
        w = a + b + 2 * s
        return (2 - 0.5 / np.sqrt(w * w - 4 * a * b + 0j) * 2 * w * 2) / (2 * b)

    def passage(self, x, y, s):
        """Scalars (G--, H-+, G+-, H++) of the two-sided passage problem."""
        P, X, D, U = self.psi(s), self.xi(s), self.D(s), self.U(s)
        eDx, eDy = np.exp(D * x), np.exp(D * y)
        eU, eUy = np.exp(U * (y - x)), np.exp(U * y)
        den = 1 - P * X * eDy * eUy
        g_mm = (eDx - P * X * eDy * eU) / den
        h_mp = X * eU - g_mm * X * eUy
        g_pm = (P * eDx - P * eDy * eU) / den
        h_pp = eU - g_pm * X * eUy
        return g_mm, h_mp, g_pm, h_pp

    def p_tilde(self, s, z=1.0):
        P, D = self.psi(s), self.D(s)
        return np.exp(D * z) / (self.b + s - self.b * P)

    def dp_tilde(self, s, z=1.0):
        """(d/da, d/db) of p~ by the quotient rule on the scalar form."""
        b = self.b
        P, D = self.psi(s), self.D(s)
        dP, dD = self._dpsi_dD(s)
        e = np.exp(D * z)
        den = b + s - b * P
        dden = np.array([-b * dP[0], 1 - P - b * dP[1]])
        return e * dD * z / den - e / den ** 2 * dden

    def f_tilde(self, x, s, z=1.0):
        """(f~+, f~-) at level x for a start at level z in phase 2."""
        P, K, D = self.psi(s), self.K(s), self.D(s)
        base = self.p_tilde(s, z) * self.b * np.exp(K * x)
        _, h_xx, _, _ = self.passage(x, x, s)
        if x <= z:
            lead = np.exp(D * (z - x)) / (1 - h_xx * P)
            return base + lead * h_xx, base * P + lead
        _, h_zz, _, _ = self.passage(z, z, s)
        _, _, _, h_zx = self.passage(z, x, s)
        lead = h_zz * h_zx / (1 - P * h_xx)
        return base + lead, base * P + lead * P
