"""Acceptance criteria 1-10, each at its stated tolerance.

Every criterion prints one PASS/FAIL line (also collected into the pytest
terminal summary).  A criterion passes only if all of its sub-checks do.
Three sub-checks are known to fail as stated; they run unchanged in their
own tests marked xfail(strict=True), so an unexpected pass is reported too:

    1  sign change of dpi+/da at x = 8/3: the closed form 2b/(a^2 - b^2)
       and the pipeline both give 4/3 at a = 1, b = 0.5
    6  p-(50) within 1e-4 of 1/3: the true gap is 1.09e-3 (the approach to
       stationarity is like e^{-0.043 t} t^{-3/2})
    10 Euler vs CME within 1e-6: CME with at most 100 nodes stops near 5e-5

Run standalone with ``python tests/test_acceptance.py``.
"""

import functools
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg as sla
from scipy.integrate import simpson
from scipy.optimize import brentq

sys.path.insert(0, str(Path(__file__).parent))
from conftest import ACCEPTANCE_LINES, central_diff, fd_gap, random_family  # noqa: E402

from sfmsens import ilt  # noqa: E402
from sfmsens.cli import common_crossing, sign_agreement  # noqa: E402
from sfmsens.firstreturn import differentiated_residual, first_return  # noqa: E402
from sfmsens.lifetime import hydro_spec, lifetime_cdf, lifetime_density, lifetime_median  # noqa: E402
from sfmsens.model import ctmc_stationary  # noqa: E402
from sfmsens.ruin import erlang_mixture, ruin_probability  # noqa: E402
from sfmsens.simple import SimpleClosedForm, param_model  # noqa: E402
from sfmsens.simulate import SimConfig, ruin_frequency, simulate_paths  # noqa: E402
from sfmsens.stationary import stationary  # noqa: E402
from sfmsens.transient import Transient, passage_matrices  # noqa: E402

SEED = 20240601
MC_PATHS = 1_000_000


@dataclass
class Check:
    label: str
    ok: bool
    detail: str


@dataclass
class Outcome:
    number: int
    title: str
    checks: list = field(default_factory=list)

    def add(self, label, ok, detail):
        self.checks.append(Check(label, bool(ok), detail))

    @property
    def ok(self):
        return all(c.ok for c in self.checks)

    def line(self):
        failed = [c for c in self.checks if not c.ok]
        shown = failed if failed else self.checks
        text = "; ".join(f"{c.label}: {c.detail}" for c in shown)
        return f"criterion {self.number:2d} {'PASS' if self.ok else 'FAIL'}  {self.title}  ({text})"

    def check(self, label):
        return next(c for c in self.checks if c.label == label)


@functools.lru_cache(maxsize=None)
def _suite():
    gen = np.random.default_rng(7)
    return tuple(random_family(gen) for _ in range(20))


# ---------------------------------------------------------------------------
# the criteria

@functools.lru_cache(maxsize=None)
def criterion_1():
    out = Outcome(1, "closed-form oracle at a = 1, b = 0.5")
    a, b = 1.0, 0.5
    cf = SimpleClosedForm(a, b)
    pm = param_model(a, b)
    fr = first_return(pm, 0.0)
    st = stationary(pm)
    pairs = {
        "Psi(0)": (fr.Psi[0, 0], 1.0), "Xi(0)": (fr.Xi[0, 0], 0.5), "K(0)": (fr.K[0, 0], -0.5),
        "p-": (st.p_minus[0], 1 / 3), "alpha": (st.alpha, 1 / 6),
        "dp-/da": (st.dp.slabs[0, 0, 0], 4 / 9), "dp-/db": (st.dp.slabs[1, 0, 0], -8 / 9),
    }
    worst = max(abs(v - w) for v, w in pairs.values())
    out.add("values", worst <= 1e-8, f"max |pipeline - stated| = {worst:.2e}")
    xs = np.linspace(0, 10, 41)
    dens = max(abs(st.density_row(x)[0] - cf.pi_plus(x)) for x in xs)
    ddens = max(np.max(np.abs(st.ddensity_row(x)[:, 0] - cf.dpi_plus(x))) for x in xs)
    out.add("pi+(x)", max(dens, ddens) <= 1e-8,
            f"max |pipeline - closed| = {dens:.2e} (value), {ddens:.2e} (derivative)")
    root = brentq(lambda x: st.ddensity_row(x)[0, 0], 0.1, 5.0, xtol=1e-14)
    out.add("sign change vs closed form", abs(root - cf.dpi_da_root) <= 1e-8,
            f"pipeline {root:.10f}, 2b/(a^2-b^2) = {cf.dpi_da_root:.10f}")
    out.add("sign change at 8/3", abs(root - 8 / 3) <= 1e-8,
            f"pipeline {root:.10f} vs stated 8/3 = {8 / 3:.10f}")
    return out


@functools.lru_cache(maxsize=None)
def criterion_2():
    out = Outcome(2, "mean busy period -dPsi/ds at 0 = 2/(a - b)")
    model = param_model(1.0, 0.5).model
    h = 1e-20
    cs = -first_return(model, 1j * h, derivatives=False).Psi[0, 0].imag / h
    hd = 1e-5
    # s < 0 is outside the domain of the Newton start, so the central
    # difference is taken symmetrically on the imaginary axis instead
    cd = -(first_return(model, 1j * hd, False).Psi[0, 0]
           - first_return(model, -1j * hd, False).Psi[0, 0]).imag / (2 * hd)
    out.add("complex step", abs(cs - 4.0) <= 1e-6, f"{cs:.12f}")
    out.add("central difference", abs(cd - 4.0) <= 1e-6, f"{cd:.12f}")
    return out


@functools.lru_cache(maxsize=None)
def criterion_3():
    out = Outcome(3, "finite-difference gradient suite (20 models)")
    worst = {}

    def rec(name, analytic, fd):
        gap, allow = fd_gap(analytic, fd)
        worst[name] = max(worst.get(name, 0.0), gap / allow)

    s, x, y = 0.4, 0.5, 1.5
    for pm in _suite():
        fr = first_return(pm, 0.0)
        for name in ("Psi", "Xi", "D", "U", "K", "J"):
            rec("d" + name, getattr(fr, "d" + name).slabs,
                central_diff(lambda q: getattr(first_return(q, 0.0, False), name), pm))
        st = stationary(pm)
        rec("dxi", st.dxi.slabs[:, 0], central_diff(lambda q: stationary(q, False).xi, pm))
        rec("dalpha", st.dalpha.slabs[:, 0, 0], central_diff(lambda q: stationary(q, False).alpha, pm))
        rec("dp", st.dp.slabs[:, 0], central_diff(lambda q: stationary(q, False).p, pm))
        for xx in (0.3, 1.0, 3.0):
            rec("dpi", st.ddensity_row(xx),
                central_diff(lambda q: stationary(q, False).density_row(xx), pm))
        pas = passage_matrices(first_return(pm, s), x, y)
        rec("dG/dH", pas.dGH.slabs,
            central_diff(lambda q: passage_matrices(first_return(q, s, False), x, y).GH, pm))
        n_m = pm.model.sizes[1]
        g = np.full(n_m, 1.0 / n_m)
        tr = Transient(pm, 1.0, g)
        rec("dp~", tr.p_transform(s, True).dp.slabs[:, 0],
            central_diff(lambda q: Transient(q, 1.0, g).p_transform(s).p, pm))
        ft = tr.f_transform(x, s, True)

        def f(q):
            v = Transient(q, 1.0, g).f_transform(x, s)
            return np.concatenate([v.f_plus, v.f_minus, v.f_zero])
        rec("df~", np.concatenate([ft.df_plus.slabs, ft.df_minus.slabs, ft.df_zero.slabs],
                                  axis=2)[:, 0], central_diff(f, pm))
    for name, r in worst.items():
        out.add(name, r <= 1.0, f"worst gap / allowance = {r:.3f}")
    return out


@functools.lru_cache(maxsize=None)
def criterion_4():
    out = Outcome(4, "conservation suite")
    mass = dmass = occ = 0.0
    for pm in _suite():
        st = stationary(pm)
        tot = st.boundary_row() + st.integrated_density()
        mass = max(mass, abs(tot.sum() - 1))
        occ = max(occ, float(np.max(np.abs(tot - ctmc_stationary(pm.model)))))
        d = st.dp.slabs[:, 0, :].sum(axis=1) + st.dintegrated_density().sum(axis=1)
        dmass = max(dmass, float(np.max(np.abs(d))))
    out.add("total mass", mass <= 1e-8, f"max |p 1 + int pi 1 - 1| = {mass:.2e}")
    out.add("mass derivative", dmass <= 1e-7, f"max |d total / dtheta| = {dmass:.2e}")
    out.add("occupancy", occ <= 1e-8, f"max |p + int pi - nu| = {occ:.2e}")
    # the two-phase instance: p- + int pi- = nu_2 and int pi+ = nu_1
    st = stationary(param_model(1.0, 0.5))
    tot = st.boundary_row() + st.integrated_density()
    gap = float(np.max(np.abs(tot - SimpleClosedForm().nu)))
    out.add("two-phase identities", gap <= 1e-8, f"{gap:.2e}")
    return out


@functools.lru_cache(maxsize=None)
def criterion_5():
    out = Outcome(5, "differentiated Riccati residual")
    worst = 0.0
    for pm in _suite():
        for s in (0.0, 0.5, 0.3 + 1.0j):
            fr = first_return(pm, s)
            res = differentiated_residual(fr.q, fr.dq, fr.Psi, fr.dPsi)
            worst = max(worst, float(np.max(np.abs(res))))
    out.add("residual", worst <= 1e-10, f"max residual = {worst:.2e}")
    return out


@functools.lru_cache(maxsize=None)
def criterion_6():
    out = Outcome(6, "transient fidelity of p-(t)")
    tr = Transient(param_model(1.0, 0.5), 1.0, [1.0])
    times = [2.0, 5.0, 10.0, 50.0]
    cfg = SimConfig(seed=SEED, paths=MC_PATHS, horizon=50.0, level=1.0, g=np.array([0.0, 1.0]))
    ens = simulate_paths(tr.model, cfg, times)
    parts = []
    ok = True
    for t in times:
        exact = tr.p_time(t).value[0]
        est = ens.boundary_mass(t)
        z = (est.value[1] - exact) / est.se[1]
        ok &= abs(z) <= 3
        parts.append(f"t={t:g}: {exact:.6f} vs {est.value[1]:.6f} ({z:+.2f} se)")
    out.add("Monte-Carlo", ok, ", ".join(parts))
    p50 = tr.p_time(50.0).value[0]
    out.add("p-(50) near 1/3", abs(p50 - 1 / 3) <= 1e-4, f"p-(50) = {p50:.10f}, gap {p50 - 1 / 3:.2e}")
    # the inversion is not trusted within 0.05 of the jump at t = 1
    pre = [0.1, 0.3, 0.5, 0.7, 0.9]
    cme = max(abs(tr.p_time(t, "cme", 100, tol=None).value[0]) for t in pre)
    eul = max(abs(tr.p_time(t, tol=None).value[0]) for t in pre)
    out.add("before t = 1", cme <= 1e-4,
            f"max |p-| on {pre} = {cme:.1e} with CME(100) (Euler(30): {eul:.1e})")
    return out


@functools.lru_cache(maxsize=None)
def criterion_7():
    out = Outcome(7, "signs of dp-(t)/da and dp-(t)/db for t >= 5")
    tr = Transient(param_model(1.0, 0.5), 1.0, [1.0])
    ts = np.arange(5.0, 50.0 + 1e-9, 0.5)
    d = np.array([tr.p_dp_time(t).value[1:, 0] for t in ts])
    out.add("d/da > 0", np.all(d[:, 0] > 0), f"min = {d[:, 0].min():.3e} on {ts.size} points")
    out.add("d/db < 0", np.all(d[:, 1] < 0), f"max = {d[:, 1].max():.3e}")
    return out


@functools.lru_cache(maxsize=None)
def criterion_8():
    out = Outcome(8, "hydro lifetime density (CME order 100)")
    spec = hydro_spec()
    ts = np.arange(200.0, 300.0 + 1e-9, 2.0)
    dens = lifetime_density(spec, ts, "cme", 100)
    integral = float(simpson(dens.h, x=ts))
    cdf_mass = lifetime_cdf(spec, 300.0, "cme", 100) - lifetime_cdf(spec, 200.0, "cme", 100)
    out.add("integral", abs(integral - 1) <= 1e-4 and abs(cdf_mass - 1) <= 1e-4,
            f"Simpson {integral:.7f}, F(300) - F(200) = {cdf_mass:.7f}")
    median = lifetime_median(spec, 200.0, 300.0, "cme", 100)
    crossing, _ = common_crossing(dens, range(5))
    out.add("crossing near median", abs(crossing - median) <= 10,
            f"crossing {crossing:.2f}, median {median:.2f}")
    out.add("crossing near 244", abs(crossing - 244) <= 10, f"crossing {crossing:.2f}")
    frac, skipped = sign_agreement(dens.dh[:, 5], dens.dh[:, 0])
    out.add("theta6 opposite", frac >= 0.99,
            f"opposite on {frac:.1%} of {ts.size - skipped} points ({skipped} below noise floor)")
    return out


@functools.lru_cache(maxsize=None)
def criterion_9():
    out = Outcome(9, "ruin probability pipeline")
    base = erlang_mixture()
    psi0 = ruin_probability(base, [0.0]).psi[0]
    out.add("psi(0)", abs(psi0 - 0.375) <= 1e-8, f"{psi0:.12f}")
    xs = np.arange(0.0, 10.0 + 1e-9, 0.25)
    grid = np.arange(1.0, 3.0 + 1e-9, 0.5)
    sym = 0.0
    dmax = -np.inf
    for t1 in grid:
        for t2 in grid:
            a = ruin_probability(erlang_mixture(t1, t2), xs)
            b = ruin_probability(erlang_mixture(t2, t1), xs, derivatives=False)
            sym = max(sym, float(np.max(np.abs(a.psi - b.psi))))
            dmax = max(dmax, float(a.dpsi.max()))
    out.add("symmetry", sym <= 1e-10, f"max |psi(t1,t2) - psi(t2,t1)| = {sym:.1e}")
    out.add("dpsi < 0", dmax < 0, f"max dpsi = {dmax:.3e}")
    parts = []
    ok = True
    for x in (0.0, 1.0, 5.0):
        exact = ruin_probability(base, [x], derivatives=False).psi[0]
        r = ruin_frequency(base.lam, base.premium, base.alpha, base.M, x, SEED, MC_PATHS)
        z = (r.estimate.value - exact) / r.estimate.se
        ok &= abs(z) <= 3 and r.bias_bound < 1e-4
        parts.append(f"x={x:g}: {exact:.5f} vs {float(r.estimate.value):.5f} ({z:+.2f} se)")
    out.add("Monte-Carlo", ok, ", ".join(parts))
    return out


A3 = np.array([[-1.0, 0.5, 0.2], [0.3, -2.0, 0.4], [0.1, 0.2, -0.8]])
PAIRS = {
    "exponential": (lambda s: 1 / (s + 1), lambda t: np.exp(-t)),
    "erlang3": (lambda s: (2 / (s + 2)) ** 3, lambda t: 4 * t ** 2 * np.exp(-2 * t)),
    "matrix exponential": (lambda s: np.linalg.inv(s * np.eye(3) - A3), lambda t: sla.expm(A3 * t)),
}


@functools.lru_cache(maxsize=None)
def criterion_10():
    out = Outcome(10, "inverse Laplace accuracy")
    ts = np.linspace(0.1, 10, 100)
    err = agree = cme_err = 0.0
    for F, f in PAIRS.values():
        for t in ts:
            e = ilt.invert(F, t).value
            c = ilt.invert(F, t, "cme", 100).value
            err = max(err, float(np.max(np.abs(e - f(t)))))
            cme_err = max(cme_err, float(np.max(np.abs(c - f(t)))))
            agree = max(agree, float(np.max(np.abs(e - c))))
    out.add("round trip", err <= 1e-7, f"Euler max error {err:.1e} (CME(100) {cme_err:.1e})")
    out.add("Euler vs CME", agree <= 1e-6, f"max |Euler - CME(100)| = {agree:.1e}")
    return out


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10]
KNOWN_RED = {1: "sign change at 8/3", 6: "p-(50) near 1/3", 10: "Euler vs CME"}


def _report(out):
    line = out.line()
    if line not in ACCEPTANCE_LINES:
        ACCEPTANCE_LINES.append(line)
        print(line)
    return out


# ---------------------------------------------------------------------------
# pytest entry points

@pytest.mark.parametrize("number", range(1, 11))
def test_criterion(number):
    out = _report(CRITERIA[number - 1]())
    red = KNOWN_RED.get(number)
    failed = [c for c in out.checks if not c.ok and c.label != red]
    assert not failed, "; ".join(f"{c.label}: {c.detail}" for c in failed)


@pytest.mark.xfail(strict=True, reason="closed form and pipeline give 4/3, not 8/3")
def test_criterion_1_stated_abscissa():
    c = criterion_1().check(KNOWN_RED[1])
    assert c.ok, c.detail


@pytest.mark.xfail(strict=True, reason="p-(50) - 1/3 = 1.09e-3; convergence is algebraic-exponential")
def test_criterion_6_p50():
    c = criterion_6().check(KNOWN_RED[6])
    assert c.ok, c.detail


@pytest.mark.xfail(strict=True, reason="CME with <= 100 nodes reaches ~5e-5 on the test pairs")
def test_criterion_10_method_agreement():
    c = criterion_10().check(KNOWN_RED[10])
    assert c.ok, c.detail


if __name__ == "__main__":
    results = [_report(fn()) for fn in CRITERIA]
    sys.exit(0 if all(r.ok for r in results) else 1)
