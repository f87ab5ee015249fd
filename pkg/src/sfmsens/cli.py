"""Command-line front end.

    sfmsens simple   two-phase queue: pipeline values next to closed forms
    sfmsens hydro    lifetime density of the deterioration model and its sensitivities
    sfmsens ruin     ruin probability of the Erlang-mixture risk model
    sfmsens analyze  stationary / transient / simulation output for a model file
    sfmsens simulate Monte-Carlo estimates for a model file

Every command writes CSV files (UTF-8, exponent format, 13 significant
digits) into --out and prints a short summary.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
from scipy.integrate import simpson

from . import ilt
from .errors import NegativeLoading, SfmError
from .lifetime import hydro_spec, lifetime_cdf, lifetime_density, lifetime_median
from .model import SfmModel, ctmc_stationary, drift, load_model
from .ruin import embed, erlang_mixture, ruin_probability
from .simple import SimpleClosedForm, param_model
from .simulate import SimConfig, simulate_paths
from .stationary import stationary
from .transient import Transient

FLOAT_FMT = "{:.12e}"
HYDRO_DEFAULT_METHOD = ("cme", 100)


# ---------------------------------------------------------------------------
# output

def _cell(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FLOAT_FMT.format(float(np.real(v)))


class Table:
    """Rows with a fixed header; ``keys`` names the index columns."""

    def __init__(self, name, header, keys=()):
        self.name = name
        self.header = list(header)
        self.keys = list(keys)
        self.rows = []

    def add(self, *row):
        if len(row) != len(self.header):
            raise ValueError(f"{self.name}: row of {len(row)} cells for {len(self.header)} columns")
        self.rows.append(row)

    def column(self, name):
        j = self.header.index(name)
        return np.array([r[j] for r in self.rows], dtype=float)

    def long_rows(self):
        kidx = [self.header.index(k) for k in self.keys]
        for row in self.rows:
            for j, name in enumerate(self.header):
                if j not in kidx:
                    yield [row[i] for i in kidx] + [name, row[j]]


def _write_csv(path, header, rows):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_tables(out, tables, plot_data=False):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for tab in tables:
        p = out / f"{tab.name}.csv"
        _write_csv(p, tab.header, tab.rows)
        paths.append(p)
        if plot_data and tab.keys:
            p = out / f"{tab.name}_long.csv"
            _write_csv(p, tab.keys + ["quantity", "value"], tab.long_rows())
            paths.append(p)
    return paths


def _summary(items):
    tab = Table("summary", ["quantity", "value"])
    for k, v in items:
        tab.add(k, v)
    return tab


def _grid(text):
    """'start:stop:step' (inclusive stop) or a comma list."""
    if ":" in text:
        a, b, h = (float(v) for v in text.split(":"))
        n = int(round((b - a) / h))
        return a + h * np.arange(n + 1)
    return np.array([float(v) for v in text.split(",") if v.strip()])


def _method(args, default=("euler", None)):
    method = args.ilt_method or default[0]
    order = args.ilt_order
    if order is None and args.ilt_method is None:
        order = default[1]
    return method, order


# ---------------------------------------------------------------------------
# simple

def _b_values(args, a, n):
    if args.b_grid:
        return _grid(args.b_grid)
    return np.linspace(0.1, min(0.99, a - 0.01), n)

def cmd_simple(args):
    a, b = args.a, args.b
    cf = SimpleClosedForm(a, b)
    method, order = _method(args)
    tol = args.tol
    tables = []

    # p- over the (a, b) triangle
    t1 = Table("simple_stationary_pminus",
               ["a", "b", "p_minus", "p_minus_closed", "dp_da", "dp_da_closed",
                "dp_db", "dp_db_closed", "max_abs_diff"], keys=["a", "b"])
    for aa in _grid(args.a_grid):
        for bb in np.linspace(0.1, aa - 0.01, args.n_b):
            st = stationary(param_model(aa, bb))
            c = SimpleClosedForm(aa, bb)
            dp = st.dp.slabs[:, 0, 0]
            diff = max(abs(st.p_minus[0] - c.p_minus), *np.abs(dp - c.dp_minus))
            t1.add(aa, bb, st.p_minus[0], c.p_minus, dp[0], c.dp_minus[0], dp[1], c.dp_minus[1], diff)
    tables.append(t1)

    # pi+(x) over b at fixed a
    t2 = Table("simple_stationary_density",
               ["b", "x", "pi_plus", "pi_plus_closed", "dpi_da", "dpi_da_closed",
                "dpi_db", "dpi_db_closed", "max_abs_diff"], keys=["b", "x"])
    for bb in _b_values(args, a, args.n_b):
        st = stationary(param_model(a, bb))
        c = SimpleClosedForm(a, bb)
        for x in _grid(args.x_grid):
            val = st.density_row(x)[0]
            d = st.ddensity_row(x)[:, 0]
            dc = c.dpi_plus(x)
            diff = max(abs(val - c.pi_plus(x)), *np.abs(d - dc))
            t2.add(bb, x, val, c.pi_plus(x), d[0], dc[0], d[1], dc[1], diff)
    tables.append(t2)

    # p-(t) from (z, phase 2)
    t3 = Table("simple_transient_pminus",
               ["b", "t", "p_minus", "p_minus_closed", "dp_da", "dp_da_closed", "dp_db",
                "dp_db_closed", "error_estimate", "max_abs_diff"], keys=["b", "t"])
    for bb in _b_values(args, a, args.n_b_transient):
        tr = Transient(param_model(a, bb), args.z, [1.0])
        c = SimpleClosedForm(a, bb)
        t0 = tr.drain_time

        def closed(s, c=c):
            return np.concatenate([[c.p_tilde(s, args.z)], c.dp_tilde(s, args.z)])

        def closed_shifted(s, c=c):
            return closed(s, c) * np.exp(s * t0)

        for t in _grid(args.t_grid):
            res = tr.p_dp_time(t, method, order, tol)
            if t > t0:
                ref = ilt.invert(closed_shifted, t - t0, method, order).value
            else:
                ref = ilt.invert(closed, t, method, order).value
            v = res.value[:, 0]
            diff = np.max(np.abs(v - ref))
            t3.add(bb, t, v[0], ref[0], v[1], ref[1], v[2], ref[2],
                   float(np.max(res.error_estimate)), diff)
    tables.append(t3)

    # f+(x, t), f-(x, t) at (a, b)
    t4 = Table("simple_transient_density",
               ["x", "t", "f_plus", "f_plus_closed", "f_minus", "f_minus_closed",
                "df_plus_da", "df_plus_da_closed", "df_plus_db", "df_plus_db_closed",
                "df_minus_da", "df_minus_da_closed", "df_minus_db", "df_minus_db_closed",
                "error_estimate", "max_abs_diff"], keys=["x", "t"])
    tr = Transient(param_model(a, b), args.z, [1.0])
    h = 1e-5

    def closed_f(x):
        def F(s):
            out = [np.array(cf.f_tilde(x, s, args.z))]
            for k in range(2):
                e = np.eye(2)[k] * h
                hi = SimpleClosedForm(a + e[0], b + e[1]).f_tilde(x, s, args.z)
                lo = SimpleClosedForm(a - e[0], b - e[1]).f_tilde(x, s, args.z)
                out.append((np.array(hi) - np.array(lo)) / (2 * h))
            return np.stack(out)  # rows: value, d/da, d/db; cols: +, -
        return F

    for x in _grid(args.fx_grid):
        F = closed_f(x)
        t0 = tr.arrival_time(x)
        for t in _grid(args.ft_grid):
            res = tr.f_df_time(x, t, method, order, tol)
            if t > t0:
                ref = ilt.invert(lambda s: F(s) * np.exp(s * t0), t - t0, method, order).value
            else:
                ref = ilt.invert(F, t, method, order).value
            v = res.value
            mine = np.array([[v[0, 0], v[0, 1]], [v[1, 0], v[1, 1]], [v[2, 0], v[2, 1]]])
            diff = np.max(np.abs(mine - ref))
            t4.add(x, t, v[0, 0], ref[0, 0], v[0, 1], ref[0, 1],
                   v[1, 0], ref[1, 0], v[2, 0], ref[2, 0], v[1, 1], ref[1, 1], v[2, 1], ref[2, 1],
                   float(np.max(res.error_estimate)), diff)
    tables.append(t4)

    busy = -(tr.bundle(1e-20j).Psi.imag / 1e-20)[0, 0]
    summary = _summary([
        ("a", a), ("b", b),
        ("max_abs_diff_stationary_pminus", float(t1.column("max_abs_diff").max())),
        ("max_abs_diff_stationary_density", float(t2.column("max_abs_diff").max())),
        ("max_abs_diff_transient_pminus", float(t3.column("max_abs_diff").max())),
        ("max_abs_diff_transient_density", float(t4.column("max_abs_diff").max())),
        ("busy_period_mean", busy), ("busy_period_mean_closed", cf.busy_period_mean),
        ("dpi_da_sign_change", cf.dpi_da_root), ("dpi_db_sign_change", cf.dpi_db_root),
    ])
    return tables + [summary]


# ---------------------------------------------------------------------------
# hydro

NOISE_FLOOR = 1e-9


def sign_agreement(y1, y2, floor=NOISE_FLOOR):
    """Fraction of points where y1 and y2 have opposite signs.

    Points where either series is below floor * max|series| carry no sign
    information and are left out; their count is returned too.
    """
    y1, y2 = np.asarray(y1), np.asarray(y2)
    ok = (np.abs(y1) > floor * np.abs(y1).max()) & (np.abs(y2) > floor * np.abs(y2).max())
    if not ok.any():
        return float("nan"), int((~ok).sum())
    return float(np.mean(np.sign(y1[ok]) == -np.sign(y2[ok]))), int((~ok).sum())


def common_crossing(dens, ks, floor=NOISE_FLOOR):
    """Mean of the zero crossings shared by the sensitivities ks."""
    found = []
    for k in ks:
        y = dens.dh[:, k]
        big = np.abs(y) > floor * np.abs(y).max()
        idx = np.flatnonzero((np.sign(y[:-1]) * np.sign(y[1:]) < 0) & big[:-1] & big[1:])
        t = dens.t
        found.append(t[idx] - y[idx] * (t[idx + 1] - t[idx]) / (y[idx + 1] - y[idx]))
    if any(f.size == 0 for f in found):
        return float("nan"), found
    # the crossing of the first series that every other series shares most closely
    best = min(found[0], key=lambda c: max(np.min(np.abs(f - c)) for f in found))
    picks = [f[np.argmin(np.abs(f - best))] for f in found]
    return float(np.mean(picks)), found


def cmd_hydro(args):
    spec = hydro_spec(theta=args.theta)
    method, order = _method(args, HYDRO_DEFAULT_METHOD)
    ts = _grid(args.t_grid)
    dens = lifetime_density(spec, ts, method, order, args.tol)
    names = list(spec.pm.names)
    tab = Table("hydro_lifetime",
                ["t", "h", "h_error"] + [f"dh_d{n}" for n in names]
                + [f"semirel_{n}" for n in names], keys=["t"])
    sr = dens.semi_relative
    for i, t in enumerate(ts):
        tab.add(t, dens.h[i], dens.h_error[i], *dens.dh[i], *sr[i])
    crossing, _ = common_crossing(dens, range(5))
    frac, skipped = sign_agreement(dens.dh[:, 5], dens.dh[:, 0])
    tmax = float(ts[-1])
    items = [
        ("ilt_method", method), ("ilt_order", order if order is not None else ilt.DEFAULT_ORDER[method]),
        ("integral_grid", float(simpson(dens.h, x=ts))),
        ("cdf_at_grid_end", lifetime_cdf(spec, tmax, method, order)),
        ("median", lifetime_median(spec, float(ts[0]), tmax, method, order)),
        ("common_zero_crossing_1to5", crossing),
        ("opposite_sign_fraction_6_vs_1", frac), ("sign_points_below_floor", skipped),
        ("min_h", float(dens.h.min())),
    ]
    return [tab, _summary(items)]


# ---------------------------------------------------------------------------
# ruin

def cmd_ruin(args):
    xs = _grid(args.x_grid)
    base = erlang_mixture(args.theta1, args.theta2, args.premium, args.lam)
    res = ruin_probability(base, xs)
    t1 = Table("ruin_x", ["x", "psi", "dpsi_dtheta1", "dpsi_dtheta2"], keys=["x"])
    for i, x in enumerate(xs):
        t1.add(x, res.psi[i], *res.dpsi[i])
    t2 = Table("ruin_theta", ["theta1", "theta2", "x", "mu", "psi", "dpsi_dtheta1", "dpsi_dtheta2"],
               keys=["theta1", "theta2", "x"])
    grid = _grid(args.theta_grid)
    fig_x = _grid(args.fig_x)
    for th1 in grid:
        for th2 in grid:
            spec = erlang_mixture(th1, th2, args.premium, args.lam)
            try:
                r = ruin_probability(spec, fig_x)
            except NegativeLoading:
                # ruin is certain: psi = 1 and flat in theta
                print(f"warning: theta = ({th1:g}, {th2:g}) has no positive loading, psi = 1",
                      file=sys.stderr)
                T, c = embed(spec.premium, spec.lam, spec.alpha, spec.M)
                mu = drift(SfmModel(T, c))
                for x in fig_x:
                    t2.add(th1, th2, x, mu, 1.0, 0.0, 0.0)
                continue
            for i, x in enumerate(fig_x):
                t2.add(th1, th2, x, r.drift, r.psi[i], *r.dpsi[i])
    items = [("psi_0", float(ruin_probability(base, [0.0], False).psi[0])),
             ("drift", res.drift), ("loading", base.loading)]
    return [t1, t2, _summary(items)]


# ---------------------------------------------------------------------------
# analyze / simulate

def _initial(model, args):
    g = np.asarray(json.loads(args.g), dtype=float) if args.g else None
    if g is None:
        g = np.zeros(model.m)
        g[model.minus[0] if len(model.minus) else 0] = 1.0
    return g


def _sim_table(model, args, times):
    g = _initial(model, args)
    cfg = SimConfig(seed=args.seed, paths=args.paths, horizon=float(max(times)),
                    level=args.z, g=g)
    ens = simulate_paths(model, cfg, times)
    tab = Table("simulate_boundary_mass", ["t", "phase", "p_zero", "se"], keys=["t", "phase"])
    for t in times:
        est = ens.boundary_mass(t)
        for i in range(model.m):
            tab.add(t, model.names[i], est.value[i], est.se[i])
    return tab


def cmd_analyze(args):
    pm = load_model(args.model)
    model = pm.model
    tables = []
    method, order = _method(args)
    if args.stationary:
        st = stationary(pm)
        tab = Table("analyze_stationary", ["quantity", "phase", "value"] +
                    [f"d_{n}" for n in pm.names], keys=["quantity", "phase"])
        p_row = st.boundary_row()
        dp_row = np.zeros((pm.p, model.m))
        dp_row[:, model.index("-0")] = st.dp.slabs[:, 0, :]
        for i in range(model.m):
            tab.add("p", model.names[i], p_row[i], *dp_row[:, i])
        for x in _grid(args.x_grid):
            d = st.density_row(x)
            dd = st.ddensity_row(x)
            for i in range(model.m):
                tab.add(f"pi(x={x:g})", model.names[i], d[i], *dd[:, i])
        tables.append(tab)
    if args.transient:
        minus = model.minus
        g_full = _initial(model, args)
        tr = Transient(pm, args.z, g_full[minus])
        cols = [model.names[i] for i in model.index("-0")]
        tab = Table("analyze_transient", ["t", "phase", "p", "error_estimate"] +
                    [f"d_{n}" for n in pm.names], keys=["t", "phase"])
        for t in _grid(args.t_grid):
            res = tr.p_dp_time(t, method, order, args.tol)
            for j, name in enumerate(cols):
                tab.add(t, name, res.value[0, j], float(np.max(res.error_estimate)),
                        *res.value[1:, j])
        tables.append(tab)
    if args.simulate:
        tables.append(_sim_table(model, args, _grid(args.t_grid)))
    if not tables:
        raise SystemExit("analyze: nothing requested (use --stationary, --transient, --simulate)")
    nu = ctmc_stationary(model)
    return tables + [_summary([("drift", drift(model))] +
                              [(f"nu_{n}", v) for n, v in zip(model.names, nu)])]


def cmd_simulate(args):
    pm = load_model(args.model)
    return [_sim_table(pm.model, args, _grid(args.t_grid))]


# ---------------------------------------------------------------------------
# parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--tol", type=float, default=None,
                        help="fail when an inversion error estimate exceeds this")
    common.add_argument("--ilt-method", choices=ilt.METHODS, default=None)
    common.add_argument("--ilt-order", type=int, default=None)
    common.add_argument("--seed", type=int, default=20240601)
    common.add_argument("--plot-data", action="store_true",
                        help="also write long-format tables for plotting")

    ap = argparse.ArgumentParser(prog="sfmsens", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simple", parents=[common], help="two-phase queue with closed forms")
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--b", type=float, default=0.5)
    p.add_argument("--z", type=float, default=1.0, help="initial level (start in phase 2)")
    p.add_argument("--a-grid", default="0.2:1.0:0.2")
    p.add_argument("--n-b", type=int, default=5)
    p.add_argument("--n-b-transient", type=int, default=3)
    p.add_argument("--b-grid", default=None,
                   help="explicit b values at a (overrides --n-b, --n-b-transient)")
    p.add_argument("--x-grid", default="0.25:5:0.25")
    p.add_argument("--t-grid", default="1.5:15:0.5")
    p.add_argument("--fx-grid", default="0.5,2")
    p.add_argument("--ft-grid", default="5:7:0.5")
    p.set_defaults(func=cmd_simple)

    p = sub.add_parser("hydro", parents=[common], help="lifetime of the deterioration model")
    p.add_argument("--t-grid", default="200:300:2")
    p.add_argument("--theta", type=lambda s: [float(v) for v in s.split(",")], default=None,
                   help="comma list of the six rate magnitudes")
    p.set_defaults(func=cmd_hydro)

    p = sub.add_parser("ruin", parents=[common], help="ruin probability and sensitivities")
    p.add_argument("--theta1", type=float, default=1.0)
    p.add_argument("--theta2", type=float, default=2.0)
    p.add_argument("--premium", type=float, default=4.0)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--x-grid", default="0:10:0.25")
    p.add_argument("--theta-grid", default="0.5:3:0.5")
    p.add_argument("--fig-x", default="0,1,5")
    p.set_defaults(func=cmd_ruin)

    for name, func in (("analyze", cmd_analyze), ("simulate", cmd_simulate)):
        p = sub.add_parser(name, parents=[common], help=f"{name} a model file")
        p.add_argument("model", help="model file (JSON)")
        p.add_argument("--z", type=float, default=1.0, help="initial level")
        p.add_argument("--g", default=None, help="initial phase law over all phases, JSON list")
        p.add_argument("--t-grid", default="2,5,10")
        p.add_argument("--paths", type=int, default=100000)
        if name == "analyze":
            p.add_argument("--stationary", action="store_true")
            p.add_argument("--transient", action="store_true")
            p.add_argument("--simulate", action="store_true")
            p.add_argument("--x-grid", default="0.5,1,2")
        p.set_defaults(func=func)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        tables = args.func(args)
    except SfmError as err:
        print(f"sfmsens {args.command}: {type(err).__name__}: {err}", file=sys.stderr)
        return 2
    for path in write_tables(args.out, tables, args.plot_data):
        print(path)
    for tab in tables:
        if tab.name == "summary":
            for k, v in tab.rows:
                print(f"  {k} = {_cell(v)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
