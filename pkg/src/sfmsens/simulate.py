"""Monte-Carlo simulation of stochastic fluid models.

Paths are simulated exactly and event by event: exponential holding times,
piecewise-linear level, and a sticky boundary at 0 (the level leaves 0 only
in a phase with positive rate).  Paths are grouped into fixed-size blocks;
block k draws from its own Philox stream spawned from the seed, so the
estimates do not depend on how blocks are scheduled.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidPhaseType, ModelError, NegativeLoading

BLOCK = 1 << 16


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``g`` is a probability vector over all phases of the model; ``level``
    is the initial level z.
    """
    seed: int
    paths: int
    horizon: float
    level: float = 0.0
    g: np.ndarray | None = None
    block: int = BLOCK
    workers: int = 1

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("paths must be at least 1")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.level < 0:
            raise ValueError("initial level must be nonnegative")
        if self.block < 1:
            raise ValueError("block must be positive")

    def blocks(self):
        return _blocks(self.seed, self.paths, self.block)


@dataclass(frozen=True)
class Estimate:
    value: np.ndarray
    se: np.ndarray
    n: int

    def within(self, exact, k=3.0):
        """True where |value - exact| <= k standard errors (plus rounding)."""
        exact = np.asarray(exact)
        return np.abs(self.value - exact) <= k * self.se + 1e-12


def _mean_estimate(samples, axis=-1):
    n = samples.shape[axis]
    mean = samples.mean(axis=axis)
    se = samples.std(axis=axis, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    return Estimate(mean, se, n)


def _blocks(seed, paths, block):
    n_blocks = -(-paths // block)
    seqs = np.random.SeedSequence(seed).spawn(n_blocks)
    sizes = [block] * (n_blocks - 1) + [paths - block * (n_blocks - 1)]
    return [(np.random.Generator(np.random.Philox(sq)), n) for sq, n in zip(seqs, sizes)]


def _map_blocks(jobs, workers, fn):
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda job: fn(*job), jobs))
    return [fn(rng, n) for rng, n in jobs]


class _Chain:
    """Holding rates and cumulative jump probabilities of a generator."""

    def __init__(self, T):
        T = np.asarray(T, dtype=float)
        self.rate = -np.diag(T).copy()
        jump = np.where(np.eye(len(T), dtype=bool), 0.0, T)
        with np.errstate(invalid="ignore", divide="ignore"):
            jump = np.where(self.rate[:, None] > 0, jump / self.rate[:, None], 0.0)
        self.cum = np.cumsum(jump, axis=1)
        self.cum[:, -1] = np.where(self.rate > 0, 1.0, self.cum[:, -1])

    def holding(self, rng, ph):
        with np.errstate(divide="ignore"):
            return rng.standard_exponential(ph.size) / self.rate[ph]

    def step(self, rng, ph):
        u = rng.random(ph.size)
        nxt = (u[:, None] >= self.cum[ph]).sum(axis=1)
        return np.minimum(nxt, self.cum.shape[1] - 1)


def _initial_phase(rng, g, n):
    cum = np.cumsum(g)
    cum[-1] = 1.0
    return np.searchsorted(cum, rng.random(n), side="right")


def _phase_law(model, g):
    if g is None:
        raise ValueError("SimConfig.g (initial phase law) is required")
    g = np.asarray(g, dtype=float)
    if g.shape != (model.m,) or np.any(g < 0) or abs(g.sum() - 1) > 1e-12:
        raise ValueError("g must be a probability vector over all phases")
    return g


# ---------------------------------------------------------------------------
# snapshots at fixed times

@dataclass(frozen=True)
class PathEnsemble:
    """Levels and phases of all paths at the observation times."""
    times: np.ndarray
    levels: np.ndarray
    phases: np.ndarray
    m: int = field(default=0)

    @property
    def paths(self):
        return self.levels.shape[1]

    def _row(self, t):
        idx = np.flatnonzero(np.isclose(self.times, t, rtol=0, atol=1e-12))
        if idx.size == 0:
            raise KeyError(f"time {t} was not observed")
        return idx[0]

    def boundary_mass(self, t):
        """P(X(t) = 0, phase = i) for every phase i."""
        j = self._row(t)
        ind = (self.levels[j] == 0)[None, :] & (self.phases[j][None, :] == np.arange(self.m)[:, None])
        return _mean_estimate(ind.astype(float))

    def density(self, x, t, bandwidth=None):
        """Kernel estimate of the level density at x per phase, at time t.

        The Gaussian kernel uses Silverman's bandwidth computed from the
        paths with positive level.
        """
        j = self._row(t)
        lev, ph = self.levels[j], self.phases[j]
        pos = lev > 0
        if bandwidth is None:
            sample = lev[pos]
            if sample.size < 2:
                raise ValueError("too few positive levels for a density estimate")
            q75, q25 = np.percentile(sample, [75, 25])
            spread = min(sample.std(ddof=1), (q75 - q25) / 1.34)
            bandwidth = 0.9 * spread * sample.size ** (-0.2)
        kern = np.exp(-0.5 * ((x - lev) / bandwidth) ** 2) / (bandwidth * np.sqrt(2 * np.pi))
        kern = np.where(pos, kern, 0.0)
        contrib = np.where(ph[None, :] == np.arange(self.m)[:, None], kern[None, :], 0.0)
        return _mean_estimate(contrib)


def simulate_paths(model, cfg, times):
    """Simulate cfg.paths paths and record (level, phase) at each time."""
    times = np.sort(np.atleast_1d(np.asarray(times, dtype=float)))
    if times[0] <= 0 or times[-1] > cfg.horizon:
        raise ValueError("observation times must lie in (0, horizon]")
    g = _phase_law(model, cfg.g)
    chain = _Chain(model.T)
    c = model.c

    def run(rng, n):
        X = np.full(n, float(cfg.level))
        ph = _initial_phase(rng, g, n)
        t = np.zeros(n)
        lev_out = np.empty((times.size, n))
        ph_out = np.empty((times.size, n), dtype=np.int64)
        act = np.arange(n)
        while act.size:
            p = ph[act]
            t0 = t[act]
            hold = chain.holding(rng, p)
            t1 = t0 + hold
            cc = c[p]
            x0 = X[act]
            for j, tau in enumerate(times):
                hit = (t0 < tau) & (tau <= t1)
                if hit.any():
                    lev_out[j, act[hit]] = np.maximum(0.0, x0[hit] + cc[hit] * (tau - t0[hit]))
                    ph_out[j, act[hit]] = p[hit]
            with np.errstate(invalid="ignore"):
                X[act] = np.maximum(0.0, x0 + cc * hold)
            t[act] = t1
            ph[act] = chain.step(rng, p)
            act = act[t1 < times[-1]]
        return lev_out, ph_out

    parts = _map_blocks(cfg.blocks(), cfg.workers, run)
    return PathEnsemble(times, np.concatenate([a for a, _ in parts], axis=1),
                        np.concatenate([b for _, b in parts], axis=1), model.m)


# ---------------------------------------------------------------------------
# first passage between two levels

@dataclass(frozen=True)
class PassageEstimate:
    """E[e^{-s tau}; exit at 0 in phase j] (G) and at y in phase j (H)."""
    G: Estimate
    H: Estimate
    unresolved: float


def first_passage(model, cfg, y, s):
    """Estimate first-passage transforms from (cfg.level, g) out of (0, y).

    tau is the first time the level reaches 0 or y.  Paths still inside
    at the horizon contribute 0 and are counted in ``unresolved``.
    """
    x = cfg.level
    if not 0 <= x <= y or y <= 0:
        raise ValueError("need 0 <= level <= y and y > 0")
    g = _phase_law(model, cfg.g)
    chain = _Chain(model.T)
    c = model.c
    m = model.m

    def run(rng, n):
        X = np.full(n, float(x))
        ph = _initial_phase(rng, g, n)
        t = np.zeros(n)
        disc_g = np.zeros((m, n))
        disc_h = np.zeros((m, n))
        act = np.arange(n)
        while act.size:
            p = ph[act]
            cc = c[p]
            x0 = X[act]
            hold = chain.holding(rng, p)
            with np.errstate(divide="ignore", invalid="ignore"):
                to_zero = np.where(cc < 0, x0 / -cc, np.inf)
                to_top = np.where(cc > 0, (y - x0) / cc, np.inf)
            down = to_zero <= hold
            up = ~down & (to_top <= hold)
            t_exit = t[act] + np.where(down, to_zero, to_top)
            w = np.exp(-s * np.where(down | up, t_exit, 0.0))
            disc_g[p[down], act[down]] = w[down]
            disc_h[p[up], act[up]] = w[up]
            done = down | up
            with np.errstate(invalid="ignore"):
                X[act] = np.where(done, x0, x0 + cc * hold)
            t[act] = t[act] + hold
            ph[act] = chain.step(rng, p)
            act = act[~done & (t[act] < cfg.horizon)]
        exited = (disc_g.sum(axis=0) + disc_h.sum(axis=0)) > 0
        return disc_g, disc_h, n - int(exited.sum())

    parts = _map_blocks(cfg.blocks(), cfg.workers, run)
    G = _mean_estimate(np.concatenate([a for a, _, _ in parts], axis=1))
    H = _mean_estimate(np.concatenate([b for _, b, _ in parts], axis=1))
    return PassageEstimate(G, H, sum(u for _, _, u in parts) / cfg.paths)


# ---------------------------------------------------------------------------
# ruin in the compound Poisson risk model

def _check_phase_type(alpha, M):
    alpha = np.asarray(alpha, dtype=float)
    M = np.asarray(M, dtype=float)
    n = alpha.size
    if M.shape != (n, n):
        raise InvalidPhaseType("alpha and M have inconsistent sizes")
    off = M - np.diag(np.diag(M))
    if np.any(alpha < 0) or alpha.sum() > 1 + 1e-12:
        raise InvalidPhaseType("alpha must be nonnegative with total mass <= 1")
    if np.any(off < 0) or np.any(M.sum(axis=1) > 1e-12):
        raise InvalidPhaseType("M must be a subgenerator")
    if abs(np.linalg.det(M)) < 1e-300:
        raise InvalidPhaseType("M is singular")
    return alpha, M


def phase_type_mean(alpha, M):
    alpha, M = _check_phase_type(alpha, M)
    return float(alpha @ np.linalg.solve(-M, np.ones(len(alpha))))


def adjustment_coefficient(lam, premium, alpha, M):
    """Positive root R of lam (E e^{R U} - 1) = premium R."""
    alpha, M = _check_phase_type(alpha, M)
    if lam * phase_type_mean(alpha, M) >= premium:
        raise NegativeLoading("premium does not exceed expected claims; ruin is certain")
    t = -M.sum(axis=1)
    n = len(alpha)
    r_max = -np.max(np.linalg.eigvals(M).real)

    def mgf(r):
        return (1 - alpha.sum()) + alpha @ np.linalg.solve(-M - r * np.eye(n), t)

    def excess(r):
        return lam * (mgf(r) - 1) - premium * r

    hi = r_max * (1 - 1e-12)
    return brentq(excess, 1e-12 * r_max, hi, xtol=1e-14) if excess(hi) > 0 else hi


def _sample_phase_type(rng, alpha, M, n):
    m = len(alpha)
    rate = -np.diag(M)
    t = -M.sum(axis=1)
    nxt = np.where(np.eye(m, dtype=bool), 0.0, M)
    nxt = np.hstack([nxt, t[:, None]]) / rate[:, None]
    cum = np.cumsum(nxt, axis=1)
    cum[:, -1] = 1.0
    start = np.concatenate([alpha, [1 - alpha.sum()]])
    ph = _initial_phase(rng, start, n)
    total = np.zeros(n)
    live = np.flatnonzero(ph < m)
    while live.size:
        p = ph[live]
        total[live] += rng.standard_exponential(live.size) / rate[p]
        ph[live] = (rng.random(live.size)[:, None] >= cum[p]).sum(axis=1)
        live = live[ph[live] < m]
    return total


@dataclass(frozen=True)
class RuinEstimate:
    estimate: Estimate
    cap: float
    bias_bound: float


def ruin_frequency(lam, premium, alpha, M, x, seed, paths, eps=1e-4, block=BLOCK, workers=1):
    """Fraction of risk-process paths from surplus x that are ever ruined.

    A path stops as ruined when the surplus drops below 0, and as safe once
    it reaches cap = x + log(1/eps)/R; by the Lundberg inequality a path at
    the cap is ruined later with probability at most eps.
    """
    alpha, M = _check_phase_type(alpha, M)
    if not lam > 0 or not premium > 0:
        raise ModelError("claim intensity and premium must be positive")
    if paths < 1:
        raise ValueError("paths must be at least 1")
    if x < 0:
        raise ValueError("initial surplus must be nonnegative")
    R = adjustment_coefficient(lam, premium, alpha, M)
    cap = x + np.log(1 / eps) / R

    def run(rng, n):
        S = np.full(n, float(x))
        ruined = np.zeros(n)
        act = np.arange(n)
        while act.size:
            S[act] += premium * rng.standard_exponential(act.size) / lam
            S[act] -= _sample_phase_type(rng, alpha, M, act.size)
            down = S[act] < 0
            ruined[act[down]] = 1.0
            act = act[~down & (S[act] < cap)]
        return ruined

    parts = _map_blocks(_blocks(seed, paths, block), workers, run)
    return RuinEstimate(_mean_estimate(np.concatenate(parts)), cap, float(np.exp(-R * cap)))

