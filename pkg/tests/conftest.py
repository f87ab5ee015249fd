import numpy as np
import pytest

from sfmsens.model import ParamModel, SfmModel, ctmc_stationary


def random_family(rng, m=None, p=None, target_drift=None, zero_phases=True):
    """Random affine family around a stable irreducible model.

    Off-diagonal rates live on a random pattern that always contains the
    cycle 0 -> 1 -> ... -> m-1 -> 0, and every dT_k is supported on that
    same pattern, so small steps in theta keep T a generator.
    """
    m = int(rng.integers(2, 9)) if m is None else m
    p = int(rng.integers(1, 5)) if p is None else p
    signs = np.empty(m)
    signs[:2] = [1, -1]
    choices = [1, -1, 0] if zero_phases else [1, -1]
    signs[2:] = rng.choice(choices, size=m - 2)
    rng.shuffle(signs)
    mask = rng.random((m, m)) < 0.6
    mask[np.arange(m), (np.arange(m) + 1) % m] = True
    np.fill_diagonal(mask, False)
    off = np.where(mask, rng.uniform(0.3, 2.0, (m, m)), 0.0)
    T = off - np.diag(off.sum(axis=1))
    c = signs * rng.uniform(0.5, 2.0, m)
    nu = ctmc_stationary(SfmModel(T, c))
    mu_target = -rng.uniform(0.1, 0.6) if target_drift is None else target_drift
    up = nu[c > 0] @ c[c > 0]
    down = nu[c < 0] @ c[c < 0]
    c[c < 0] *= (mu_target - up) / down
    dT = np.where(mask[None], rng.uniform(-0.3, 0.3, (p, m, m)), 0.0)
    dT -= np.einsum("kij->ki", dT)[:, :, None] * np.eye(m)[None]
    dC = np.where(c[None] != 0, rng.uniform(-0.2, 0.2, (p, m)), 0.0)
    theta = rng.uniform(0.5, 2.0, p)
    return ParamModel.affine(SfmModel(T, c), theta, dT, dC)


def central_diff(f, pm, h=1e-6):
    """(p, ...) central differences of f(ParamModel) in each parameter."""
    out = []
    for k in range(pm.p):
        e = np.zeros(pm.p)
        e[k] = h
        out.append((np.asarray(f(pm.at(pm.theta + e))) - np.asarray(f(pm.at(pm.theta - e)))) / (2 * h))
    return np.stack(out)


def fd_gap(analytic, fd, rel=1e-6, floor=1e-9):
    """Largest |analytic - fd| and its allowance rel * max|fd| + floor."""
    analytic, fd = np.asarray(analytic), np.asarray(fd)
    return float(np.max(np.abs(analytic - fd), initial=0.0)), rel * float(np.max(np.abs(fd), initial=0.0)) + floor


def assert_fd(analytic, fd, what="", rel=1e-6, floor=1e-9):
    gap, allow = fd_gap(analytic, fd, rel, floor)
    assert gap <= allow, f"{what}: |analytic - fd| = {gap:.3g} > {allow:.3g}"


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def suite():
    """The 20 randomized families used by the gradient and residual checks."""
    gen = np.random.default_rng(7)
    return [random_family(gen) for _ in range(20)]


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
