import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from conftest import assert_fd, central_diff, random_family
from sfmsens.errors import NullRecurrent, SpectraOverlap
from sfmsens.firstreturn import (differentiated_residual, first_return, riccati_residual,
                                 sylvester, sylvester_many)
from sfmsens.model import SfmModel
from sfmsens.simple import SimpleClosedForm, param_model


@pytest.mark.parametrize("s", [0.0, 0.3, 2.0, 0.5 + 1.5j, 1e-3j])
def test_simple_model_closed_forms(s):
    fr = first_return(param_model(1.0, 0.5), s)
    cf = SimpleClosedForm(1.0, 0.5)
    for name, want in (("Psi", cf.psi(s)), ("Xi", cf.xi(s)), ("D", cf.D(s)),
                       ("U", cf.U(s)), ("K", cf.K(s)), ("J", cf.J(s))):
        assert abs(getattr(fr, name)[0, 0] - want) < 1e-12, name
    dpsi, dD = cf._dpsi_dD(s)
    assert np.allclose(fr.dPsi.slabs[:, 0, 0], dpsi, atol=1e-10)
    assert np.allclose(fr.dD.slabs[:, 0, 0], dD, atol=1e-10)


def test_values_at_zero():
    fr = first_return(param_model(1.0, 0.5), 0.0)
    assert fr.Psi[0, 0] == 1.0
    assert fr.Xi[0, 0] == pytest.approx(0.5, abs=1e-14)
    assert fr.K[0, 0] == pytest.approx(-0.5, abs=1e-14)


def test_busy_period_by_complex_step():
    h = 1e-20
    fr = first_return(param_model(1.0, 0.5).model, 1j * h, derivatives=False)
    assert -fr.Psi[0, 0].imag / h == pytest.approx(4.0, abs=1e-12)


def test_sylvester_against_scipy(rng):
    A = rng.normal(size=(4, 4)) - 3 * np.eye(4)
    B = rng.normal(size=(3, 3)) - 3 * np.eye(3)
    C = rng.normal(size=(4, 3))
    assert np.allclose(sylvester(A, B, C), sla.solve_sylvester(A, B, C))
    Cs = rng.normal(size=(2, 4, 3))
    got = sylvester_many(A, B, Cs)
    assert np.allclose(got[1], sla.solve_sylvester(A, B, Cs[1]))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_sylvester_overlapping_spectra():
    with pytest.raises(SpectraOverlap):
        sylvester(np.diag([1.0, 2.0]), np.diag([-1.0]), np.ones((2, 1)))


def test_null_recurrent():
    with pytest.raises(NullRecurrent):
        first_return(SfmModel([[-1, 1], [1, -1]], [1, -1]), 0.0, derivatives=False)


def test_riccati_and_differentiated_residuals(suite):
    for pm in suite:
        for s in (0.0, 0.8):
            fr = first_return(pm, s)
            assert np.max(np.abs(riccati_residual(fr.q, fr.Psi))) <= 1e-12 * max(1, fr.q.norm)
            res = differentiated_residual(fr.q, fr.dq, fr.Psi, fr.dPsi)
            assert np.max(np.abs(res)) <= 1e-10


def test_psi_is_a_return_probability(suite):
    for pm in suite[:8]:
        fr0 = first_return(pm.model, 0.0, derivatives=False)
        assert np.allclose(fr0.Psi.sum(axis=1), 1.0, atol=1e-14)
        assert np.all(fr0.Psi >= -1e-15)
        # decreasing transform of the return time
        fr1 = first_return(pm.model, 0.5, derivatives=False)
        assert np.all(fr1.Psi <= fr0.Psi + 1e-15)
        assert np.all(fr1.Psi.sum(axis=1) < 1)
        # Xi is substochastic for a process that drifts down
        assert np.all(fr0.Xi.sum(axis=1) <= 1 + 1e-12)


def test_closures_are_stable(suite):
    for pm in suite[:8]:
        fr = first_return(pm.model, 0.0, derivatives=False)
        assert np.max(np.linalg.eigvals(fr.K).real) < 0


def test_conjugate_symmetry(suite):
    pm = suite[0]
    s = 0.4 + 2.0j
    a = first_return(pm, s)
    b = first_return(pm, np.conj(s))
    assert np.allclose(a.Psi, np.conj(b.Psi), atol=1e-12)
    assert np.allclose(a.dPsi.data, np.conj(b.dPsi.data), atol=1e-10)


@pytest.mark.parametrize("s", [0.0, 0.6])
def test_jacobians_against_differences(suite, s):
    for pm in suite[:6]:
        fr = first_return(pm, s)
        for name in ("Psi", "Xi", "D", "U", "K", "J"):
            fd = central_diff(lambda q: getattr(first_return(q, s, False), name), pm)
            assert_fd(getattr(fr, "d" + name).slabs, fd, name)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 3.0))
def test_psi_fixed_point(seed, s):
    pm = random_family(np.random.default_rng(seed), p=1)
    fr = first_return(pm.model, s, derivatives=False)
    assert np.max(np.abs(riccati_residual(fr.q, fr.Psi))) <= 1e-12 * max(1, fr.q.norm)
    assert np.all(fr.Psi >= -1e-14)
    if s >= 0.05:
        assert np.max(np.linalg.eigvals(fr.D).real) < 0
