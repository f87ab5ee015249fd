import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import assert_fd, central_diff, random_family
from sfmsens.errors import UnstableModel
from sfmsens.matcalc import BlockJacobian
from sfmsens.model import SfmModel, ctmc_stationary
from sfmsens.simple import SimpleClosedForm, param_model
from sfmsens.stationary import stationary

XS = (0.3, 1.0, 3.0)


@pytest.mark.parametrize("a, b", [(1.0, 0.5), (2.0, 0.3), (1.0, 0.99), (0.4, 0.1)])
def test_simple_model(a, b):
    st_ = stationary(param_model(a, b))
    cf = SimpleClosedForm(a, b)
    assert st_.p_minus[0] == pytest.approx(cf.p_minus, abs=1e-9)
    assert st_.alpha == pytest.approx(cf.alpha, abs=1e-9)
    assert np.allclose(st_.dp.slabs[:, 0, 0], cf.dp_minus, atol=1e-8)
    assert np.allclose(st_.dalpha.slabs[:, 0, 0], cf.dalpha, atol=1e-8)
    for x in (0.0, 0.5, 2.0, 7.0):
        row = st_.density_row(x)
        assert row[0] == pytest.approx(cf.pi_plus(x), abs=1e-9)
        assert row[1] == pytest.approx(cf.pi_plus(x), abs=1e-9)
        assert np.allclose(st_.ddensity_row(x)[:, 0], cf.dpi_plus(x), atol=1e-8)


def test_simple_reference_values():
    st_ = stationary(param_model(1.0, 0.5))
    assert st_.p_minus[0] == pytest.approx(1 / 3, abs=1e-14)
    assert st_.alpha == pytest.approx(1 / 6, abs=1e-14)
    assert np.allclose(st_.dp.slabs[:, 0, 0], [4 / 9, -8 / 9], atol=1e-14)


def test_sign_change_of_density_derivative():
    st_ = stationary(param_model(1.0, 0.5))
    root = SimpleClosedForm(1.0, 0.5).dpi_da_root
    assert root == pytest.approx(4 / 3)
    assert st_.ddensity_row(root - 1e-3)[0, 0] > 0 > st_.ddensity_row(root + 1e-3)[0, 0]
    assert abs(st_.ddensity_row(root)[0, 0]) < 1e-14


def test_unstable():
    with pytest.raises(UnstableModel):
        stationary(SfmModel([[-0.5, 0.5], [1.0, -1.0]], [1.0, -1.0]))


def test_conservation(suite):
    for pm in suite:
        st_ = stationary(pm)
        occ = st_.boundary_row() + st_.integrated_density()
        assert abs(occ.sum() - 1) <= 1e-8
        assert np.max(np.abs(occ - ctmc_stationary(pm.model))) <= 1e-8
        dmass = st_.dp.slabs[:, 0, :].sum(axis=1) + st_.dintegrated_density().sum(axis=1)
        assert np.max(np.abs(dmass)) <= 1e-7


def test_occupancy_derivative_matches_nu(suite):
    for pm in suite[:6]:
        st_ = stationary(pm)
        docc = st_.dintegrated_density()
        docc[:, pm.model.index("-0")] += st_.dp.slabs[:, 0, :]
        fd = central_diff(lambda q: ctmc_stationary(q.model), pm)
        assert_fd(docc, fd, "d nu")


def test_density_two_routes(suite):
    # direct matrix-exponential form against inversion of the transform in x
    for pm in suite[:5]:
        st_ = stationary(pm)
        for x in (0.5, 2.0):
            direct = np.concatenate(st_.density(x)[:2])
            assert np.allclose(st_.density_via_transform(x), direct, atol=1e-8)
            slabs = np.concatenate([j.slabs for j in st_.ddensity(x)[:2]], axis=2)
            ddirect = BlockJacobian.from_slabs(slabs).data
            assert np.allclose(st_.ddensity_via_transform(x), ddirect, atol=1e-7)


def test_jacobians_against_differences(suite):
    for pm in suite:
        st_ = stationary(pm)
        assert_fd(st_.dxi.slabs[:, 0], central_diff(lambda q: stationary(q, False).xi, pm), "xi")
        assert_fd(st_.dalpha.slabs[:, 0, 0], central_diff(lambda q: stationary(q, False).alpha, pm),
                  "alpha")
        assert_fd(st_.dp.slabs[:, 0], central_diff(lambda q: stationary(q, False).p, pm), "p")
        for x in XS:
            fd = central_diff(lambda q: stationary(q, False).density_row(x), pm)
            assert_fd(st_.ddensity_row(x), fd, f"pi({x})")


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 20.0))
def test_density_is_nonnegative(seed, x):
    st_ = stationary(random_family(np.random.default_rng(seed)).model)
    assert np.all(st_.density_row(x) >= -1e-14)
    assert np.all(st_.p >= -1e-14)
