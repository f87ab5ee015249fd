import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import central_diff, random_family
from sfmsens.errors import (DimensionMismatch, GeneratorRowSum, ModelError, NotIrreducible,
                            SignPartitionMismatch)
from sfmsens.model import (ParamModel, SfmModel, ctmc_stationary, drift, dump_model,
                           fluid_generator, fluid_generator_jacobian, parse_model)


def test_partition_follows_signs():
    m = SfmModel([[-1, 1, 0], [0, -1, 1], [1, 0, -1]], [2.0, -1.0, 0.0])
    assert m.sizes == (1, 1, 1)
    assert m.index("-0").tolist() == [1, 2]
    assert m.rates("+").tolist() == [2.0]


@pytest.mark.parametrize("T, c, exc", [
    ([[-1, 1], [1, -0.5]], [1, -1], GeneratorRowSum),
    ([[1, -1], [1, -1]], [1, -1], GeneratorRowSum),
    ([[-1, 1], [0, 0]], [1, -1], NotIrreducible),
    ([[-1, 1], [1, -1]], [1, -1, 0], DimensionMismatch),
])
def test_invalid_models(T, c, exc):
    with pytest.raises(exc):
        SfmModel(T, c)


def test_partition_mismatch():
    with pytest.raises(SignPartitionMismatch):
        SfmModel([[-1, 1], [1, -1]], [1, -1], partition=([1], [0], []))


def test_stationary_vector_and_drift():
    m = SfmModel([[-1, 1], [0.5, -0.5]], [1, -1])
    assert np.allclose(ctmc_stationary(m), [1 / 3, 2 / 3], atol=1e-15)
    assert drift(m) == pytest.approx(-1 / 3, abs=1e-15)


def test_fluid_generator_is_rescaled_and_taboo_corrected():
    T = np.array([[-2.0, 1.0, 1.0], [1.0, -3.0, 2.0], [1.0, 1.0, -2.0]])
    m = SfmModel(T, [2.0, -0.5, 0.0])
    s = 0.3
    q = fluid_generator(m, s)
    # censoring out the zero phase by hand
    w = 1.0 / (2.0 + s)
    assert q.Qpp[0, 0] == pytest.approx((-2.0 - s + 1.0 * w * 1.0) / 2.0)
    assert q.Qpm[0, 0] == pytest.approx((1.0 + 1.0 * w * 1.0) / 2.0)
    assert q.Qmp[0, 0] == pytest.approx((1.0 + 2.0 * w * 1.0) / 0.5)
    assert q.Qmm[0, 0] == pytest.approx((-3.0 - s + 2.0 * w * 1.0) / 0.5)


def test_generator_jacobian_matches_differences(rng):
    for _ in range(5):
        pm = random_family(rng)
        for s in (0.0, 0.7):
            dq = fluid_generator_jacobian(pm, s)
            for name in ("pp", "pm", "mm", "mp"):
                fd = central_diff(lambda q: getattr(fluid_generator(q.model, s), "Q" + name), pm)
                got = getattr(dq, "dQ" + name).slabs
                assert np.max(np.abs(got - fd)) <= 1e-7 * max(1, np.abs(fd).max())


def test_family_rejects_rate_leaving_zero():
    m = SfmModel([[-1, 1, 0], [0, -1, 1], [1, 0, -1]], [1.0, -1.0, 0.0])
    with pytest.raises(ModelError):
        ParamModel.affine(m, [1.0], np.zeros((1, 3, 3)), [[0, 0, 1.0]])


def test_family_rejects_row_sum_drift():
    m = SfmModel([[-1, 1], [1, -1]], [1.0, -1.0])
    with pytest.raises(GeneratorRowSum):
        ParamModel.affine(m, [1.0], [[[1.0, 0.0], [0.0, 0.0]]], np.zeros((1, 2)))


def test_model_document_roundtrip(rng):
    pm = random_family(rng)
    doc = json.loads(json.dumps(dump_model(pm)))
    back = parse_model(doc)
    assert np.array_equal(back.model.T, pm.model.T)
    assert np.array_equal(back.model.c, pm.model.c)
    assert np.allclose(back.dT, pm.dT) and np.allclose(back.dC, pm.dC)
    assert back.finite_difference_check() < 1e-8


def test_model_document_missing_field():
    with pytest.raises(ModelError):
        parse_model({"T": [[-1, 1], [1, -1]]})


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_nu_annihilates_generator(seed):
    pm = random_family(np.random.default_rng(seed))
    nu = ctmc_stationary(pm.model)
    assert np.all(nu >= 0) and nu.sum() == pytest.approx(1.0)
    assert np.max(np.abs(nu @ pm.model.T)) < 1e-12
    assert drift(pm.model) < 0
