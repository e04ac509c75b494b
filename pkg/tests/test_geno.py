import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cpselect.criterion import MultiSampleCollection, aggregate_criterion
from cpselect.curves import ArCurve
from cpselect.geno import GenoValue, geno_from_curves, geno_hat, geno_min, geno_min_from_curves
from cpselect.regression import ModelSubset, RegressionDataset
from cpselect.simulation import P1, P2, default_curves

from conftest import random_dataset

CURVES = default_curves()


def test_self_identity_analytic():
    for n in (1, 7, 53, 400):
        for c in CURVES.values():
            assert geno_from_curves(c, c, n).value == n


def test_reference_geno_values():
    assert geno_from_curves(CURVES[P1], CURVES[P2], 53).value == pytest.approx(52.80, abs=0.01)
    assert geno_from_curves(CURVES[P2], CURVES[P1], 60).value == pytest.approx(74.67, abs=0.01)
    assert geno_from_curves(CURVES[P2], CURVES[P1], 65).value == pytest.approx(97.07, abs=0.01)


def test_closed_form_oracle():
    # AR_q(m) = AR_p(n) solved for m directly
    p, q = CURVES[P2], CURVES[P1]
    m = q.trace_term / (p(60) - q.limit_term)
    assert geno_from_curves(p, q, 60).value == pytest.approx(m, rel=1e-12)
    assert q(m) == pytest.approx(p(60), rel=1e-12)


def test_infinite_branch():
    p = ArCurve(10.0, 5.0)
    q = ArCurve(20.0, 5.0)  # q is worse at every sample size
    g = geno_from_curves(p, q, 10)
    assert g.is_infinite and g.value == math.inf and g.to_text() == "inf"
    assert GenoValue(3.0, 1) < g and g <= g


def test_geno_min_analytic_at_50():
    g = geno_min_from_curves(CURVES, P1, 50)
    assert g.value == 50
    assert g.attained_by == (P1,)


def test_geno_min_below_n_when_not_best():
    g = geno_min_from_curves(CURVES, P1, 200)
    assert g.value < 200
    brute = min(geno_from_curves(CURVES[P1], CURVES[r], 200).value for r in CURVES)
    assert g.value == brute


def test_geno_min_requires_p():
    with pytest.raises(ValueError):
        geno_min_from_curves({P2: CURVES[P2]}, P1, 10)


def _single(ds):
    return MultiSampleCollection([ds])


def test_geno_hat_hand_substitution():
    # C_p = 1.5, C_q = 1.4, tr_q = 2 at n = 10: 2 / (0.1 + 0.2)
    assert 2 / (1.5 - 1.4 + 2 / 10) == pytest.approx(6.667, abs=1e-3)
    rng = np.random.default_rng(0)
    ds = random_dataset(rng, 30, 3, hetero=True)
    p, q = ModelSubset((0, 1)), ModelSubset((0, 1, 2))
    coll = _single(ds)
    cp, cq = (aggregate_criterion(coll, m, 10) for m in (p, q))
    expected = cq.trace_v / (cp.value - cq.value + cq.trace_v / 10)
    if expected > 0:
        assert geno_hat(coll, p, q, 10).value == pytest.approx(expected, rel=1e-12)


def test_geno_hat_self_identity(rng):
    coll = MultiSampleCollection([random_dataset(rng, 20, 3, id=str(j)) for j in range(3)])
    m = ModelSubset((0, 2))
    for corrected in (False, True):
        assert geno_hat(coll, m, m, 17, corrected).value == 17


def test_geno_hat_curve_consistency(rng):
    coll = MultiSampleCollection([random_dataset(rng, 25, 4, id=str(j), hetero=True) for j in range(4)])
    p, q = ModelSubset((0, 1)), ModelSubset((0, 1, 2, 3))
    for corrected in (False, True):
        cp, cq = (aggregate_criterion(coll, m, 1, corrected).curve() for m in (p, q))
        for n in (5, 30, 300):
            a = geno_hat(coll, p, q, n, corrected)
            b = geno_from_curves(cp, cq, n)
            assert a.is_infinite == b.is_infinite
            if not a.is_infinite:
                assert a.value == pytest.approx(b.value, rel=1e-10)


def test_geno_hat_dominated_q_is_infinite():
    rng = np.random.default_rng(1)
    X = np.column_stack([np.ones(40), rng.normal(size=(40, 3))])
    y = 5 * X[:, 1] + 0.1 * rng.normal(size=40)
    coll = _single(RegressionDataset("a", X, y))
    p, q = ModelSubset((0, 1)), ModelSubset((0, 2, 3))
    assert geno_hat(coll, p, q, 40).is_infinite


def _instance(seed, k):
    rng = np.random.default_rng(seed)
    dss = [random_dataset(rng, int(rng.integers(12, 30)), 4, id=str(j), hetero=True) for j in range(2)]
    coll = MultiSampleCollection(dss)
    models = [ModelSubset((0, 1)), ModelSubset((0, 1, 2)), ModelSubset((0, 1, 2, 3))][:k]
    return coll, models, int(rng.integers(5, 300))


@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]), st.booleans())
def test_ordering_equivalence_chain(seed, k, corrected):
    coll, models, n = _instance(seed, k)
    vals = {m: aggregate_criterion(coll, m, n, corrected).value for m in models}
    for p in models:
        for q in models:
            for r in models:
                gp, gq = geno_hat(coll, p, r, n, corrected), geno_hat(coll, q, r, n, corrected)
                if vals[p] < vals[q]:
                    assert gp.value >= gq.value
                elif vals[p] > vals[q]:
                    assert gp.value <= gq.value


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_geno_min_bound(seed, corrected):
    coll, models, n = _instance(seed, 3)
    vals = {m: aggregate_criterion(coll, m, n, corrected).value for m in models}
    best = min(vals.values())
    for p in models:
        g = geno_min(coll, p, models, n, corrected)
        assert g.value <= n * (1 + 1e-12)
        if vals[p] == best:
            assert g.value == pytest.approx(n, rel=1e-12)
        else:
            assert g.value < n
