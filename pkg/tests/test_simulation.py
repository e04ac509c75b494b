import math

import numpy as np
import pytest

from cpselect.criterion import MultiSampleCollection, criterion_c
from cpselect.curves import ar_from_moments
from cpselect.regression import ModelSubset
from cpselect.simulation import (
    P1,
    P2,
    P3,
    POLY_MODELS,
    ExperimentConfig,
    PolyModelParams,
    PopulationHyperParams,
    ar_closed_form,
    closed_form_curve,
    derive_seed,
    gen_poly_dataset,
    gen_population,
    make_rng,
    mc_prediction_error,
    default_params,
    default_population,
    poly_population_moments,
    selection_probability_experiment,
)

PP = default_params()


def test_closed_form_values():
    for label, (lim, tr) in {"p1": (132, 336), "p2": (123, 810), "p3": (118, 1370)}.items():
        c = closed_form_curve(PP, label)
        assert (c.limit_term, c.trace_term) == pytest.approx((lim, tr), rel=1e-14)
    assert ar_closed_form(PP, "p1", 250) == pytest.approx(133.344)
    with pytest.raises(ValueError):
        closed_form_curve(PP, "p4")


def test_coefficient_free_reduction():
    params = PolyModelParams((0.0,) * 11, 0.0, 10.0)
    for label, c in zip(("p1", "p2", "p3"), (2, 6, 11)):
        for n in (5, 50):
            assert ar_closed_form(params, label, n) == pytest.approx(100 * (1 + c / n), rel=1e-14)


def test_ar_from_moments_example():
    assert ar_from_moments(132, 336, 60) == pytest.approx(137.6)
    assert ar_from_moments(5.0, 0.0, 1) == ar_from_moments(5.0, 0.0, 1000) == 5.0


def test_dual_path_identity():
    rng = np.random.default_rng(0)
    for params in [PP] + [PolyModelParams(tuple(rng.normal(size=11)), rng.normal(), 1 + rng.random())
                          for _ in range(5)]:
        for label, m in POLY_MODELS.items():
            moments = poly_population_moments(params, m)
            for n in range(10, 501, 7):
                assert ar_from_moments(moments.limit_term, moments.trace_term, n) == pytest.approx(
                    ar_closed_form(params, label, n), rel=1e-12)


def test_population_moments_by_monte_carlo():
    # a model without X1 and without the intercept, checked against brute-force moments
    rng = np.random.default_rng(4)
    params = PolyModelParams((0.7, -1.2) + tuple(rng.normal(size=9)), 1.5, 2.0)
    m = ModelSubset((2, 3))
    ds = gen_poly_dataset(params, 400_000, 9)
    beta = np.asarray(params.b)[[2, 3]]
    e = ds.y - ds.X[:, [2, 3]] @ beta
    W = (ds.X[:, [2, 3]] * e[:, None] ** 2).T @ ds.X[:, [2, 3]] / len(e)
    mom = poly_population_moments(params, m)
    assert np.mean(e**2) == pytest.approx(mom.limit_term, rel=0.02)
    assert np.trace(W) == pytest.approx(mom.trace_term, rel=0.02)


def test_noiseless_linear_dataset():
    b = (0.0, 1.0) + (0.0,) * 9
    ds = gen_poly_dataset(PolyModelParams(b, 0.0, 1e-12), 50, 1)
    assert np.max(np.abs(ds.y - ds.X[:, 1])) <= 1e-9
    assert np.all(ds.X[:, 0] == 1.0)


def test_response_variance():
    ds = gen_poly_dataset(PP, 100_000, 2)
    assert np.var(ds.y, ddof=1) == pytest.approx(132, rel=0.02)


def test_generated_moments():
    ds = gen_poly_dataset(PP, 100_000, 3)
    Z = ds.X[:, 1:]
    assert np.allclose(Z.T @ Z / len(Z), np.eye(10), atol=0.02)
    assert abs(np.mean(Z[:, 0] ** 2 - 1)) < 0.02


def test_generators_are_deterministic():
    a, b = gen_poly_dataset(PP, 30, 77), gen_poly_dataset(PP, 30, 77)
    assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()
    assert gen_poly_dataset(PP, 30, 78).y.tobytes() != a.y.tobytes()
    c1, c2 = gen_population(default_population(), 5), gen_population(default_population(), 5)
    assert c1.meta["params"] == c2.meta["params"]
    assert all(x.y.tobytes() == y.y.tobytes() for x, y in zip(c1.datasets, c2.datasets))
    assert make_rng(1, "a", 2).random() == make_rng(1, "a", 2).random()
    assert derive_seed(1, "x") == derive_seed(1, "x") != derive_seed(1, "y")


def test_population_layout():
    coll = gen_population(default_population(), 1)
    assert len(coll) == 200
    assert [ds.N for ds in coll.datasets] == [40] * 50 + [100] * 50 + [150] * 50 + [250] * 50
    assert len(coll.meta["params"]) == 200


def test_population_reduces_to_single_dataset():
    hyper = PopulationHyperParams(PP.b, (0.0,) * 11, PP.a, PP.sigma, ((1, 25),))
    coll = gen_population(hyper, 8)
    ds = gen_poly_dataset(PP, 25, 8, id=coll.datasets[0].id)
    assert coll.datasets[0].y.tobytes() == ds.y.tobytes()
    assert coll.meta["params"][ds.id] == PP


def test_fixed_coefficients_across_data_seeds():
    a = gen_population(default_population(), 1, coef_seed=10)
    b = gen_population(default_population(), 2, coef_seed=10)
    assert a.meta["params"] == b.meta["params"]
    assert a.datasets[0].y.tobytes() != b.datasets[0].y.tobytes()


def test_mc_intercept_only_exact_r():
    params = PolyModelParams((0.0,) * 11, 0.0, 1.0)
    n = 10
    est = mc_prediction_error(params, ModelSubset((0,)), n, 20_000, 3)
    assert abs(est.mean - (1 + 1 / n)) < 3 * est.std_error
    assert est.replications == 20_000 and est.failed == 0


def test_mc_p1_at_250_matches_ar():
    est = mc_prediction_error(PP, P1, 250, 10_000, 21)
    assert abs(est.mean - 133.344) < 3 * est.std_error


def test_mc_p3_gap_at_30():
    est = mc_prediction_error(PP, P3, 30, 4000, 5, test_pairs=50)
    assert est.mean - ar_closed_form(PP, "p3", 30) > 3 * est.std_error


def test_mc_is_deterministic():
    a = mc_prediction_error(PP, P2, 20, 50, 9)
    b = mc_prediction_error(PP, P2, 20, 50, 9)
    assert (a.mean, a.std_error) == (b.mean, b.std_error)


def test_mc_counts_guard_failures():
    est = mc_prediction_error(PP, P3, 11, 30, 1)
    assert est.replications + est.failed == 30


def test_oracle_gap_shrinks_with_n():
    grid = (30, 60, 120, 250)
    for label, m in POLY_MODELS.items():
        gaps, ses = [], []
        for n in grid:
            est = mc_prediction_error(PP, m, n, 1500, derive_seed(17, label, n), test_pairs=200)
            gaps.append(abs(est.mean - ar_closed_form(PP, label, n)))
            ses.append(est.std_error)
        assert gaps[-1] <= gaps[0] + 3 * math.hypot(ses[0], ses[-1])
        if label != "p1":
            assert all(b < a for a, b in zip(gaps[:3], gaps[1:3]))


def test_single_sample_criterion_tracks_ar():
    vals = []
    for r in range(1000):
        ds = gen_poly_dataset(PP, 250, derive_seed(31, r))
        vals.append(criterion_c(ds, P1, 250).value)
    vals = np.asarray(vals)
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean() - 133.344) < 3 * se


def test_degenerate_single_candidate_experiment():
    cfg = ExperimentConfig(mode="single", n_grid=(20, 60), candidates=(P2,))
    rows = selection_probability_experiment(cfg, 5, 1)
    assert all(r["frequency"] == 1.0 for r in rows)


def test_single_sample_selection_near_half_when_corrected():
    cfg = ExperimentConfig(mode="single", n_grid=(40,), corrected=(False, True))
    rows = selection_probability_experiment(cfg, 500, 2026)
    freq = {r["corrected"]: r["frequency"] for r in rows if r["model"] == "p1"}
    assert 0.35 <= freq[True] <= 0.65
    # the correction raises the chance of picking the better small model
    assert freq[True] > freq[False]


def test_experiment_collections():
    cfg = ExperimentConfig(mode="multi")
    a, b = cfg.collection(1, 0), cfg.collection(1, 1)
    assert isinstance(a, MultiSampleCollection)
    assert a.meta["params"] == b.meta["params"]
    assert a.datasets[0].y.tobytes() != b.datasets[0].y.tobytes()
    with pytest.raises(ValueError):
        ExperimentConfig(mode="other").collection(1, 0)
