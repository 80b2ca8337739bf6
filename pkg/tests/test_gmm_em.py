import numpy as np
import pytest

from zsig import gmm_em
from zsig.errors import ZsigError
from zsig.gmm_em import e_step, fit, init_mixture, log_likelihood, m_step, predict
from zsig.signatures import CovarianceMode, estimate_signatures, make_signature

LOG_2PI = np.log(2 * np.pi)


def unit_sig(mean, class_id=None):
    return make_signature(np.asarray(mean, float), CovarianceMode.UNIT, class_id=class_id)


def diag_sig(mean, var, class_id=None):
    return make_signature(np.asarray(mean, float), CovarianceMode.DIAGONAL, np.asarray(var, float), class_id=class_id)


@pytest.fixture
def two_component_1d():
    """Two unit-variance 1-D components at 0 and 1 with equal weights."""
    comps = [diag_sig([0.0], [1.0]), diag_sig([1.0], [1.0])]
    return init_mixture(comps)


def test_init_uniform_weights():
    model = init_mixture([unit_sig(np.ones(3) * i) for i in range(10)])
    np.testing.assert_allclose(model.weights, np.full(10, 0.1))


def test_init_singleton():
    model = init_mixture([unit_sig([0.0, 0.0])])
    np.testing.assert_array_equal(model.weights, [1.0])


def test_init_components_verbatim():
    sigs = [unit_sig([float(i), 0.0]) for i in range(4)]
    model = init_mixture(sigs)
    np.testing.assert_allclose(model.weights, [0.25] * 4)
    assert all(a is b for a, b in zip(model.components, sigs))
    with pytest.raises(ZsigError):
        init_mixture([])


def test_log_likelihood_single_standard_normal():
    model = init_mixture([unit_sig([0.5, -0.5])])
    ll = log_likelihood(model, np.array([[0.5, -0.5]]))
    assert ll == pytest.approx(-LOG_2PI, abs=1e-12)


def test_log_likelihood_additive_over_rows():
    rng = np.random.default_rng(0)
    model = init_mixture([unit_sig(rng.standard_normal(3)) for _ in range(3)])
    X = rng.standard_normal((7, 3))
    single = log_likelihood(model, X)
    doubled = log_likelihood(model, np.vstack([X, X]))
    assert doubled == pytest.approx(2 * single, abs=1e-9)


def test_log_likelihood_matches_direct_sum(two_component_1d):
    x = 0.5

    def normal_pdf(v, mu):
        return np.exp(-0.5 * (v - mu) ** 2) / np.sqrt(2 * np.pi)

    want = np.log(0.5 * normal_pdf(x, 0.0) + 0.5 * normal_pdf(x, 1.0))
    assert log_likelihood(two_component_1d, np.array([[x]])) == pytest.approx(want, abs=1e-12)


def test_e_step_single_component():
    model = init_mixture([unit_sig([0.0, 0.0])])
    r = e_step(model, np.random.default_rng(1).standard_normal((6, 2)))
    np.testing.assert_array_equal(r, np.ones((6, 1)))


def test_e_step_identical_components():
    model = init_mixture([unit_sig([1.0, 2.0]), unit_sig([1.0, 2.0])])
    r = e_step(model, np.random.default_rng(2).standard_normal((5, 2)))
    np.testing.assert_allclose(r, 0.5, atol=1e-12)


def test_e_step_closed_form_ratio(two_component_1d):
    r = e_step(two_component_1d, np.array([[0.5], [0.0]]))
    np.testing.assert_allclose(r[0], [0.5, 0.5], atol=1e-12)
    assert r[1, 0] == pytest.approx(1.0 / (1.0 + np.exp(-0.5)), abs=1e-12)


def test_e_step_rows_sum_to_one_under_underflow():
    # components far from the data: densities underflow but rows stay normalized
    model = init_mixture([unit_sig([1e4, 1e4]), unit_sig([-1e4, 1e4])])
    r = e_step(model, np.zeros((3, 2)))
    assert np.isfinite(r).all()
    np.testing.assert_allclose(r.sum(axis=1), 1.0, atol=1e-10)


def test_m_step_hard_assignment_reduces_to_estimation():
    rng = np.random.default_rng(3)
    X = np.vstack([rng.standard_normal((20, 2)), rng.standard_normal((30, 2)) + 5])
    y = np.repeat([0, 1], [20, 30])
    ridge = 1e-4
    resp = np.eye(2)[y]
    model = init_mixture([diag_sig([0.0, 0.0], [1.0, 1.0], 0), diag_sig([5.0, 5.0], [1.0, 1.0], 1)])
    new, collapsed = m_step(model, X, resp, ridge)
    assert collapsed == 0
    want = estimate_signatures(X, y, CovarianceMode.DIAGONAL, ridge)
    np.testing.assert_allclose(new.weights, [0.4, 0.6], atol=1e-12)
    for got, ref in zip(new.components, want):
        np.testing.assert_allclose(got.mean, ref.mean, atol=1e-12)
        np.testing.assert_allclose(got.covariance, ref.covariance, atol=1e-12)


def test_m_step_uniform_responsibilities():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((12, 3))
    model = init_mixture([unit_sig(rng.standard_normal(3)) for _ in range(4)])
    resp = np.full((12, 4), 0.25)
    new, _ = m_step(model, X, resp, 1e-4)
    np.testing.assert_allclose(new.weights, 0.25, atol=1e-12)
    for comp in new.components:
        np.testing.assert_allclose(comp.mean, X.mean(axis=0), atol=1e-12)


def test_m_step_four_point_weighted_average_oracle():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    resp = np.array([[0.9, 0.1], [0.6, 0.4], [0.2, 0.8], [0.1, 0.9]])
    ridge = 1e-5
    model = init_mixture([diag_sig([0.0], [1.0]), diag_sig([3.0], [1.0])])
    new, _ = m_step(model, X, resp, ridge)
    for k in range(2):
        nk = resp[:, k].sum()
        mu = (resp[:, k] * X[:, 0]).sum() / nk
        var = (resp[:, k] * (X[:, 0] - mu) ** 2).sum() / nk + ridge
        assert new.weights[k] == pytest.approx(nk / 4.0, abs=1e-12)
        assert new.components[k].mean[0] == pytest.approx(mu, abs=1e-12)
        assert new.components[k].covariance[0] == pytest.approx(var, abs=1e-12)


def test_m_step_weights_stay_simplex():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((30, 2))
    model = init_mixture([unit_sig(rng.standard_normal(2)) for _ in range(3)])
    resp = e_step(model, X)
    new, _ = m_step(model, X, resp, 1e-4)
    assert abs(new.weights.sum() - 1.0) <= 1e-12
    assert new.weights.min() >= 0


def test_fit_fixed_point_converges_fast():
    rng = np.random.default_rng(6)
    X = np.vstack([rng.standard_normal((200, 2)), rng.standard_normal((200, 2)) + 20])
    model = init_mixture([unit_sig(X[:200].mean(axis=0)), unit_sig(X[200:].mean(axis=0))])
    _, trace = fit(model, X, tol=1e-6, max_iters=50, ridge=1e-8)
    assert trace.converged
    assert trace.iterations <= 2


def test_fit_single_component_global_fit():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((100, 3)) * 2 + 1
    model = init_mixture([diag_sig([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])])
    ridge = 1e-6
    refined, trace = fit(model, X, tol=1e-9, max_iters=50, ridge=ridge)
    assert trace.converged
    np.testing.assert_allclose(refined.components[0].mean, X.mean(axis=0), atol=1e-10)
    np.testing.assert_allclose(refined.components[0].covariance, X.var(axis=0) + ridge, atol=1e-10)


def test_fit_recovers_two_separated_clusters():
    rng = np.random.default_rng(8)
    X = np.concatenate([rng.standard_normal(500), rng.standard_normal(500) + 6.0])[:, None]
    model = init_mixture([diag_sig([-1.0], [1.0]), diag_sig([7.5], [1.0])])
    refined, trace = fit(model, X, tol=1e-9, max_iters=200, ridge=1e-8)
    assert trace.log_likelihoods[-1] >= trace.log_likelihoods[0]
    means = sorted(c.mean[0] for c in refined.components)
    assert abs(means[0] - 0.0) < 0.1
    assert abs(means[1] - 6.0) < 0.1


@pytest.mark.parametrize("mode", list(CovarianceMode))
def test_fit_monotone_ascent(mode):
    rng = np.random.default_rng(9)
    means = rng.standard_normal((3, 4)) * 4
    X = np.vstack([m + rng.standard_normal((40, 4)) for m in means])
    comps = []
    for m in means:
        m = m + rng.standard_normal(4)
        if mode is CovarianceMode.UNIT:
            comps.append(unit_sig(m))
        elif mode is CovarianceMode.DIAGONAL:
            comps.append(diag_sig(m, np.full(4, 2.0)))
        else:
            comps.append(make_signature(m, mode, np.eye(4) * 2.0))
    _, trace = fit(init_mixture(comps), X, tol=1e-10, max_iters=60, ridge=1e-8)
    diffs = np.diff(trace.log_likelihoods)
    assert (diffs >= -1e-9).all()


def test_fit_full_mode_covariances_stay_pd():
    rng = np.random.default_rng(10)
    X = rng.standard_normal((60, 3))
    ridge = 1e-5
    comps = [make_signature(rng.standard_normal(3), CovarianceMode.FULL, np.eye(3)) for _ in range(3)]
    model = init_mixture(comps)
    for _ in range(5):
        resp = e_step(model, X)
        model, _ = m_step(model, X, resp, ridge)
        for c in model.components:
            assert np.linalg.eigvalsh(c.covariance).min() >= ridge / 2


def test_permutation_equivariance_unit_mode():
    rng = np.random.default_rng(11)
    means = rng.standard_normal((3, 2)) * 5
    X = np.vstack([m + rng.standard_normal((30, 2)) for m in means])
    comps = [unit_sig(m) for m in means]
    perm = [2, 0, 1]
    a, _ = fit(init_mixture(comps), X, tol=1e-9, max_iters=30, ridge=1e-8)
    b, _ = fit(init_mixture([comps[i] for i in perm]), X, tol=1e-9, max_iters=30, ridge=1e-8)
    for j, i in enumerate(perm):
        np.testing.assert_allclose(b.components[j].mean, a.components[i].mean, atol=1e-9)
        assert b.weights[j] == pytest.approx(a.weights[i], abs=1e-9)


def test_component_collapse_is_reseeded():
    rng = np.random.default_rng(12)
    X = rng.standard_normal((50, 2))
    # second component is absurdly far away: zero responsibility everywhere
    model = init_mixture([unit_sig([0.0, 0.0]), unit_sig([1e8, 1e8])])
    resp = e_step(model, X)
    new, collapsed = m_step(model, X, resp, 1e-6)
    assert collapsed == 1
    assert np.linalg.norm(new.components[1].mean) < 100  # reseeded at a datapoint
    assert abs(new.weights.sum() - 1.0) <= 1e-12


def test_predict_single_component():
    model = init_mixture([unit_sig([0.0, 0.0])])
    np.testing.assert_array_equal(predict(model, np.zeros((4, 2))), 0)


def test_predict_equals_nearest_mean_unit_mode():
    rng = np.random.default_rng(13)
    means = rng.standard_normal((4, 3)) * 3
    model = init_mixture([unit_sig(m) for m in means])
    X = rng.standard_normal((50, 3)) * 3
    want = np.argmin(((X[:, None, :] - means[None]) ** 2).sum(axis=2), axis=1)
    np.testing.assert_array_equal(predict(model, X), want)


def test_predict_1d_fixture(two_component_1d):
    assert predict(two_component_1d, np.array([[0.2]]))[0] == 0
    assert predict(two_component_1d, np.array([[0.8]]))[0] == 1


def test_trace_csv_export(tmp_path):
    trace = gmm_em.FitTrace(log_likelihoods=[-10.0, -8.5, -8.4], converged=True, iterations=2)
    path = tmp_path / "trace.csv"
    gmm_em.trace_to_csv(trace, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "iteration,log_likelihood"
    assert len(lines) == 4


def test_model_export():
    model = init_mixture([unit_sig([0.0, 1.0], class_id=7)])
    doc = gmm_em.model_to_dict(model)
    assert doc["weights"] == [1.0]
    assert doc["components"][0]["class_id"] == 7
