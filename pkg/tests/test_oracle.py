import numpy as np
import pytest

from components.base_problem import estimate_sigma2
from components.enums import ProblemKind
from components.problems import ProblemSpec, make_problem
from components.quadratic import make_quadratic_problem
from components.ridge import feature_moments, make_ridge_problem, ridge_targets
from core.errors import ConfigError, PreconditionError
from core.streams import StreamBank, generator


def _sample_mean(pr, X, draws, seed=0):
    bank = StreamBank(seed, 0, pr.n)
    agents = np.arange(pr.n)
    samples = np.stack([pr.sample_gradients(agents, X, bank) for _ in range(draws)])
    return samples.mean(axis=0), samples.std(axis=0, ddof=1) / np.sqrt(draws)


def test_feature_moments():
    mean, second = feature_moments(3)
    assert np.allclose(mean, 0.35)
    assert second[0, 1] == pytest.approx(0.1225)
    assert second[2, 2] == pytest.approx(0.1225 + 1 / 1200)


def test_ridge_targets_span_zero_to_ten():
    t = ridge_targets(5, 3)
    assert np.allclose(t[:, 0], [0.0, 2.5, 5.0, 7.5, 10.0])
    assert np.all(t == t[:, :1])
    assert np.allclose(ridge_targets(1, 2), 5.0)


@pytest.mark.parametrize("factory", ["ridge", "quad"])
def test_sample_mean_matches_exact_gradient(factory):
    if factory == "ridge":
        pr = make_ridge_problem(4, 3, 0.1)
    else:
        pr = make_quadratic_problem(4, 3, mu=1.0, L=4.0, sigma=2.0, seed=1)
    X = generator(9).normal(size=(pr.n, pr.p))
    mean, se = _sample_mean(pr, X, 4000)
    assert np.all(np.abs(mean - pr.exact_gradients(X)) <= 5 * se + 1e-12)


@pytest.mark.parametrize("factory", ["ridge", "quad"])
def test_optimum_zeroes_mean_gradient(factory):
    if factory == "ridge":
        pr = make_ridge_problem(6, 5, 0.1)
    else:
        pr = make_quadratic_problem(6, 5, mu=0.5, L=3.0, sigma=1.0, seed=4)
    x_star = pr.optimum()
    assert np.linalg.norm(pr.exact_mean_gradient(np.tile(x_star, (pr.n, 1)))) < 1e-10


def test_ridge_optimum_is_shared_target_for_equal_targets():
    targets = np.full((3, 2), 4.0)
    pr = make_ridge_problem(3, 2, 0.1, targets=targets)
    _, second = feature_moments(2)
    expected = np.linalg.solve(second + 0.1 * np.eye(2), second @ np.full(2, 4.0))
    assert np.allclose(pr.optimum(), expected)


def test_ridge_convexity_constants():
    pr = make_ridge_problem(3, 4, 0.1)
    mu, L = pr.convexity_constants()
    eigs = np.linalg.eigvalsh(feature_moments(4)[1])
    assert mu == pytest.approx(2 * (eigs[0] + 0.1))
    assert L == pytest.approx(2 * (eigs[-1] + 0.1))
    assert pr.sigma2 is None


def test_quadratic_constants_are_attained():
    pr = make_quadratic_problem(5, 4, mu=0.5, L=7.0, sigma=1.0, seed=2)
    mu, L = pr.convexity_constants()
    assert mu == pytest.approx(0.5)
    assert L == pytest.approx(7.0)
    assert np.allclose(pr.curvatures, pr.curvatures.transpose(0, 2, 1))


def test_quadratic_with_equal_constants_is_scaled_identity():
    pr = make_quadratic_problem(3, 4, mu=2.0, L=2.0, sigma=0.5, seed=0)
    assert np.array_equal(pr.curvatures, np.tile(2.0 * np.eye(4), (3, 1, 1)))
    assert np.allclose(pr.optimum(), pr.offsets.mean(axis=0))


def test_quadratic_rejects_bad_constants():
    with pytest.raises(ValueError):
        make_quadratic_problem(3, 2, mu=2.0, L=1.0, sigma=1.0)


def test_noiseless_sample_is_exact(quiet_quad10):
    X = generator(1).normal(size=(10, 3))
    bank = StreamBank(0, 0, 10)
    assert np.array_equal(quiet_quad10.sample_gradients(np.arange(10), X, bank), quiet_quad10.exact_gradients(X))
    assert bank.draws(0) == 0


def test_sigma2_estimate_matches_known_variance(quad10):
    est = estimate_sigma2(quad10, quad10.optimum(), radius=1.0, samples=2000, seed=3)
    assert quad10.sigma2 == 1.0
    assert abs(est.value - 1.0) <= 5 * est.stderr
    assert est.per_agent.shape == (10,)
    assert est.value == est.per_agent.max()


def test_sigma2_estimate_for_ridge_is_positive_and_seeded(ridge10):
    a = estimate_sigma2(ridge10, ridge10.optimum(), radius=0.5, samples=1000, seed=8)
    b = estimate_sigma2(ridge10, ridge10.optimum(), radius=0.5, samples=1000, seed=8)
    assert a.value > 0 and a.value == b.value


def test_sigma2_estimate_needs_enough_samples(quad10):
    with pytest.raises(PreconditionError):
        estimate_sigma2(quad10, quad10.optimum(), radius=1.0, samples=999, seed=0)


def test_streams_do_not_depend_on_batching(quad10, ridge10):
    for pr in (quad10, ridge10):
        X = np.ones((pr.n, pr.p))
        batched = StreamBank(4, 1, pr.n)
        single = StreamBank(4, 1, pr.n)
        together = np.vstack([pr.sample_gradients(np.arange(pr.n), X, batched) for _ in range(3)])
        one_by_one = []
        for _ in range(3):
            for i in reversed(range(pr.n)):
                one_by_one.append((i, pr.sample_gradients(np.array([i]), X[[i]], single)[0]))
        rows = {}
        for i, value in one_by_one:
            rows.setdefault(i, []).append(value)
        expected = np.vstack([np.vstack([rows[i][d] for i in range(pr.n)]) for d in range(3)])
        assert np.array_equal(together, expected)


def test_streams_differ_across_replicas(quad10):
    X = np.zeros((10, 3))
    a = quad10.sample_gradients(np.arange(10), X, StreamBank(0, 0, 10))
    b = quad10.sample_gradients(np.arange(10), X, StreamBank(0, 1, 10))
    assert not np.array_equal(a, b)


def test_gradient_sample_locates_its_draw(quad10, ridge10):
    bank = StreamBank(11, 2, 10)
    x = np.zeros(3)
    first = quad10.sample_gradient(4, x, bank)
    second = quad10.sample_gradient(4, x, bank)
    assert (first.draw, second.draw) == (0, 1)
    assert (first.agent, first.seed, first.replica) == (4, 11, 2)

    bank = StreamBank(11, 2, 10)
    ridge10.sample_gradient(0, np.zeros(4), bank)
    # a ridge sample takes one uniform row and one normal
    assert ridge10.sample_gradient(0, np.zeros(4), bank).draw == 2


def test_problem_descriptor_round_trip():
    spec = ProblemSpec.parse("quad:p=5,mu=1.0,L=4.0,sigma=1.0,spread=1.0")
    assert spec.kind is ProblemKind.QUADRATIC
    assert ProblemSpec.parse(spec.render()) == spec
    ridge = ProblemSpec.parse("ridge:p=20,lambda=0.1")
    assert ridge.render() == "ridge:p=20,lambda=0.1"


@pytest.mark.parametrize("text", ["lasso", "ridge:lambda=0", "ridge:alpha=1", "quad:mu=2,L=1", "quad:p=x", "quad:sigma=-1"])
def test_problem_descriptor_errors(text):
    with pytest.raises(ConfigError):
        ProblemSpec.parse(text)


def test_make_problem_dispatches_on_kind():
    assert make_problem(ProblemSpec.parse("ridge:p=3"), 4).kind is ProblemKind.RIDGE
    quad = make_problem(ProblemSpec.parse("quad:p=2,sigma=0"), 4, seed=1)
    assert quad.kind is ProblemKind.QUADRATIC and quad.sigma2 == 0.0


def test_only_quadratic_layout_depends_on_seed():
    ridge = ProblemSpec.parse("ridge:p=3")
    np.testing.assert_array_equal(make_problem(ridge, 4, seed=1).optimum(), make_problem(ridge, 4, seed=2).optimum())
    quad = ProblemSpec.parse("quad:p=2,sigma=0")
    assert not np.array_equal(make_problem(quad, 4, seed=1).optimum(), make_problem(quad, 4, seed=2).optimum())
