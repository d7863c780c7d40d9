import math

import numpy as np
import pytest

from components.enums import NormKind
from core.errors import PreconditionError
from core.streams import generator
from core.theory import (
    TheoryInputs,
    check_m_condition,
    cost_model,
    dsgt_alpha_max,
    dsgt_beta,
    dsgt_simple_alpha,
    dsgt_limit_bounds,
    dsgt_matrix_A,
    dsgt_noise_vector,
    dsgt_rate_bound,
    dsgt_report,
    gsgt_alpha_max,
    gsgt_limit_bounds,
    gsgt_matrix_Ag,
    gsgt_rate_bound,
    gsgt_report,
    radius_below,
    m_lower_bound,
    size_independent_stepsize,
    smallest_feasible_m,
    spectral_radius_3x3,
    diminishing_envelope,
)
from tests.conftest import random_er_network

RING = TheoryInputs(n=10, mu=1.0, L=4.0, sigma2=1.0, rho=0.9045084971874737, w_minus_i_norm=1.0)


def test_inputs_are_validated():
    with pytest.raises(PreconditionError):
        TheoryInputs(n=10, mu=1.0, L=4.0, sigma2=1.0, rho=1.0)
    with pytest.raises(PreconditionError):
        TheoryInputs(n=10, mu=1.0, L=4.0, sigma2=1.0, rho=0.5, gamma=1.0)
    with pytest.raises(PreconditionError):
        TheoryInputs(n=10, mu=2.0, L=1.0, sigma2=1.0, rho=0.5)
    with pytest.raises(PreconditionError):
        TheoryInputs(n=10, mu=1.0, L=4.0, sigma2=-1.0, rho=0.5)
    with pytest.raises(PreconditionError):
        TheoryInputs(n=0, mu=1.0, L=4.0, sigma2=1.0, rho=0.5)


def test_rho_zero_takes_limits():
    inp = TheoryInputs(n=5, mu=1.0, L=2.0, sigma2=1.0, rho=0.0, w_minus_i_norm=2.0, gamma=4.0)
    assert dsgt_alpha_max(inp) == pytest.approx(1.0 / (2.0 * 2.0 * 2.0))
    assert dsgt_beta(inp, 0.1) == math.inf
    A = dsgt_matrix_A(inp, 0.1).matrix
    assert A[1, 2] == 0.0
    assert A[2, 1] == pytest.approx(2.0 * 4.0 * 4.0 + 3.0 * 0.1 * 8.0)
    limits = dsgt_limit_bounds(inp, 0.1)
    assert limits.opt_network == 0.0 and limits.consensus == 0.0
    assert limits.opt_noise == pytest.approx(5.0 / 4.0 * 0.1 / 5.0)


def test_dsgt_matrix_entries():
    alpha = 0.01
    A = dsgt_matrix_A(RING, alpha).matrix
    rho2 = RING.rho**2
    assert A[0, 0] == pytest.approx(1 - alpha)
    assert A[0, 1] == pytest.approx(alpha * 16 / 10 * (1 + alpha))
    assert A[0, 2] == 0.0 and A[1, 0] == 0.0
    assert A[1, 1] == A[2, 2] == pytest.approx((1 + rho2) / 2)
    assert A[2, 0] == pytest.approx(2 * alpha * 10 * 64)
    assert np.all(A >= 0)


def test_feasible_stepsize_contracts():
    report = dsgt_report(RING, 0.5 * dsgt_alpha_max(RING))
    assert report.feasible
    assert report.spectral_radius < 1
    assert report.exact_limits is not None
    A = report.matrix
    fixed = np.array(report.exact_limits)
    np.testing.assert_allclose(A @ fixed + dsgt_noise_vector(RING, report.alpha), fixed, rtol=1e-10)
    assert np.all(fixed >= 0)


def test_infeasible_stepsize_is_flagged():
    report = dsgt_report(RING, 10 * dsgt_alpha_max(RING))
    assert not report.flags["alpha_within_bound"]
    assert not report.feasible


def test_noiseless_limits_vanish():
    inp = TheoryInputs(n=10, mu=1.0, L=4.0, sigma2=0.0, rho=0.6, w_minus_i_norm=1.5)
    alpha = 0.5 * dsgt_alpha_max(inp)
    assert dsgt_limit_bounds(inp, alpha).opt == 0.0
    assert gsgt_limit_bounds(inp, 0.5 * gsgt_alpha_max(inp)).opt == 0.0


def test_limit_grows_with_rho():
    alpha = 1e-4
    values = [
        dsgt_limit_bounds(TheoryInputs(n=10, mu=1.0, L=4.0, sigma2=1.0, rho=rho, w_minus_i_norm=1.0), alpha).opt
        for rho in (0.1, 0.5, 0.9, 0.99)
    ]
    assert values == sorted(values)
    assert values[0] < values[-1]


def test_size_independent_stepsize():
    assert size_independent_stepsize(RING) == pytest.approx(1 / 16 * (1 - RING.rho) ** 3 / 10)


def test_determinant_radius_test_agrees_with_eigensolver():
    rng = generator(42)
    checked = 0
    for _ in range(1000):
        M = rng.uniform(0.0, 1.0, (3, 3)) * (rng.random((3, 3)) < 0.7)
        lam = float(np.max(np.diag(M)) + rng.uniform(0.01, 2.0))
        radius = spectral_radius_3x3(M)
        if abs(radius - lam) < 1e-9:
            continue
        assert radius_below(M, lam) == (radius < lam)
        checked += 1
    assert checked > 900


def test_determinant_radius_test_preconditions():
    with pytest.raises(PreconditionError):
        radius_below(np.array([[0.1, -0.1, 0], [0, 0.1, 0], [0, 0, 0.1]]), 1.0)
    with pytest.raises(PreconditionError):
        radius_below(np.eye(3), 1.0)
    with pytest.raises(PreconditionError):
        radius_below(np.zeros((2, 2)), 1.0)


def test_dsgt_rate_bound_on_random_networks():
    rng = generator(7)
    for _ in range(200):
        net = random_er_network(rng)
        mu = float(rng.uniform(0.1, 2.0))
        inp = TheoryInputs(
            n=net.n,
            mu=mu,
            L=mu * float(rng.uniform(1.0, 10.0)),
            sigma2=1.0,
            rho=net.weights.spectral_gap_norm,
            w_minus_i_norm=net.weights.norm_minus_identity(NormKind.FROBENIUS),
            gamma=float(rng.uniform(1.1, 5.0)),
        )
        alpha = float(rng.uniform(0.01, 1.0)) * min(dsgt_alpha_max(inp), dsgt_simple_alpha(inp))
        contraction = dsgt_matrix_A(inp, alpha)
        radius = spectral_radius_3x3(contraction.matrix)
        assert contraction.betas_positive
        assert contraction.matrix[0, 0] - 1e-15 <= radius < 1.0
        assert radius <= dsgt_rate_bound(inp, alpha) + 1e-12


def test_gsgt_rate_bound_on_random_networks():
    rng = generator(8)
    for _ in range(200):
        net = random_er_network(rng)
        mu = float(rng.uniform(0.1, 2.0))
        inp = TheoryInputs(
            n=net.n,
            mu=mu,
            L=mu * float(rng.uniform(1.0, 10.0)),
            sigma2=1.0,
            rho=net.expected_gossip.spectral_gap_norm,
            gamma=float(rng.uniform(1.6, 5.0)),
        )
        alpha = float(rng.uniform(0.01, 1.0)) * gsgt_alpha_max(inp)
        radius = spectral_radius_3x3(gsgt_matrix_Ag(inp, alpha).matrix)
        assert radius < 1.0
        assert radius <= gsgt_rate_bound(inp, alpha) + 1e-12


def test_gsgt_rate_bound_needs_gamma_above_three_halves():
    inp = TheoryInputs(n=10, mu=1.0, L=4.0, sigma2=1.0, rho=0.95, gamma=1.5)
    with pytest.raises(PreconditionError):
        gsgt_rate_bound(inp, 1e-3)
    report = gsgt_report(inp, 0.5 * gsgt_alpha_max(inp))
    assert math.isnan(report.rate_bound)
    assert report.notes


def test_gsgt_report_is_feasible_below_alpha_max():
    inp = TheoryInputs(n=10, mu=1.0, L=4.0, sigma2=1.0, rho=0.95)
    report = gsgt_report(inp, 0.5 * gsgt_alpha_max(inp))
    assert report.feasible
    assert report.algorithm == "gsgt"
    assert report.limits.M_const > 0


def test_smallest_feasible_m_is_tight():
    inp = TheoryInputs(n=10, mu=1.0, L=1.0, sigma2=1.0, rho=RING.rho, w_minus_i_norm=1.0)
    theta = 2.0
    m = smallest_feasible_m(theta, inp)
    assert check_m_condition(theta, m, inp).passed
    assert m > m_lower_bound(theta, inp)
    if m > 1:
        assert not check_m_condition(theta, m - 1, inp).passed


def test_m_condition_needs_theta_mu_above_one():
    with pytest.raises(PreconditionError):
        check_m_condition(1.0, 100.0, RING)
    with pytest.raises(PreconditionError):
        diminishing_envelope(0.5, 100.0, RING, 0)


def test_small_m_fails_with_reason():
    result = check_m_condition(2.0, 1.0, RING)
    assert not result.passed
    assert result.reason


def test_envelope_coefficient():
    env = diminishing_envelope(2.0, 40.0, RING, 60)
    assert env.coefficient == pytest.approx(2 * 4 * 1.0 / (10 * 1.0))
    assert env.leading == pytest.approx(env.coefficient / 100)
    assert len(env.unconstrained_terms) == 2
    assert "(m+k)^(theta*mu)" in env.unconstrained_terms[0]


def test_cost_model_ratios():
    inp = TheoryInputs(n=25, mu=1.0, L=4.0, sigma2=1.0, rho=0.96)
    costs = cost_model(1e-3, inp, num_edges=300)
    assert costs.N_d == pytest.approx(25 * costs.K_d)
    assert costs.K_g == pytest.approx(costs.K_d / 0.04)
    assert costs.N_g == costs.N_g_comm == pytest.approx(2 * costs.K_g)
    assert costs.comm_ratio == pytest.approx(300 * 0.04)
    assert costs.grad_ratio == pytest.approx(25 * 0.04 / 2)


def test_cost_model_grows_faster_than_inverse_epsilon():
    inp = TheoryInputs(n=10, mu=1.0, L=4.0, sigma2=1.0, rho=0.5)
    assert cost_model(5e-4, inp, 20).K_d > 2 * cost_model(1e-3, inp, 20).K_d
    for eps in (0.0, 1.0, -0.1):
        with pytest.raises(PreconditionError):
            cost_model(eps, inp, 20)


def test_flat_report_keys():
    report = dsgt_report(RING, 1e-4)
    report.costs = cost_model(1e-3, RING, 10)
    report.extra["norm"] = "frobenius"
    flat = report.flat()
    for key in ("alpha_max", "spectral_radius", "rate_bound", "limit_opt", "limit_consensus", "matrix_11", "matrix_33", "flag_contraction", "cost_K_d", "cost_comm_ratio", "exact_limit_opt"):
        assert key in flat
    assert flat["norm"] == "frobenius"
    assert flat["matrix_21"] == 0.0
