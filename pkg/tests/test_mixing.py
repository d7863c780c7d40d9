import numpy as np
import pytest

from components.enums import MatrixKind, NormKind, WeightRule
from core.errors import MixingValidationError, PreconditionError
from core.graph import build_graph
from core.mixing import (
    MixingMatrix,
    build_network,
    gossip_expected_matrix,
    metropolis_weights,
    spectral_catalog,
    spectral_gap,
    uniform_weights,
    validate_mixing,
)
from tests.conftest import random_er_network


def test_lazy_ring_spectral_gap():
    w = metropolis_weights(build_graph("ring", 10))
    assert w.spectral_gap_norm == pytest.approx(0.5 + 0.5 * np.cos(2 * np.pi / 10), abs=1e-12)
    assert np.allclose(np.diag(w.entries), 0.5)


@pytest.mark.parametrize(
    "topology, n, lazy, expected, rho",
    [
        ("path", 2, True, [[0.5, 0.5], [0.5, 0.5]], 0.0),
        (
            "ring",
            4,
            True,
            [[0.5, 0.25, 0.0, 0.25], [0.25, 0.5, 0.25, 0.0], [0.0, 0.25, 0.5, 0.25], [0.25, 0.0, 0.25, 0.5]],
            0.5,
        ),
        ("complete", 3, False, [[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]], 0.5),
    ],
)
def test_metropolis_small_graphs(topology, n, lazy, expected, rho):
    w = metropolis_weights(build_graph(topology, n), lazy=lazy)
    np.testing.assert_allclose(w.entries, expected, atol=1e-15)
    assert w.spectral_gap_norm == pytest.approx(rho, abs=1e-12)


def test_non_lazy_two_path_is_rejected():
    with pytest.raises(MixingValidationError, match="lazy") as info:
        metropolis_weights(build_graph("path", 2), lazy=False)
    assert info.value.diagnostics.spectral_gap_norm == pytest.approx(1.0)
    assert not info.value.diagnostics.passed


def test_lazy_metropolis_diagonal_at_least_half():
    g = build_graph("er:0.3:4", 15)
    diag = validate_mixing(metropolis_weights(g), g)
    assert diag.passed
    assert np.all(np.diag(metropolis_weights(g).entries) >= 0.5)


def test_weights_are_symmetric_doubly_stochastic():
    w = metropolis_weights(build_graph("lattice:3x4", 12), lazy=False).entries
    assert np.allclose(w, w.T)
    assert np.allclose(w.sum(axis=0), 1.0)
    assert np.allclose(w.sum(axis=1), 1.0)
    assert w.min() >= 0.0


def test_non_lazy_even_ring_is_rejected():
    with pytest.raises(MixingValidationError, match="lazy") as info:
        metropolis_weights(build_graph("ring", 4), lazy=False)
    assert not info.value.diagnostics.gap_ok


def test_non_lazy_odd_ring_is_accepted():
    assert metropolis_weights(build_graph("ring", 5), lazy=False).spectral_gap_norm < 1.0


def test_uniform_weights_on_complete_graph():
    w = uniform_weights(build_graph("complete", 6))
    assert w.spectral_gap_norm == pytest.approx(0.0, abs=1e-12)


def test_uniform_weights_need_complete_graph():
    with pytest.raises(PreconditionError):
        uniform_weights(build_graph("ring", 6))


def test_single_agent():
    w = metropolis_weights(build_graph("ring", 1))
    assert w.entries.tolist() == [[1.0]]
    assert w.spectral_gap_norm == pytest.approx(0.0)


def test_validation_reports_pattern_violations():
    g = build_graph("path", 4)
    m = MixingMatrix(np.full((4, 4), 0.25), MatrixKind.CONSENSUS)
    diag = validate_mixing(m, g)
    assert not diag.passed
    assert set(diag.pattern_violations) == {(0, 2), (0, 3), (1, 3)}


def test_validation_reports_negative_entries():
    g = build_graph("complete", 2)
    m = MixingMatrix(np.array([[1.5, -0.5], [-0.5, 1.5]]), MatrixKind.CONSENSUS)
    diag = validate_mixing(m, g)
    assert diag.min_entry < 0 and not diag.passed


def test_norm_minus_identity():
    w = metropolis_weights(build_graph("ring", 10))
    d = w.entries - np.eye(10)
    assert w.norm_minus_identity() == pytest.approx(np.linalg.norm(d, "fro"))
    assert w.norm_minus_identity(NormKind.SPECTRAL) == pytest.approx(np.linalg.norm(d, 2))
    assert w.norm_minus_identity(NormKind.SPECTRAL) <= w.norm_minus_identity(NormKind.FROBENIUS)


def test_spectral_gap_of_non_symmetric_matrix():
    m = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    assert spectral_gap(m) == pytest.approx(np.linalg.norm(m - 1.0 / 3.0, 2))


def test_cumulative_rows_end_at_one():
    cum = metropolis_weights(build_graph("er:0.5:2", 9)).cumulative_rows
    assert np.all(cum[:, -1] == 1.0)
    assert np.all(np.diff(cum, axis=1) >= 0)


def test_expected_gossip_matrix_formula(ring10):
    pi = ring10.gossip.entries
    n = ring10.n
    expected = (1 - 1 / n) * np.eye(n) + (pi + pi.T) / (2 * n)
    assert np.allclose(ring10.expected_gossip.entries, expected)
    assert ring10.expected_gossip.kind is MatrixKind.EXPECTED_GOSSIP


def test_expected_gossip_rejects_non_stochastic():
    bad = MixingMatrix(np.array([[0.6, 0.6], [0.4, 0.4]]), MatrixKind.GOSSIP)
    with pytest.raises(PreconditionError):
        gossip_expected_matrix(bad)


def test_expected_gossip_spectral_range_on_random_graphs():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        net = random_er_network(rng, n_range=(2, 25))
        n = net.n
        w_bar = net.expected_gossip
        rho = w_bar.spectral_gap_norm
        assert 1.0 - 2.0 / n - 1e-12 <= rho < 1.0
        sym = (net.gossip.entries + net.gossip.entries.T) / 2
        lam2 = np.sort(np.linalg.eigvalsh(sym))[-2]
        assert rho == pytest.approx(1 - 1 / n + lam2 / n, abs=1e-10)
        assert validate_mixing(w_bar, net.graph).passed


def test_expected_gossip_complete_uniform_is_tight():
    net = build_network(build_graph("complete", 8), WeightRule.UNIFORM)
    assert net.expected_gossip.spectral_gap_norm == pytest.approx(1 - 1 / 8, abs=1e-12)


def test_network_uses_same_rule_for_both_matrices(ring10):
    assert np.array_equal(ring10.weights.entries, ring10.gossip.entries)
    assert ring10.weights.kind is MatrixKind.CONSENSUS
    assert ring10.gossip.kind is MatrixKind.GOSSIP


def test_spectral_catalog_orders_topologies():
    gaps = spectral_catalog(16, seed=3)
    assert set(gaps) == {"path", "ring", "lattice", "erdos_renyi", "complete"}
    assert all(0.0 < gap <= 1.0 for gap in gaps.values())
    assert gaps["path"] < gaps["ring"] < gaps["lattice"] < gaps["complete"]
