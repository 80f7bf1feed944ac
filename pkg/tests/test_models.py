import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from netgrow import graph as gc
from netgrow import models
from netgrow.models import ConfigurationError, registry, simulate
from netgrow.rng import stream

TABLE = {
    "redirection": (1, 1, ((2, 1),)),
    "duplication_mutation": (2, 1, ((2, 2), (2, 2))),
    "copying": (1, 1, ((2, 2),)),
    "random_connection": (1, 0, ((1, 1),)),
    "connected_small_world": (1, 0, ((1, 1),)),
    "growing_tree": (1, None, ((1, 1),)),
    "duplication_complementation": (2, None, ((2, 2), (2, 2))),
    "jackson_rogers": (2, None, ((1, 1), (1, 1))),
    "watts_strogatz": (1, None, ((1, 1),)),
}


@pytest.mark.parametrize("name", sorted(TABLE))
def test_registry_matches_table(name):
    spec = registry(name)
    p, k, prior = TABLE[name]
    assert (spec.p, spec.k, spec.prior) == (p, k, prior)
    assert spec.receptive_field == (None if k is None else 2 * k + 1)


def test_unknown_model_lists_valid_names():
    with pytest.raises(ConfigurationError, match="redirection.*watts_strogatz"):
        registry("nosuch")


def test_constants():
    assert registry("connected_small_world").constants["z"] == 4
    assert registry("watts_strogatz").constants["z"] == 4
    assert registry("jackson_rogers").constants == {"m_rnd": 10, "m_nbr": 10}


class TestPriors:
    def test_support(self):
        spec = registry("copying")
        assert models.prior_log_density(spec, [0.0]) == -math.inf
        assert models.prior_log_density(spec, [1.0]) == -math.inf

    def test_known_densities(self):
        assert models.prior_log_density(registry("random_connection"), [0.3]) == pytest.approx(0.0, abs=1e-14)
        assert models.prior_log_density(registry("redirection"), [0.5]) == pytest.approx(0.0, abs=1e-14)

    def test_arity_checked(self):
        with pytest.raises(ConfigurationError):
            models.prior_log_density(registry("copying"), [0.1, 0.2])

    @pytest.mark.parametrize("name", sorted(TABLE))
    def test_density_integrates_to_one(self, name):
        spec = registry(name)
        density = lambda *t: math.exp(models.prior_log_density(spec, list(t)))  # noqa: E731
        if spec.p == 1:
            total, _ = integrate.quad(density, 0, 1)
        else:
            total, _ = integrate.dblquad(density, 0, 1, 0, 1)
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_entropy_values(self):
        assert models.prior_entropy(registry("redirection")) == pytest.approx(0.5 - math.log(2), abs=1e-12)
        assert models.prior_entropy(registry("random_connection")) == pytest.approx(0.0, abs=1e-12)
        h22, _ = integrate.quad(lambda t: -stats.beta.pdf(t, 2, 2) * stats.beta.logpdf(t, 2, 2), 0, 1)
        assert models.prior_entropy(registry("duplication_mutation")) == pytest.approx(2 * h22, abs=1e-6)

    def test_samples_follow_prior(self):
        spec = registry("redirection")
        draws = np.array([models.sample_prior(spec, stream(5, i))[0] for i in range(2000)])
        assert stats.kstest(draws, stats.beta(2, 1).cdf).pvalue > 0.001
        assert np.all((draws > 0) & (draws < 1))


@pytest.mark.parametrize("name", sorted(TABLE))
class TestEveryModel:
    def test_exact_size_and_replay(self, name):
        spec = registry(name)
        theta = models.sample_prior(spec, stream(1, name))
        g, hist = simulate(spec, theta, 60, stream(2, name))
        assert g.n == 60
        assert hist.replay() == g

    def test_deterministic(self, name):
        spec = registry(name)
        a = simulate(spec, [0.4] * spec.p, 50, stream(3))[0]
        b = simulate(spec, [0.4] * spec.p, 50, stream(3))[0]
        assert gc.serialize(a) == gc.serialize(b)

    def test_monotonic_edge_sets(self, name):
        spec = registry(name)
        if not spec.monotonic:
            pytest.skip("edges are removed by design")
        _, hist = simulate(spec, [0.6] * spec.p, 40, stream(4))
        prev = set(hist.initial.edges)
        for t in range(1, len(hist) + 1, 5):
            cur = set(hist.replay(t).edges)
            assert prev <= cur
            prev = cur

    def test_too_small(self, name):
        spec = registry(name)
        with pytest.raises(ConfigurationError):
            simulate(spec, [0.5] * spec.p, spec.min_nodes - 1, stream(0))

    def test_parameter_validation(self, name):
        spec = registry(name)
        with pytest.raises(ConfigurationError):
            simulate(spec, [0.5] * (spec.p + 1), 30, stream(0))
        with pytest.raises(ConfigurationError):
            simulate(spec, [1.5] * spec.p, 30, stream(0))


class TestModelContracts:
    def test_redirection_tree(self):
        for s in range(100):
            g, _ = simulate("redirection", [0.7], 200, stream(s))
            assert g.num_edges == 199 and g.is_connected()

    def test_small_world_zero_theta_is_ring(self):
        g, _ = simulate("connected_small_world", [0.0], 50, stream(0))
        assert g.num_edges == 100 and set(g.degrees().tolist()) == {4}

    def test_watts_strogatz_zero_theta_is_ring(self):
        g, _ = simulate("watts_strogatz", [0.0], 50, stream(0))
        ring = gc.Graph.from_edges(50, [(i, (i + d) % 50) for i in range(50) for d in (1, 2)])
        assert g == ring

    def test_watts_strogatz_keeps_edge_count(self):
        g, _ = simulate("watts_strogatz", [0.8], 50, stream(1))
        assert g.num_edges == 100

    def test_jackson_rogers_initial_complete_graph(self):
        g, _ = simulate("jackson_rogers", [0.3, 0.7], 21, stream(0))
        assert g.num_edges == 21 * 20 // 2

    def test_random_connection_mean(self):
        edges = [simulate("random_connection", [0.5], 1000, stream(9, s))[0].num_edges for s in range(200)]
        sigma = math.sqrt(999 * 0.25 / 200)
        assert abs(np.mean(edges) - 499.5) < 4 * sigma

    def test_copying_connected_with_positive_degrees(self):
        g, hist = simulate("copying", [0.3], 80, stream(2))
        assert g.is_connected()
        assert all(step.added for step in hist.steps)

    def test_growing_tree_is_tree(self):
        for s in range(30):
            g, _ = simulate("growing_tree", [float(stream(s).uniform())], 100, stream(s, 1))
            assert g.num_edges == 99 and g.is_connected()

    def test_duplication_models_keep_exact_size(self):
        for name in ("duplication_mutation", "duplication_complementation"):
            for theta in ([0.05, 0.05], [0.9, 0.1]):
                g, _ = simulate(name, theta, 40, stream(3))
                assert g.n == 40

    def test_small_world_shortcuts_match_history(self):
        g, hist = simulate("connected_small_world", [0.3], 50, stream(5))
        assert len(hist.steps) == g.num_edges - 100


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(sorted(TABLE)), st.integers(0, 2**32 - 1))
def test_history_replays_for_any_seed(name, seed):
    spec = registry(name)
    theta = models.sample_prior(spec, stream(seed))
    g, hist = simulate(spec, theta, max(spec.min_nodes, 25), stream(seed, 1))
    assert hist.replay() == g
