import itertools

import numpy as np
import pytest

from edms.bn import Dag, d_separated, d_separated_paths


def collider_square():
    # x1 -> x3 <- x2, x3 -> x4 <- x2
    return Dag(["x1", "x2", "x3", "x4"], [("x1", "x3"), ("x2", "x3"), ("x3", "x4"), ("x2", "x4")])


def random_dag(rng, n_nodes, p_edge=0.3):
    order = rng.permutation(n_nodes)
    edges = []
    for i in range(n_nodes):
        for j in range(i + 1, n_nodes):
            if rng.random() < p_edge:
                edges.append((int(order[i]), int(order[j])))
    return Dag(list(range(n_nodes)), edges)


def random_disjoint_sets(rng, n_nodes):
    nodes = list(rng.permutation(n_nodes))
    nx = int(rng.integers(1, 3))
    ny = int(rng.integers(1, 3))
    nz = int(rng.integers(0, 3))
    if nx + ny + nz > n_nodes:
        nz = max(0, n_nodes - nx - ny)
    if nx + ny > n_nodes:
        return None
    X = set(nodes[:nx])
    Y = set(nodes[nx : nx + ny])
    Z = set(nodes[nx + ny : nx + ny + nz])
    return X, Y, Z


class TestBasics:
    def test_cycle_rejected(self):
        with pytest.raises(ValueError):
            Dag([1, 2, 3], [(1, 2), (2, 3), (3, 1)])

    def test_overlapping_sets_rejected(self):
        g = collider_square()
        with pytest.raises(ValueError):
            d_separated(g, {"x1"}, {"x1"}, set())

    def test_disconnected_nodes_always_separated(self):
        g = Dag([1, 2, 3], [(1, 3)])
        for method in ("pathwise", "moralize"):
            assert d_separated(g, {1}, {2}, set(), method=method)
            assert d_separated(g, {1}, {2}, {3}, method=method)

    def test_marginal_independence_through_colliders(self):
        g = collider_square()
        for method in ("pathwise", "moralize"):
            assert d_separated(g, {"x1"}, {"x2"}, set(), method=method)

    def test_conditioning_on_collider_couples(self):
        g = collider_square()
        for method in ("pathwise", "moralize"):
            assert not d_separated(g, {"x1"}, {"x2"}, {"x4"}, method=method)
            assert not d_separated(g, {"x1"}, {"x2"}, {"x3"}, method=method)


def chain_graph_markov_obs(n):
    """Regime chain with first-order Markov observations:
    s_{t-1} -> s_t, s_t -> v_t, v_{t-1} -> v_t."""
    nodes = [f"s{t}" for t in range(1, n + 1)] + [f"v{t}" for t in range(1, n + 1)]
    edges = []
    for t in range(1, n + 1):
        edges.append((f"s{t}", f"v{t}"))
        if t > 1:
            edges.append((f"s{t-1}", f"s{t}"))
            edges.append((f"v{t-1}", f"v{t}"))
    return Dag(nodes, edges)


def duration_slgssm_graph(n):
    """Switching state-space chain with decreasing counts:
    c and s chains, c_{t-1} -> s_t, s_t -> c_t, s_t -> h_t, h chain,
    h_t -> v_t, s_t -> v_t."""
    nodes = []
    for t in range(1, n + 1):
        nodes += [f"c{t}", f"s{t}", f"h{t}", f"v{t}"]
    edges = []
    for t in range(1, n + 1):
        edges += [(f"s{t}", f"c{t}"), (f"s{t}", f"h{t}"), (f"h{t}", f"v{t}"), (f"s{t}", f"v{t}")]
        if t > 1:
            edges += [
                (f"c{t-1}", f"c{t}"),
                (f"s{t-1}", f"s{t}"),
                (f"c{t-1}", f"s{t}"),
                (f"h{t-1}", f"h{t}"),
            ]
    return Dag(nodes, edges)


class TestRecursionAssumptions:
    """The independences the filtering derivations cancel on, and the
    dependences that force approximations in the switching state-space
    case, verified graphically."""

    def test_observation_window_independence(self):
        g = chain_graph_markov_obs(5)
        t = 5
        X = {f"v{t}"}
        Y = {f"v{u}" for u in range(1, t - 1)}
        Z = {f"s{t}", f"v{t-1}"}
        for method in ("pathwise", "moralize"):
            assert d_separated(g, X, Y, Z, method=method)

    def test_regime_independence_of_past_observations(self):
        g = chain_graph_markov_obs(5)
        t = 4
        X = {f"s{t}"}
        Y = {f"v{u}" for u in range(1, t)}
        Z = {f"s{t-1}"}
        for method in ("pathwise", "moralize"):
            assert d_separated(g, X, Y, Z, method=method)

    def test_count_leaks_into_observation_through_hidden_state(self):
        # v_t depends on c_{t-1} given {s_{t-1}, s_t, v_{1:t-1}}: the path
        # through c_{t-2}, s_{t-2} and the h chain stays open
        g = duration_slgssm_graph(4)
        t = 4
        X = {f"v{t}"}
        Y = {f"c{t-1}"}
        Z = {f"s{t-1}", f"s{t}"} | {f"v{u}" for u in range(1, t)}
        for method in ("pathwise", "moralize"):
            assert not d_separated(g, X, Y, Z, method=method)

    def test_hidden_state_depends_on_next_count(self):
        # h_t and c_{t+1} stay coupled given {s_t, c_t, s_{t+1}, v_{1:T}}
        g = duration_slgssm_graph(4)
        t = 2
        X = {f"h{t}"}
        Y = {f"c{t+1}"}
        Z = {f"s{t}", f"c{t}", f"s{t+1}"} | {f"v{u}" for u in range(1, 5)}
        for method in ("pathwise", "moralize"):
            assert not d_separated(g, X, Y, Z, method=method)

    def test_memoryless_chain_blocks_through_regime(self):
        # with no observation-to-observation links, the regime at t - 1
        # screens v_t off from the whole past
        nodes = [f"s{t}" for t in range(1, 5)] + [f"v{t}" for t in range(1, 5)]
        edges = [(f"s{t}", f"v{t}") for t in range(1, 5)]
        edges += [(f"s{t-1}", f"s{t}") for t in range(2, 5)]
        g = Dag(nodes, edges)
        for method in ("pathwise", "moralize"):
            assert d_separated(g, {"v4"}, {"s1", "v1", "v2"}, {"s3"}, method=method)


class TestMethodAgreement:
    def test_methods_agree_on_random_queries(self):
        rng = np.random.default_rng(42)
        for _ in range(300):
            n = int(rng.integers(3, 11))
            g = random_dag(rng, n, p_edge=float(rng.uniform(0.1, 0.5)))
            sets = random_disjoint_sets(rng, n)
            if sets is None:
                continue
            X, Y, Z = sets
            a = d_separated(g, X, Y, Z, method="pathwise")
            b = d_separated(g, X, Y, Z, method="moralize")
            assert a == b

    def test_reachability_matches_path_enumeration(self):
        rng = np.random.default_rng(7)
        for _ in range(150):
            n = int(rng.integers(3, 9))
            g = random_dag(rng, n, p_edge=0.35)
            sets = random_disjoint_sets(rng, n)
            if sets is None:
                continue
            X, Y, Z = sets
            assert d_separated(g, X, Y, Z, method="pathwise") == d_separated_paths(g, X, Y, Z)
