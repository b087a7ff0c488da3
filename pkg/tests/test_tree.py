import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from martkit import generators as G
from martkit.tree import (
    INFINITY,
    FiltrationTree,
    Martingale,
    StoppingRule,
    TreeError,
    TreeProcess,
    conditional_expectation,
    conditional_expectation_at,
    hitting_time,
    optional_sampling_check,
    sampled_value,
    stop_process,
    tree_from_dict,
    tree_to_dict,
)


@pytest.fixture
def depth2():
    return FiltrationTree.dyadic(2)


def test_conditional_expectation_binary(depth2):
    f = np.array([1.0, 3.0, 5.0, 7.0])
    assert np.allclose(conditional_expectation(depth2, f, 1), [2.0, 6.0])
    assert np.allclose(conditional_expectation(depth2, f, 0), [4.0])


def test_conditional_expectation_level_range(depth2):
    with pytest.raises(TreeError):
        conditional_expectation(depth2, np.zeros(4), 3)


def test_conditional_expectation_properties():
    tree = G.gen_increment(5, seed=12).tree
    rng = np.random.default_rng(0)
    f = rng.normal(size=tree.n_leaves) ** 2  # nonnegative
    g_level = 2
    ones = conditional_expectation(tree, np.ones(tree.n_leaves), g_level)
    assert np.allclose(ones, 1.0)  # E(1 | F') = 1
    ce = conditional_expectation(tree, f, g_level)
    assert np.all(ce >= 0)  # positivity
    assert np.isclose(tree.node_prob[g_level] @ ce, tree.expectation(f))  # mean preserved
    # L^p contraction at p = 2 and the product rule for F'-measurable g
    assert tree.node_prob[g_level] @ ce**2 <= tree.expectation(f**2) + 1e-12
    g_vals = rng.normal(size=tree.level_sizes[g_level])
    g_leaf = g_vals[tree.ancestors[g_level]]
    prod = conditional_expectation(tree, f * g_leaf, g_level)
    assert np.allclose(prod, ce * g_vals, atol=1e-12)


def test_tower_property():
    tree = G.gen_increment(6, seed=3).tree
    f = np.random.default_rng(1).normal(size=tree.n_leaves)
    for m in range(3):
        for n in range(m, 5):
            inner = tree.atom_average_leaves(n, f)
            two_step = conditional_expectation(tree, inner, m)
            one_step = conditional_expectation(tree, f, m)
            assert np.abs(two_step - one_step).max() <= 1e-12


def test_increment_orthogonality():
    mart = G.gen_increment(6, seed=44)
    tree = mart.tree
    pm = mart.paths()
    rng = np.random.default_rng(5)
    for n in range(1, tree.depth + 1):
        g = rng.normal(size=tree.level_sizes[n - 1])[tree.ancestors[n - 1]]
        assert abs(tree.expectation(g * (pm[n] - pm[n - 1]))) <= 1e-10


def test_martingale_invariant_rejects_broken(depth2):
    values = [np.array([0.0]), np.array([1.0, -1.0]), np.array([5.0, 0.0, 0.0, 0.0])]
    with pytest.raises(TreeError):
        Martingale(depth2, values)


def test_null_atom_rejected():
    with pytest.raises(TreeError):
        FiltrationTree.dyadic(1).__class__(
            [np.empty(0, dtype=np.int64), np.array([0, 0])], np.array([1.0, 0.0])
        )


def test_prob_sum_checked():
    with pytest.raises(TreeError):
        FiltrationTree([np.empty(0, dtype=np.int64), np.array([0, 0])], np.array([0.6, 0.5]))


# -- stopping rules ------------------------------------------------------------


def test_hitting_time_deterministic_path():
    tree = FiltrationTree.dyadic(2)
    proc = TreeProcess(tree, [np.array([0.0]), np.array([1.0, 1.0]), np.array([2.0] * 4)])
    tau = hitting_time(proc, lambda v: v >= 2)
    assert np.all(tau.times == 2)
    never = hitting_time(proc, lambda v: v > 99)
    assert np.all(never.times == INFINITY)


def test_hitting_time_walk(depth2):
    f = Martingale(depth2, [np.zeros(1), np.array([1.0, -1.0]), np.array([2.0, 0.0, 0.0, -2.0])])
    tau = hitting_time(f, lambda v: v >= 1)
    # up-branch stops at 1, down-branch never (hand enumeration of 4 leaves)
    assert tau.times.tolist() == [1, 1, INFINITY, INFINITY]


def test_stopped_process(depth2):
    f = Martingale(depth2, [np.zeros(1), np.array([1.0, -1.0]), np.array([2.0, 0.0, 0.0, -2.0])])
    assert np.allclose(stop_process(f, StoppingRule.never(depth2)).paths(), f.paths())
    frozen = stop_process(f, StoppingRule.constant(depth2, 0))
    assert np.allclose(frozen.paths(), 0.0)
    tau = hitting_time(f, lambda v: v >= 1)
    assert stop_process(f, tau).leaf_values().tolist() == [1.0, 1.0, 0.0, -2.0]


def test_stopping_lattice_ops():
    mart = G.gen_increment(6, seed=9)
    tree = mart.tree
    s = hitting_time(mart, lambda v: v > 0.4)
    t = hitting_time(mart, lambda v: v < -0.2)
    lo = s.minimum(t)
    hi = s.maximum(t)
    assert np.all(lo.times == np.minimum(s.times, t.times))
    assert np.all(hi.times == np.maximum(s.times, t.times))
    # both are valid stopping rules by construction (from_times validates)


def test_from_times_rejects_non_stopping():
    tree = FiltrationTree.dyadic(2)
    # leaf-dependent time that is not measurable at its own level
    times = np.array([1, 2, 2, 2])
    with pytest.raises(TreeError):
        StoppingRule.from_times(tree, times)


def test_optional_sampling(depth2):
    f = Martingale(depth2, [np.zeros(1), np.array([1.0, -1.0]), np.array([2.0, 0.0, 0.0, -2.0])])
    assert optional_sampling_check(f, StoppingRule.constant(depth2, 0), StoppingRule.constant(depth2, 2))
    assert optional_sampling_check(f, StoppingRule.constant(depth2, 2), StoppingRule.constant(depth2, 1))


def test_optional_sampling_random_pairs():
    rng = np.random.default_rng(7)
    for trial in range(1000):
        mart = G.gen_increment(5, seed=trial)
        tree = mart.tree
        a, b = rng.uniform(0.1, 0.8, size=2)
        sigma = hitting_time(mart, lambda v: v > a)
        tau_u = hitting_time(mart, lambda v: v < -b)
        tau = tau_u.minimum(StoppingRule.constant(tree, tree.depth))  # bounded
        assert optional_sampling_check(mart, sigma, tau)


def test_optional_sampling_requires_bounded(depth2):
    f = Martingale(depth2, [np.zeros(1), np.array([1.0, -1.0]), np.array([2.0, 0.0, 0.0, -2.0])])
    with pytest.raises(TreeError):
        optional_sampling_check(f, StoppingRule.constant(depth2, 0), StoppingRule.never(depth2))


def test_conditional_expectation_at_sigma():
    mart = G.gen_increment(5, seed=21)
    sigma = hitting_time(mart, lambda v: v > 0.5)
    f_leaf = mart.leaf_values()
    ce = conditional_expectation_at(sigma, f_leaf)
    # E_sigma is a conditional expectation: averaging preserves mass
    assert np.isclose(mart.tree.expectation(ce), mart.tree.expectation(f_leaf))
    tau = StoppingRule.constant(mart.tree, mart.tree.depth)
    assert np.allclose(sampled_value(mart, sigma.minimum(tau)), ce, atol=1e-10)


# -- generators -----------------------------------------------------------------


@pytest.mark.parametrize("kind", ["backprop", "increment", "walk"])
def test_generator_martingale_invariant(kind):
    for seed in range(200):
        mart = G.corpus_martingale(kind, depth=5, seed=999, index=seed)
        mart.validate_martingale()


def test_generator_invariant_bulk_seeded():
    # averaging property across 10^4 seeded trials of every generator family
    for index in range(10_000):
        G.corpus_martingale("mixed", depth=6, seed=31, index=index).validate_martingale()


def test_doubling_martingale():
    mart = G.gen_doubling(3)
    for n in range(4):
        assert np.isclose(mart.tree.node_prob[n] @ mart.values[n], 1.0)
        expect = np.zeros(2**n)
        expect[0] = 2.0**n
        assert np.allclose(mart.values[n], expect)


def test_scaled_walk_square_function():
    from martkit.functionals import square_function_paths

    mart = G.gen_scaled_walk(4)
    assert np.allclose(np.abs(np.diff(mart.paths(), axis=0)), 0.5)
    assert np.all(square_function_paths(mart.paths())[-1] == 1.0)


def test_dyadic_of_function_midpoints():
    mart = G.gen_dyadic_of_function(lambda x: x, 2)
    assert np.allclose(mart.leaf_values(), [1 / 8, 3 / 8, 5 / 8, 7 / 8])


def test_log_weight_is_martingale_and_integrable():
    mart = G.gen_log_weight(8)
    mart.validate_martingale()
    assert mart.values[0][0] > 0


def test_same_seed_bit_identical():
    a = G.gen_leaf_backprop("normal", 6, seed=5)
    b = G.gen_leaf_backprop("normal", 6, seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(a.values, b.values))
    c = G.gen_leaf_backprop("normal", 6, seed=6)
    assert not np.array_equal(a.leaf_values(), c.leaf_values())


def test_vector_process_guard():
    with pytest.raises(TreeError):
        G.gen_family(3, 65, seed=0)


# -- serialization ----------------------------------------------------------------


def test_json_round_trip(tmp_path):
    mart = G.gen_increment(4, seed=8)
    data = tree_to_dict(mart.tree, {"f": mart})
    text1 = json.dumps(data, sort_keys=True)
    tree2, procs = tree_from_dict(json.loads(text1))
    text2 = json.dumps(tree_to_dict(tree2, procs), sort_keys=True)
    assert text1 == text2
    Martingale(tree2, procs["f"].values)  # averaging survives the round trip


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_backprop_always_martingale(seed):
    G.gen_leaf_backprop("uniform", 4, seed=seed).validate_martingale()


@given(st.floats(-2, 2), st.integers(0, 2**16 - 1))
@settings(max_examples=50, deadline=None)
def test_stopped_hitting_time_is_martingale(threshold, seed):
    mart = G.gen_leaf_backprop("uniform", 4, seed=seed)
    tau = hitting_time(mart, lambda v: v >= threshold)
    stopped = stop_process(mart, tau)  # validates the averaging property
    # the stopped path is frozen from the stopping level on
    pm, sm = mart.paths(), stopped.paths()
    for leaf in range(mart.tree.n_leaves):
        t = min(tau.times[leaf], mart.tree.depth)
        assert np.all(sm[t:, leaf] == pm[t, leaf])


def test_depth_guard():
    with pytest.raises(TreeError):
        G.gen_scaled_walk(25)
    with pytest.raises(TreeError):
        G.gen_leaf_backprop("normal", 30, seed=0)
