import itertools
import math

import numpy as np
import pytest
from scipy import stats

from kacchaos.kac import CollisionEvent, Ensemble, EventStream, init
from kacchaos.nonlinear import (CoupledState, MatchingTable, ReferenceFlow, aux_rate,
                                coupled_step, default_refresh, optimal_matching, pi_sample,
                                run_coupled, run_decoupled)
from kacchaos.oracles import w2_bruteforce
from kacchaos.rng import child_seed

SIGMA = math.sqrt(1 / 3)


def gauss_pair(N, seed):
    V = init("gaussian", N, seed=seed)
    return V, V.copy()


def test_default_refresh():
    assert default_refresh(2) == 1 and default_refresh(256) == 1
    assert default_refresh(257) == 257


def test_pi_sample_identity_when_reference_equals_U():
    U = init("gaussian", 12, seed=0)
    flow = ReferenceFlow("mirror")
    table = MatchingTable(1)
    for i, j in [(0, 1), (5, 3), (11, 0)]:
        assert np.array_equal(pi_sample(U, i, j, flow, table, V=U), U.velocities[j])
    assert table.cost == 0.0


def test_restricted_matching_brute_force_example():
    U = np.array([[5.0, 5, 5], [0.0, 0, 0], [10.0, 0, 0]])
    ref = np.array([[9.0, 0, 0], [1.0, 0, 0]])
    t = MatchingTable()
    t.update(U, ref, exclude=0)
    assert list(t.assign) == [-1, 1, 0]
    assert t.cost == pytest.approx(1.0)
    crossed = 0.5 * (81 + 81)
    assert crossed > t.cost
    assert t.restricted_cost(U, 0) == pytest.approx(1.0)
    with pytest.raises(IndexError):
        t.partner(0)


def test_matching_optimal_against_exhaustive_search(rng):
    for n in range(1, 9):
        for _ in range(5):
            U = rng.normal(size=(n + 1, 3))
            ref = rng.normal(size=(n, 3))
            i = int(rng.integers(n + 1))
            t = MatchingTable()
            t.update(U, ref, exclude=i)
            assert t.cost == pytest.approx(w2_bruteforce(np.delete(U, i, axis=0), ref), abs=1e-12)
            full_ref = rng.normal(size=(n + 1, 3))
            t.update(U, full_ref)
            if n < 8:
                assert t.cost == pytest.approx(w2_bruteforce(U, full_ref), abs=1e-12)
            # restricted to U^{-i} the shared matching is optimal onto the other atoms
            others = np.delete(full_ref, t.assign[i], axis=0)
            assert t.restricted_cost(U, i) == pytest.approx(
                w2_bruteforce(np.delete(U, i, axis=0), others), abs=1e-12)


def test_matching_table_errors():
    t = MatchingTable()
    with pytest.raises(ValueError):
        t.update(np.zeros((3, 3)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        t.update(np.zeros((3, 3)), np.zeros((3, 3)), exclude=1)
    with pytest.raises(ValueError):
        MatchingTable(0)


def test_optimal_matching_cost():
    X = np.array([[0.0, 0, 0], [10.0, 0, 0]])
    perm, cost = optimal_matching(X, [[9.0, 0, 0], [1.0, 0, 0]])
    assert list(perm) == [1, 0] and cost == pytest.approx(1.0)


def test_pi_sample_marginal_is_reference_law(rng):
    N = 20
    U = init("gaussian", N, seed=2)
    flow = ReferenceFlow("gaussian", seed=3)
    table = MatchingTable(refresh=10 ** 9)
    i = 4
    first = pi_sample(U, i, 0, flow, table)
    ref = table.ref
    js = rng.integers(0, N - 1, 100_000)
    js += js >= i
    hits = np.zeros(N, dtype=int)
    rows = {tuple(r): a for a, r in enumerate(ref)}
    for j in js:
        hits[rows[tuple(pi_sample(U, i, int(j), flow, table))]] += 1
    assert np.array_equal(first, ref[table.assign[0]])
    assert hits[table.assign[i]] == 0
    others = np.delete(hits, table.assign[i])
    assert stats.chisquare(others).pvalue > 0.01
    with pytest.raises(ValueError):
        pi_sample(U, 1, 1, flow, table)


def test_reference_flow_modes():
    g = ReferenceFlow("gaussian", seed=1)
    x = g.reference(40_000, 0.0)
    assert x.var(axis=0) == pytest.approx([1 / 3] * 3, rel=0.03)
    m = ReferenceFlow("mirror")
    V = np.arange(12.0).reshape(4, 3)
    assert np.array_equal(m.reference(4, 1.0, V), V)
    with pytest.raises(ValueError):
        m.reference(4, 1.0)
    sc = ReferenceFlow("self-consistent", seed=1, L=5.0, M=30)
    assert sc.approximate and not g.approximate
    a = sc.reference(10, 0.5)
    assert a.shape == (10, 3) and sc.ensemble.t == 0.5
    with pytest.raises(ValueError):
        sc.reference(31, 0.5)
    with pytest.raises(ValueError):
        ReferenceFlow("bkw")


def test_coupled_step_above_L_moves_only_V():
    V, U = gauss_pair(6, 0)
    U.velocities[:] += 0.1
    st = CoupledState(V, U, K=10.0, L=2.0)
    flow, table = ReferenceFlow("gaussian", seed=1), MatchingTable(1)
    v0, u0 = V.velocities.copy(), U.velocities.copy()
    coupled_step(st, CollisionEvent(0.1, 1, 3, 5.0, 1.0), flow, table)
    assert np.array_equal(U.velocities, u0)
    assert not np.array_equal(V.velocities[[1, 3]], v0[[1, 3]])
    coupled_step(st, CollisionEvent(0.2, 1, 3, 1.0, 1.0), flow, table)
    assert not np.array_equal(U.velocities[[1, 3]], u0[[1, 3]])
    assert np.array_equal(U.velocities[[0, 2, 4, 5]], u0[[0, 2, 4, 5]])
    assert st.n_events == 2 and st.t == 0.2


def test_coupled_step_one_sided_changes_U_energy():
    V, U = gauss_pair(6, 0)
    st = CoupledState(V, U, K=5.0, L=5.0)
    flow, table = ReferenceFlow("gaussian", seed=1), MatchingTable(1)
    e0 = U.energy()
    for n in range(20):
        coupled_step(st, CollisionEvent(0.1 * n, n % 6, (n + 1) % 6, 0.1, 0.3 * n), flow, table)
    assert U.energy() != pytest.approx(e0, rel=1e-9)
    assert V.energy() == pytest.approx(V.energy0, rel=1e-12)


def test_coupled_step_equal_states_stay_equal():
    V, U = gauss_pair(8, 4)
    st = CoupledState(V, U, K=5.0, L=5.0)
    flow, table = ReferenceFlow("mirror"), MatchingTable(1)
    for n, (i, j) in enumerate(itertools.permutations(range(8), 2)):
        coupled_step(st, CollisionEvent(0.01 * n, i, j, 0.2 + 0.1 * (n % 7), 0.9 * n), flow, table)
        assert np.array_equal(V.velocities, U.velocities)


def test_coupled_state_and_step_errors():
    V, U = gauss_pair(6, 0)
    with pytest.raises(ValueError):
        CoupledState(V, init("gaussian", 7), 5.0, 5.0)
    with pytest.raises(ValueError):
        CoupledState(V, U, 2.0, 5.0)
    st = CoupledState(V, U, 5.0, 5.0)
    flow, table = ReferenceFlow("gaussian"), MatchingTable(1)
    with pytest.raises(ValueError):
        coupled_step(st, CollisionEvent(0.0, 0, 1, 6.0, 0.0), flow, table)
    with pytest.raises(ValueError):
        run_coupled(V, U, 2.0, 5.0, 1.0, flow, EventStream(0, 6, 5.0))


def test_mirror_self_coupling_is_exactly_zero():
    V, U = gauss_pair(64, 1)
    res = run_coupled(V, U, 10.0, 10.0, 3.0, ReferenceFlow("mirror"), EventStream(2, 64, 10.0),
                      observe=(0.0, 1.0, 2.0, 3.0))
    assert res.distance == {0.0: 0.0, 1.0: 0.0, 2.0: 0.0, 3.0: 0.0}
    assert res.state.n_events > 500


def test_distance_at_time_zero_is_initial_coupling_cost():
    V = init("gaussian", 30, seed=1)
    U = init("gaussian", 30, seed=2)
    res = run_coupled(V, U, 5.0, 5.0, 1.0, ReferenceFlow("gaussian"), EventStream(3, 30, 5.0),
                      observe=(0.0,))
    d = V.velocities - U.velocities
    assert res.distance[0.0] == pytest.approx(np.mean(np.sum(d * d, axis=1)), rel=1e-15)


def test_run_coupled_block_driver_matches_coupled_step():
    V, U = gauss_pair(10, 3)
    flow_a = ReferenceFlow("gaussian", seed=5)
    res = run_coupled(V, U, 8.0, 3.0, 2.0, flow_a, EventStream(6, 10, 8.0), refresh=3)
    st = CoupledState(V.copy(), U.copy(), 8.0, 3.0)
    flow_b, table = ReferenceFlow("gaussian", seed=5), MatchingTable(3)
    b = EventStream(6, 10, 8.0).take_until(2.0)
    for t, i, j, z, p in zip(*b):
        coupled_step(st, CollisionEvent(t, int(i), int(j), z, p), flow_b, table)
    assert np.array_equal(st.U.velocities, res.state.U.velocities)
    assert np.array_equal(st.V.velocities, res.state.V.velocities)
    assert table.n_refresh == res.table.n_refresh


def test_stationary_gaussian_marginal():
    n = 10_000
    x = np.empty(n)
    for r in range(n):
        V, U = gauss_pair(8, child_seed(1, r, "init"))
        res = run_coupled(V, U, 5.0, 5.0, 1.0, ReferenceFlow("gaussian", seed=child_seed(1, r)),
                          EventStream(child_seed(1, r, "events"), 8, 5.0))
        x[r] = res.state.U.velocities[r % 8, r % 3]
    assert stats.kstest(x, stats.norm(scale=SIGMA).cdf).pvalue > 0.01


def test_pair_exchangeability():
    n = 3000
    a, b = np.empty((n, 2)), np.empty((n, 2))
    for r in range(n):
        V, U = gauss_pair(6, child_seed(2, r, "init"))
        res = run_coupled(V, U, 5.0, 5.0, 1.0, ReferenceFlow("gaussian", seed=child_seed(2, r)),
                          EventStream(child_seed(2, r, "events"), 6, 5.0))
        Vv, Uv = res.state.V.velocities, res.state.U.velocities
        a[r] = Vv[0, 0], np.sum((Vv[0] - Uv[0]) ** 2)
        b[r] = Vv[5, 0], np.sum((Vv[5] - Uv[5]) ** 2)
    for c in range(2):
        assert stats.ks_2samp(a[:, c], b[:, c]).pvalue > 0.01


def test_coupling_distance_decreases_with_N():
    means = []
    for N in (32, 256):
        d = []
        for r in range(8):
            V, U = gauss_pair(N, child_seed(3, r, "init"))
            res = run_coupled(V, U, 10.0, 10.0, 1.0, ReferenceFlow("gaussian", seed=child_seed(3, r)),
                              EventStream(child_seed(3, r, "events"), N, 10.0), refresh=N)
            d.append(res.distance[1.0])
        means.append(np.mean(d))
    assert means[1] < means[0]


def test_aux_rate():
    assert aux_rate(1000, 1, 20.0) == 0.0
    assert aux_rate(1000, 10, 20.0) == pytest.approx(20 * 90 / (2 * 999))


def test_decoupled_k1_is_exact_copy():
    V, U = gauss_pair(50, 0)
    res = run_decoupled(V, U, 10.0, 10.0, (1,), 2.0, ReferenceFlow("gaussian", seed=1),
                        EventStream(2, 50, 10.0), aux_seed=3, observe=(0.5, 1.0, 2.0))
    assert res.distance[1] == {0.5: 0.0, 1.0: 0.0, 2.0: 0.0}
    assert np.array_equal(res.tilde[0, 0], res.state.U.velocities[0])


def test_decoupled_does_not_perturb_U():
    V, U = gauss_pair(30, 0)
    args = (10.0, 10.0)
    a = run_decoupled(V, U, *args, (1, 5, 30), 2.0, ReferenceFlow("gaussian", seed=1),
                      EventStream(2, 30, 10.0), aux_seed=3)
    b = run_coupled(V, U, *args, 2.0, ReferenceFlow("gaussian", seed=1), EventStream(2, 30, 10.0))
    assert np.array_equal(a.state.U.velocities, b.state.U.velocities)


def test_decoupled_k_equals_N_separates():
    hits = 0
    for r in range(20):
        V, U = gauss_pair(20, child_seed(4, r, "init"))
        res = run_decoupled(V, U, 10.0, 10.0, (20,), 1.0, ReferenceFlow("gaussian", seed=r),
                            EventStream(child_seed(4, r, "events"), 20, 10.0), aux_seed=r)
        hits += res.distance[20][1.0] > 0
    assert hits == 20


def test_decoupled_errors():
    V, U = gauss_pair(5, 0)
    for ks in [(0,), (6,)]:
        with pytest.raises(ValueError):
            run_decoupled(V, U, 5.0, 5.0, ks, 1.0, ReferenceFlow(), EventStream(0, 5, 5.0), 0)


def test_decoupled_pair_independence():
    n = 10_000
    x = np.empty((n, 2))
    for r in range(n):
        V, U = gauss_pair(6, child_seed(5, r, "init"))
        res = run_decoupled(V, U, 5.0, 5.0, (2,), 1.0, ReferenceFlow("gaussian", seed=child_seed(5, r)),
                            EventStream(child_seed(5, r, "events"), 6, 5.0), aux_seed=child_seed(5, r, "aux_events"))
        x[r] = np.tanh(res.tilde[0, :2, 0])
    rho = np.corrcoef(x.T)[0, 1]
    assert abs(rho) <= 3 / math.sqrt(n)
