import itertools

import numpy as np
import pytest

from netimmune import graph as G
from netimmune import moea
from netimmune.exact_qp import epsilon_sweep
from netimmune.moea import (
    ConfigError,
    Evaluator,
    GaConfig,
    crowding_distance,
    default_reference,
    dominance_matrix,
    evaluate,
    hv_contribution_2d,
    make_hybrid_init,
    nondominated_sort,
    nsga2_run,
    nsga2_select,
    sms_emoa_run,
)
from netimmune.pareto import Front, ObjectivePoint, hypervolume_2d, hypervolume_minimize, nondominated_filter
from oracles import points, true_front
from test_graph import complete, star


def peel_ranks(f):
    """Quadratic reference: repeatedly strip the non-dominated layer."""
    dom = dominance_matrix(f)
    rank = np.full(len(f), -1)
    left = np.ones(len(f), dtype=bool)
    r = 0
    while left.any():
        layer = left & ~np.any(dom[left], axis=0)
        rank[layer] = r
        left &= ~layer
        r += 1
    return rank


def ref_point(g, c):
    d, k = default_reference(g, c)
    return ObjectivePoint(d, int(k))


# -- evaluation ----------------------------------------------------------------


def test_evaluate_examples():
    k3 = complete(3)
    d, c = evaluate(k3, G.degree_costs(k3), [0])
    assert d == pytest.approx(1.0, abs=1e-9) and c == 2
    assert evaluate(k3, G.degree_costs(k3), []) == (0.0, 0)
    s = star(3)
    d, c = evaluate(s, G.degree_costs(s), [0])
    assert d == pytest.approx(np.sqrt(3), abs=1e-9) and c == 3


def test_evaluator_memoizes():
    g = G.generate_erdos_renyi(8, 12, seed=1)
    ev = Evaluator(g, G.degree_costs(g))
    x = np.zeros(8, dtype=bool)
    x[[1, 4]] = True
    first = ev(x)
    assert ev(x.copy()) == first and ev([1, 4]) == first
    assert ev.eigen_solves == 1
    assert first[0] == pytest.approx(G.eigen_drop(g, x), abs=1e-12)


# -- selection primitives ----------------------------------------------------------


def test_sort_and_crowding_examples():
    f = np.array([(1.0, 1.0)])
    fronts, rank = nondominated_sort(f)
    assert rank.tolist() == [0] and np.isinf(crowding_distance(f)).all()
    # (drop, cost) = (2,1), (1,2), (0,0) in minimisation form
    f = np.array([(-2.0, 1.0), (-1.0, 2.0), (0.0, 0.0)])
    fronts, rank = nondominated_sort(f)
    assert rank.tolist() == [0, 1, 0]
    assert [fr.tolist() for fr in fronts] == [[0, 2], [1]]


@pytest.mark.parametrize("seed", range(20))
def test_sort_matches_peeling_oracle(seed):
    rng = np.random.default_rng(seed)
    f = rng.integers(0, 8, size=(int(rng.integers(1, 60)), 2)).astype(float)
    _, rank = nondominated_sort(f)
    assert rank.tolist() == peel_ranks(f).tolist()


def test_crowding_boundaries_infinite():
    f = np.array([(0.0, 4.0), (1.0, 2.0), (2.0, 1.0), (4.0, 0.0)])
    d = crowding_distance(f)
    assert np.isinf(d[0]) and np.isinf(d[3])
    assert d[1] == pytest.approx(2 / 4 + 3 / 4) and d[2] == pytest.approx(3 / 4 + 2 / 4)


def test_hv_contributions_match_leave_one_out():
    rng = np.random.default_rng(4)
    for _ in range(20):
        x = np.sort(rng.choice(50, size=6, replace=False)).astype(float)
        y = np.sort(rng.choice(50, size=6, replace=False))[::-1].astype(float)
        f = np.column_stack([x, y])
        ref = (60.0, 60.0)
        total = hypervolume_minimize(f, ref)
        contrib = hv_contribution_2d(f, ref)
        for i in range(len(f)):
            assert contrib[i] == pytest.approx(total - hypervolume_minimize(np.delete(f, i, 0), ref))
        assert contrib.sum() <= total + 1e-9


def test_hv_contribution_duplicates_and_reference():
    f = np.array([(1.0, 2.0), (1.0, 2.0), (2.0, 1.0)])
    c = hv_contribution_2d(f, (3.0, 3.0))
    assert c[0] == c[1] == 0.0 and c[2] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        hv_contribution_2d(np.array([(3.0, 1.0)]), (3.0, 3.0))


def test_nsga2_select_keeps_rank_zero():
    rng = np.random.default_rng(9)
    for _ in range(30):
        f = rng.integers(0, 20, size=(40, 2)).astype(float)
        _, rank = nondominated_sort(f)
        size = int(rng.integers(max(1, (rank == 0).sum()), 41))
        kept = set(nsga2_select(f, size).tolist())
        assert len(kept) == size
        assert set(np.flatnonzero(rank == 0).tolist()) <= kept


# -- drivers ------------------------------------------------------------------


def k3_truth():
    return [(0.0, 0), (1.0, 2), (2.0, 4)]


@pytest.mark.parametrize("run", [nsga2_run, sms_emoa_run])
def test_k3_recovers_true_front(run):
    g = complete(3)
    res = run(g, G.degree_costs(g), GaConfig(population_size=10, evaluation_budget=500, seed=3))
    assert [(round(d, 9), c) for d, c in res.front.objectives()] == k3_truth()


@pytest.mark.parametrize("run", [nsga2_run, sms_emoa_run])
def test_budget_equal_population_returns_initial_front(run):
    g = G.generate_erdos_renyi(9, 15, seed=2)
    c = G.degree_costs(g)
    init = np.random.default_rng(0).random((12, 9)) < 0.5
    res = run(g, c, GaConfig(population_size=12, evaluation_budget=12, seed=1), init=init)
    expected = nondominated_filter(
        [ObjectivePoint(*evaluate(g, c, x), nodes=tuple(g.labels[i] for i in np.flatnonzero(x))) for x in init]
    )
    assert res.front.objectives() == expected.objectives()
    assert [p.nodes for p in res.front] == [p.nodes for p in expected]
    assert np.array_equal(res.population, init)


@pytest.mark.parametrize("run", [nsga2_run, sms_emoa_run])
def test_archive_is_filter_of_everything_evaluated(run, monkeypatch):
    seen = []
    orig = Evaluator.__call__

    def spy(self, x):
        out = orig(self, x)
        seen.append((out, tuple(np.flatnonzero(G.as_mask(x, self.g.n)).tolist())))
        return out

    monkeypatch.setattr(Evaluator, "__call__", spy)
    g = G.generate_erdos_renyi(10, 20, seed=5)
    c = G.degree_costs(g)
    res = run(g, c, GaConfig(population_size=20, evaluation_budget=400, seed=2))
    assert len(seen) <= 400
    pts = [ObjectivePoint(d, k, nodes=tuple(g.labels[i] for i in s)) for (d, k), s in seen]
    assert res.front.objectives() == nondominated_filter(pts).objectives()
    for p in res.front:
        idx = [g.index_of(label) for label in p.nodes]
        assert abs(G.eigen_drop(g, idx) - p.delta_lambda) <= 1e-9
        assert int(c[idx].sum()) == p.cost


@pytest.mark.parametrize("run", [nsga2_run, sms_emoa_run])
def test_ten_node_er_reaches_true_front_hypervolume(run):
    g = G.generate_erdos_renyi(10, 20, seed=13)
    c = G.degree_costs(g)
    ref = ref_point(g, c)
    truth = hypervolume_2d(points(true_front(g.adjacency, c)), ref)
    res = run(g, c, GaConfig(evaluation_budget=5000, seed=0))
    assert hypervolume_2d(res.front, ref) >= 0.95 * truth


def test_sms_emoa_hypervolume_non_decreasing():
    g = G.generate_erdos_renyi(11, 22, seed=7)
    res = sms_emoa_run(g, G.degree_costs(g), GaConfig(population_size=20, evaluation_budget=1020, seed=4), track_hypervolume=True)
    h = np.array(res.hv_history)
    assert len(h) == 1001
    assert np.all(np.diff(h) >= 0)


@pytest.mark.parametrize("run", [nsga2_run, sms_emoa_run])
def test_determinism_and_budget(run):
    g = G.generate_erdos_renyi(10, 18, seed=3)
    c = G.degree_costs(g)
    cfg = GaConfig(population_size=16, evaluation_budget=300, seed=11)
    a, b = run(g, c, cfg), run(g, c, cfg)
    assert a.front == b.front and np.array_equal(a.population, b.population)
    assert a.evaluations == 300 and a.eigen_solves <= 300


def test_duplicates_free_when_configured():
    g = complete(3)
    res = sms_emoa_run(g, G.degree_costs(g), GaConfig(population_size=4, evaluation_budget=8, seed=0, count_duplicates=False))
    # only eight distinct selections exist; the iteration cap ends the run
    assert res.evaluations <= 8 and res.eigen_solves <= 7
    assert res.iterations <= 80


def test_hybrid_archive_contains_init():
    g = G.generate_erdos_renyi(10, 19, seed=17)
    c = G.degree_costs(g)
    seeded = epsilon_sweep(g, c)
    ref = ref_point(g, c)
    init = make_hybrid_init([seeded], 100, g, seed=0)
    for run in (nsga2_run, sms_emoa_run):
        res = run(g, c, GaConfig(evaluation_budget=600, seed=1), init=init)
        assert hypervolume_2d(res.front, ref) >= hypervolume_2d(seeded, ref)


# -- hybrid initialisation -------------------------------------------------------


def test_make_hybrid_init_padding():
    g = G.generate_erdos_renyi(8, 12, seed=0)
    pop = make_hybrid_init([], 100, g, seed=1)
    assert pop.shape == (100, 8) and pop.dtype == bool
    front = Front(tuple(ObjectivePoint(float(i), i, nodes=(g.labels[i],)) for i in range(8)))
    again = Front(front.points[:2] + (ObjectivePoint(0.0, 0),))
    pop = make_hybrid_init([front, again], 100, g, seed=1)
    assert pop.shape == (100, 8)
    for i in range(8):
        assert pop[i].tolist() == [j == i for j in range(8)]
    assert not pop[8].any()


def test_make_hybrid_init_truncation():
    g = G.generate_erdos_renyi(10, 20, seed=0)
    rng = np.random.default_rng(5)
    subsets = rng.permutation(list(itertools.combinations(range(10), 3)))[:150]
    fronts = []
    for chunk in np.array_split(subsets, 3):
        fronts.append(
            Front(
                tuple(
                    ObjectivePoint(float(rng.integers(0, 30)), int(rng.integers(0, 30)), nodes=tuple(g.labels[i] for i in s))
                    for s in chunk
                )
            )
        )
    pop = make_hybrid_init(fronts, 100, g, seed=2)
    assert pop.shape == (100, 10)
    all_pts = [p for f in fronts for p in f]
    vec = {tuple(sorted(g.index_of(l) for l in p.nodes)): p for p in all_pts}
    kept = [vec[tuple(np.flatnonzero(x).tolist())] for x in pop]
    assert len(set(id(p) for p in kept)) == 100
    f = np.array([(-p.delta_lambda, p.cost) for p in all_pts])
    rank = peel_ranks(f)
    kept_ranks = np.array([rank[all_pts.index(p)] for p in kept])
    cutoff = kept_ranks.max()
    # every individual of a better rank than the cut-off rank survives
    assert (rank < cutoff).sum() == (kept_ranks < cutoff).sum()


def test_config_errors():
    g = complete(3)
    c = G.degree_costs(g)
    for bad in (
        GaConfig(population_size=1),
        GaConfig(p_m=1.5),
        GaConfig(p_c=-0.1),
        GaConfig(population_size=10, evaluation_budget=5),
        GaConfig(algorithm="spea2"),
    ):
        with pytest.raises(ConfigError):
            nsga2_run(g, c, bad)
    with pytest.raises(ConfigError):
        sms_emoa_run(g, c, GaConfig(population_size=4, evaluation_budget=10), init=np.zeros((3, 3), bool))
    with pytest.raises(ConfigError):
        make_hybrid_init([], 0, g, seed=0)


def test_run_dispatch():
    g = complete(3)
    res = moea.run(g, G.degree_costs(g), GaConfig(population_size=4, evaluation_budget=40, algorithm="sms_emoa"))
    assert res.front.points[0].method == "sms_emoa"
