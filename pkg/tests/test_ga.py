import json

import numpy as np
import pytest

from scpldpch.ga import (
    GaConfig, Individual, compositions, crossover, crossover_window, evolve, fitness_from_counts, mutate,
    random_split, select, select_indices, selection_probabilities, swap_window,
)
from scpldpch.protograph import SplitSet, validate_split

CELLS = [(1, 1), (2, 1), (0, 2), (1, 2)]  # 0-based (row, col), column-major order


def with_cells(split, s0_vals, s1_vals):
    S = split.stack()
    for (u, v), a, b in zip(CELLS, s0_vals, s1_vals):
        S[0, u, v], S[1, u, v] = a, b
    out = SplitSet(split.base, tuple(S))
    assert validate_split(out) is None
    return out


def toy_fitness(split, cfg):
    # cheap deterministic stand-in for the PEXIT ladder
    S = split.stack()
    return int(3 * S[0].sum() + (S[0] * np.arange(S.shape[2])).sum())


def test_fitness_worked_value():
    assert fitness_from_counts([80, 104, 121], 150) == 145


def test_fitness_edge_cases():
    assert fitness_from_counts([], 150) == 0
    assert fitness_from_counts([1], 150) == 149
    with pytest.raises(ValueError):
        fitness_from_counts([151], 150)


def test_config_validation():
    with pytest.raises(ValueError):
        GaConfig(K=30, N_g=3)
    with pytest.raises(ValueError):
        GaConfig(N_g=0)
    with pytest.raises(ValueError):
        GaConfig(p_c=1.5)
    assert GaConfig().K == 30 and GaConfig().N_g == 4


def test_config_file(tmp_path):
    p = tmp_path / "ga.toml"
    p.write_text("K = 8\nN_g = 2\np_m = 0.5\nstart_db = 1.0\n")
    cfg = GaConfig.from_file(p)
    assert (cfg.K, cfg.N_g, cfg.p_m, cfg.start_db) == (8, 2, 0.5, 1.0)
    p.write_text("bogus = 1\n")
    with pytest.raises(ValueError):
        GaConfig.from_file(p)


def test_compositions():
    assert compositions(3, 2) == ((0, 3), (1, 2), (2, 1), (3, 0))
    assert len(compositions(4, 3)) == 15
    assert all(sum(c) == 4 for c in compositions(4, 3))


def test_crossover_figure_example(toy):
    a = with_cells(toy, [2, 1, 1, 0], [0, 1, 1, 2])
    b = with_cells(toy, [1, 1, 1, 1], [1, 1, 1, 1])
    # (2,2) .. (2,3) in 1-based coordinates
    lo, hi = 1 * 3 + 1, 2 * 3 + 1
    a2, b2 = swap_window(a, b, lo, hi)
    assert [a2.parts[0][c] for c in CELLS] == [1, 1, 1, 1]
    assert [b2.parts[0][c] for c in CELLS] == [2, 1, 1, 0]
    assert [a2.parts[1][c] for c in CELLS] == [1, 1, 1, 1]
    assert [b2.parts[1][c] for c in CELLS] == [0, 1, 1, 2]
    mask = np.ones((3, 4), bool)
    for c in CELLS:
        mask[c] = False
    for i in range(2):
        np.testing.assert_array_equal(a2.parts[i].entries[mask], a.parts[i].entries[mask])


def test_crossover_window_shape():
    rng = np.random.default_rng(0)
    for _ in range(200):
        lo, hi = crossover_window(3, 4, rng)
        assert 0 <= lo <= hi < 12
        assert lo % 3 <= hi % 3


def test_crossover_identical_is_noop(toy):
    cfg = GaConfig(K=8, N_g=2, p_c=1.0)
    a, b = Individual(toy), Individual(toy)
    a2, b2 = crossover(a, b, cfg, np.random.default_rng(1))
    assert a2.split == toy and b2.split == toy


def test_mutation_figure_example(toy):
    cfg = GaConfig(K=8, N_g=2, p_m=1.0)
    seen = set()
    for seed in range(300):
        ind = mutate(Individual(toy), cfg, np.random.default_rng(seed))
        S = ind.split.stack()
        if (S[:, 2, 0] != toy.stack()[:, 2, 0]).any():
            seen.add(tuple(S[:, 2, 0]))
    # B(3,1) = 3 split as (1, 2) may move to any other composition, including (3, 0)
    assert seen == {(0, 3), (2, 1), (3, 0)}


def test_mutation_forced_flip():
    base = [[1, 1, 1, 1, 1, 1]]
    split = SplitSet.from_parts([[[1, 0, 1, 0, 1, 0]], [[0, 1, 0, 1, 0, 1]]])
    cfg = GaConfig(K=4, N_g=2, p_m=1.0)
    for seed in range(50):
        ind = mutate(Individual(split), cfg, np.random.default_rng(seed))
        diff = ind.split.stack() != split.stack()
        assert diff.sum() == 2 and diff[:, 0].any(axis=0).sum() == 1
        assert (ind.split.base.entries == np.array(base)).all()


def test_mutation_probability_zero(toy):
    ind = mutate(Individual(toy), GaConfig(K=4, N_g=2, p_m=0.0), np.random.default_rng(0))
    assert ind.split == toy


def test_select_degenerate_roulette(toy):
    pop = [Individual(toy, 145), Individual(random_split(toy.base, 1, np.random.default_rng(1)), 0),
           Individual(random_split(toy.base, 1, np.random.default_rng(2)), 0)]
    cfg = GaConfig(K=3, N_g=1)
    for seed in range(20):
        elite, drawn = select_indices([p.fitness for p in pop], cfg, np.random.default_rng(seed))
        assert elite == [0] and drawn == [0, 0]
    off = select(pop, cfg, np.random.default_rng(0))
    assert off[0].split == toy and off[0] is not pop[0]


def test_selection_probabilities():
    np.testing.assert_allclose(selection_probabilities([5, 5, 5, 5]), 0.25)
    np.testing.assert_allclose(selection_probabilities([0, 0, 0]), 1 / 3)
    p = selection_probabilities(np.random.default_rng(0).integers(0, 300, 30))
    assert abs(p.sum() - 1) < 1e-12


def test_select_pinned_sequence():
    fit = [10, 40, 0, 25, 25, 100, 5, 60]
    elite, drawn = select_indices(fit, GaConfig(K=8, N_g=2), np.random.default_rng(2024))
    assert elite == [5, 7]
    assert drawn == [5, 3, 4, 7, 7, 1]


def test_operator_fuzz(toy):
    cfg = GaConfig(K=8, N_g=2, p_c=0.8, p_m=0.6)
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        a = Individual(random_split(toy.base, 1, rng))
        b = Individual(random_split(toy.base, 1, rng))
        assert validate_split(a.split) is None
        a, b = crossover(a, b, cfg, rng)
        assert validate_split(a.split) is None and validate_split(b.split) is None
        before = a.split.stack()
        a = mutate(a, GaConfig(K=8, N_g=2, p_m=1.0), rng)
        assert validate_split(a.split) is None
        assert (a.split.stack() != before).any()
        a.fitness, b.fitness = int(rng.integers(0, 300)), int(rng.integers(0, 300))
        for ind in select([a, b], GaConfig(K=2, N_g=2), rng):
            assert validate_split(ind.split) is None


def test_evolve_elitism_and_seeded_individual(toy):
    cfg = GaConfig(K=8, N_g=2, max_generations=6, seed=3)
    res = evolve(cfg, toy.base, initial=[toy], fitness_fn=toy_fitness)
    best = [h.best for h in res.history]
    assert best == sorted(best)
    assert res.best.fitness >= toy_fitness(toy, cfg)
    assert validate_split(res.best.split) is None
    assert res.best.fitness == toy_fitness(res.best.split, cfg)


def test_evolve_pure_elitism_is_frozen(toy):
    cfg = GaConfig(K=2, N_g=2, max_generations=5, seed=1)
    res = evolve(cfg, toy.base, fitness_fn=toy_fitness)
    first = sorted(p.split.key() for p in evolve(GaConfig(K=2, N_g=2, max_generations=1, seed=1), toy.base,
                                                  fitness_fn=toy_fitness).population)
    assert sorted(p.split.key() for p in res.population) == first
    assert len({h.best for h in res.history}) == 1


def test_evolve_patience(toy):
    cfg = GaConfig(K=2, N_g=2, max_generations=50, patience=3, seed=1)
    res = evolve(cfg, toy.base, fitness_fn=toy_fitness)
    assert len(res.history) == 4


def test_evolve_all_zero_fitness(toy):
    cfg = GaConfig(K=6, N_g=2, max_generations=3)
    res = evolve(cfg, toy.base, fitness_fn=lambda s, c: 0)
    assert res.best.fitness == 0 and len(res.history) == 3


def test_checkpoint_resume_matches(toy, tmp_path):
    ck = tmp_path / "ck.json"
    full = evolve(GaConfig(K=8, N_g=2, max_generations=6, seed=9), toy.base, fitness_fn=toy_fitness)
    evolve(GaConfig(K=8, N_g=2, max_generations=3, seed=9), toy.base, fitness_fn=toy_fitness, checkpoint=ck)
    state = json.loads(ck.read_text())
    assert state["generation"] == 2
    res = evolve(GaConfig(K=8, N_g=2, max_generations=6, seed=9), toy.base, fitness_fn=toy_fitness, resume=ck)
    assert [vars(h) for h in res.history] == [vars(h) for h in full.history]
    assert res.best.split == full.best.split
    assert [p.split for p in res.population] == [p.split for p in full.population]


def test_initial_must_match_base(toy):
    other = SplitSet.from_parts([np.ones((3, 4), int), np.ones((3, 4), int)])
    with pytest.raises(Exception):
        evolve(GaConfig(K=4, N_g=2, max_generations=1), toy.base, initial=[other], fitness_fn=toy_fitness)
