import json
import math

import numpy as np
import pytest

from epichaos import lattice, sim, tree
from epichaos.errors import ConfigError, DomainError, ParameterError
from epichaos.graphs import generate_3_regular
from epichaos.percolation import OccupancyField, Torus, label_clusters

LOG2 = math.log(2)
B3 = 2 * math.log(3)


def torus_cfg(**kw):
    base = dict(topology="torus", dim=2, side=32, beta=2.25, alpha=0.01, seed=1)
    return sim.ModelConfig(**(base | kw))


# -- config ---------------------------------------------------------------------

@pytest.mark.parametrize("kw", [
    dict(topology="ring"),
    dict(dispersal="far"),
    dict(beta=0.0),
    dict(alpha=1.5),
    dict(topology="rrg", n_nodes=100, dispersal="radius", radius=2),
    dict(topology="rrg", n_nodes=7),
    dict(dispersal="radius", radius=16),
    dict(dispersal="radius", radius=0),
    dict(range_cap=-1),
])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        torus_cfg(**kw)


def test_config_from_mapping():
    cfg = sim.ModelConfig.from_mapping({"topology": "torus", "side": "40", "beta": "2.5",
                                        "dispersal": "radius", "radius": "3",
                                        "range_cap": "none", "record_half": "true"})
    assert cfg.side == 40 and cfg.beta == 2.5 and cfg.radius == 3
    assert cfg.range_cap is None and cfg.record_half is True
    with pytest.raises(ConfigError):
        sim.ModelConfig.from_mapping({"side": "40", "colour": "red"})


# -- growth ---------------------------------------------------------------------

def test_growth_empty_stays_empty():
    cfg = torus_cfg(dispersal="radius", radius=3)
    empty = OccupancyField(Torus(2, 32), np.zeros(1024, bool))
    assert not sim.growth_step(empty, cfg).occupied.any()
    assert not sim.growth_step(empty, torus_cfg()).occupied.any()


def test_growth_global_fixed_point():
    g = generate_3_regular(100_000, seed=5)
    cfg = sim.ModelConfig(topology="rrg", n_nodes=100_000, beta=2 * LOG2, seed=5)
    state = sim.initial_state(g, 0.5, seed=5)
    half = OccupancyField(g, np.arange(g.n_nodes) % 2 == 0)
    assert half.density == 0.5
    dens = [sim.growth_step(half, cfg, step=k).density for k in range(20)]
    assert abs(np.mean(dens) - 0.5) < 0.01
    assert state.occupied.size == 100_000


def test_growth_radius_full_torus():
    t = Torus(2, 200)
    cfg = sim.ModelConfig(topology="torus", side=200, dispersal="radius", radius=5, beta=2.25)
    full = OccupancyField(t, np.ones(t.n_sites, bool))
    prob = sim.growth_probability(full, cfg)
    assert np.allclose(prob, 1 - math.exp(-2.25), rtol=0, atol=1e-15)
    q = 1 - math.exp(-2.25)
    rho = sim.growth_step(full, cfg).density
    assert abs(rho - q) < 3 * math.sqrt(q * (1 - q) / t.n_sites)


def test_growth_uses_punctured_window():
    t = Torus(2, 20)
    occ = np.zeros(t.n_sites, bool)
    occ[0] = True
    cfg = sim.ModelConfig(topology="torus", side=20, dispersal="radius", radius=1, beta=2.0)
    prob = sim.growth_probability(OccupancyField(t, occ), cfg)
    # a lone parent cannot land on itself; its 8 neighbours share its offspring
    assert prob[0] == 0.0
    assert np.isclose(prob[1], -math.expm1(-2.0 / 8))
    assert np.count_nonzero(prob) == 8


def test_growth_density_bounded():
    cfg = torus_cfg(side=100, dispersal="radius", radius=3, beta=3.0)
    t = Torus(2, 100)
    q = 1 - math.exp(-3.0)
    for seed in range(5):
        state = sim.initial_state(t, 0.9, seed)
        rho = sim.growth_step(state, cfg, seed).density
        assert rho <= q + 3 * math.sqrt(q * (1 - q) / t.n_sites)


# -- epidemic ---------------------------------------------------------------------

def test_epidemic_trivial_rates():
    t = Torus(2, 32)
    state = sim.initial_state(t, 0.6, seed=2)
    same = sim.epidemic_step(state, torus_cfg(alpha=0.0))
    assert np.array_equal(same.occupied, state.occupied)
    assert not sim.epidemic_step(state, torus_cfg(alpha=1.0)).occupied.any()


def test_epidemic_is_subset():
    t = Torus(2, 64)
    for seed in range(10):
        state = sim.initial_state(t, 0.5 + 0.03 * seed, seed)
        after = sim.epidemic_step(state, torus_cfg(alpha=0.02, seed=seed), seed)
        assert not np.any(after.occupied & ~state.occupied)
        capped = sim.epidemic_step(state, torus_cfg(alpha=0.02, seed=seed, range_cap=3), seed)
        assert not np.any(capped.occupied & ~state.occupied)


def test_single_cluster_survival_frequency():
    t = Torus(2, 20)
    occ = np.zeros((20, 20), bool)
    occ[5:15, 5:15] = True
    state = OccupancyField(t, occ)
    trials = 10_000
    cfg = torus_cfg(side=20, alpha=0.01, seed=3)
    alive = sum(sim.epidemic_step(state, cfg, step=k).occupied.any() for k in range(trials))
    want = 0.99**100
    assert want == pytest.approx(0.366, abs=1e-3)
    assert abs(alive / trials - want) < 3 * math.sqrt(want * (1 - want) / trials)
    # per-site landings with the same law
    gen = np.random.default_rng(4)
    alive_sites = sum(
        sim.epidemic_from_landings(state, gen.random(400) < 0.01).occupied.any()
        for _ in range(trials))
    assert abs(alive_sites / trials - want) < 3 * math.sqrt(want * (1 - want) / trials)


def test_cluster_sampling_matches_site_landings():
    t = Torus(2, 16)
    state = sim.initial_state(t, 0.55, seed=8)
    lab = label_clusters(state)
    trials, alpha = 10_000, 0.1
    cfg = torus_cfg(side=16, alpha=alpha, seed=8)
    first = np.unique(lab.label[state.occupied])
    surv_cluster = np.zeros(lab.n_clusters)
    surv_sites = np.zeros(lab.n_clusters)
    gen = np.random.default_rng(9)
    for k in range(trials):
        surv_cluster += sim.epidemic_step(state, cfg, k).occupied[first]
        surv_sites += sim.epidemic_from_landings(state, gen.random(256) < alpha).occupied[first]
    f1, f2 = surv_cluster / trials, surv_sites / trials
    exact = (1 - alpha) ** lab.sizes
    se = np.sqrt(exact * (1 - exact) / trials)
    assert np.all(np.abs(f1 - f2) <= 3 * np.sqrt(2) * se + 1e-12)
    assert np.all(np.abs(f1 - exact) <= 3 * se + 1e-12)


def test_range_cap_semantics():
    t = Torus(1, 30)
    occ = np.zeros(30, bool)
    occ[2:20] = True
    state = OccupancyField(t, occ)
    landing = np.zeros(30, bool)
    landing[10] = True
    after = sim.epidemic_from_landings(state, landing, range_cap=3).occupied
    assert np.array_equal(np.flatnonzero(occ & ~after), np.arange(7, 14))
    zero = sim.epidemic_from_landings(state, landing, range_cap=0).occupied
    assert np.flatnonzero(occ & ~zero).tolist() == [10]
    full = sim.epidemic_from_landings(state, landing, range_cap=100).occupied
    assert not full.any()
    assert np.array_equal(sim.epidemic_from_landings(state, landing).occupied, full)
    # a landing on a vacant site does nothing
    landing[25] = True
    landing[10] = False
    assert np.array_equal(sim.epidemic_from_landings(state, landing).occupied, occ)


# -- runs -------------------------------------------------------------------------

def test_run_from_zero():
    rec = sim.run(torus_cfg(dispersal="radius", radius=2), 0.0, 10)
    assert np.all(rec.densities == 0)


def test_run_records_and_determinism(tmp_path):
    cfg = torus_cfg(side=64, dispersal="radius", radius=3, record_half=True)
    a = sim.run(cfg, 0.1, 15)
    b = sim.run(cfg, 0.1, 15)
    assert np.array_equal(a.densities, b.densities)
    assert np.array_equal(a.final_state.occupied, b.final_state.occupied)
    assert a.densities.size == 16 and a.half_densities.size == 15
    assert np.all(a.densities[1:] <= a.half_densities + 1e-15)
    assert a.densities[-1] == a.final_state.density
    a.write_csv(tmp_path / "a.csv")
    b.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "k,rho,rho_half" and len(lines) == 17
    assert [float(x) for x in lines[3].split(",")[1:]] == [a.densities[2], a.half_densities[1]]
    a.write_metadata(tmp_path / "a.json")
    meta = json.loads((tmp_path / "a.json").read_text())
    assert meta["config"]["seed"] == 1 and meta["p0"] == 0.1 and meta["k_max"] == 15
    other = sim.run(torus_cfg(side=64, dispersal="radius", radius=3, seed=2), 0.1, 15)
    assert not np.array_equal(other.densities, a.densities)


def test_run_callback_and_errors():
    seen = []
    sim.run(torus_cfg(), 0.3, 4, callback=lambda k, s: seen.append((k, s.density)))
    assert [k for k, _ in seen] == [1, 2, 3, 4]
    with pytest.raises(DomainError):
        sim.run(torus_cfg(), 1.3, 4)
    with pytest.raises(ParameterError):
        sim.run(torus_cfg(), 0.3, -1)


# -- density fields ---------------------------------------------------------------

def naive_window(grid, r):
    side = grid.shape[0]
    out = np.zeros(grid.shape, dtype=np.int64)
    for i in range(side):
        for j in range(side):
            rows = [(i + a) % side for a in range(-r, r + 1)]
            cols = [(j + b) % side for b in range(-r, r + 1)]
            out[i, j] = grid[np.ix_(rows, cols)].sum()
    return out


def test_density_field_examples():
    t = Torus(2, 16)
    full = sim.density_field(OccupancyField(t, np.ones(256, bool)), 3)
    assert np.all(full.values == 1)
    occ = np.zeros((16, 16), bool)
    occ[5, 5] = True
    one = sim.density_field(OccupancyField(t, occ), 1)
    assert np.count_nonzero(one.values) == 9
    assert np.all(one.values[4:7, 4:7] == 1 / 9)


def test_density_field_matches_naive():
    t = Torus(2, 64)
    occ = np.random.default_rng(3).random((64, 64)) < 0.3
    field = sim.density_field(OccupancyField(t, occ), 5)
    counts = naive_window(occ.astype(np.int64), 5)
    assert np.array_equal(field.counts, counts)
    assert np.array_equal(field.values, counts / 121)


def test_density_field_3d_and_errors():
    t = Torus(3, 9)
    occ = np.random.default_rng(1).random(t.shape) < 0.5
    field = sim.density_field(OccupancyField(t, occ), 1)
    want = sum(np.roll(occ, (a, b, c), axis=(0, 1, 2))
               for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1))
    assert np.array_equal(field.counts, want)
    with pytest.raises(ParameterError):
        sim.density_field(OccupancyField(t, occ), 5)
    g = generate_3_regular(10, seed=0)
    with pytest.raises(ParameterError):
        sim.density_field(OccupancyField(g, np.ones(10, bool)), 1)


def test_good_site_fraction():
    t = Torus(2, 16)
    field = sim.density_field(OccupancyField(t, np.ones(256, bool)), 2)
    assert sim.good_site_fraction(field, 1.0, 0.01) == 1.0
    assert sim.good_site_fraction(field, 1.5, 0.1) == 0.0
    assert sim.good_site_fraction(field, -0.5, 0.1) == 0.0
    with pytest.raises(ParameterError):
        sim.good_site_fraction(field, 0.5, 0.0)


# -- snapshots --------------------------------------------------------------------

def test_snapshot_and_formats(tmp_path):
    t = Torus(2, 12)
    assert np.all(sim.snapshot(OccupancyField(t, np.zeros(144, bool))) == 0)
    assert np.all(sim.snapshot(OccupancyField(t, np.ones(144, bool))) == 1)
    with pytest.raises(ParameterError):
        sim.snapshot(OccupancyField(Torus(3, 4), np.ones(64, bool)))
    grid = sim.snapshot(sim.initial_state(t, 0.4, seed=3))
    sim.write_rle(grid, tmp_path / "g.rle")
    assert np.array_equal(sim.read_rle(tmp_path / "g.rle"), grid)
    sim.write_pgm(grid, tmp_path / "g.pgm")
    lines = (tmp_path / "g.pgm").read_text().split("\n")
    assert lines[:3] == ["P2", "12 12", "1"]
    assert np.array_equal(np.array([row.split() for row in lines[3:15]], dtype=int), grid)


def block_variance(grid, block):
    n = grid.shape[0] // block
    return grid.reshape(n, block, n, block).mean(axis=(1, 3)).var()


@pytest.mark.slow
def test_snapshot_heterogeneous_patches():
    cfg = sim.ModelConfig(topology="torus", side=450, beta=2.25, dispersal="radius", radius=5,
                          alpha=5e-6, seed=1)
    grid = sim.snapshot(sim.run(cfg, 0.1, 200).final_state)
    observed = block_variance(grid, 30)
    gen = np.random.default_rng(0)
    null = np.array([block_variance(gen.permutation(grid.ravel()).reshape(grid.shape), 30)
                     for _ in range(200)])
    assert observed > null.mean() + 3 * null.std()


# -- finite-alpha tracking ----------------------------------------------------------
# At fixed alpha the system follows the finite-alpha maps, not their alpha -> 0
# limits; these checks pin down that the simulation is correct at that level.

@pytest.mark.slow
def test_rrg_tracks_finite_alpha_tree_map():
    alpha = 0.05
    g = generate_3_regular(100_000, seed=1)
    for seed in (1, 2, 3):
        cfg = sim.ModelConfig(topology="rrg", n_nodes=100_000, beta=B3, alpha=alpha, seed=seed)
        rho = sim.run(cfg, 0.1, 10, topology=g).densities
        orb = [0.1]
        for _ in range(10):
            orb.append(tree.h_tree_alpha(orb[-1], B3, alpha))
        assert np.max(np.abs(rho - orb)) < 0.02


@pytest.mark.slow
def test_torus_tracks_finite_alpha_lattice_map_one_step():
    cfg = sim.ModelConfig(topology="torus", side=500, beta=2.25, dispersal="radius", radius=50,
                          alpha=0.01, seed=1)
    spread = []
    rho = sim.run(cfg, 0.1, 2,
                  callback=lambda k, s: spread.append(sim.density_field(s, 50).values.std())).densities
    # while the radius-50 window densities are still nearly uniform the
    # global density follows the finite-alpha map of itself
    assert max(spread) < 0.02
    for k in range(2):
        q = tree.growth_map(rho[k], 2.25)
        want = lattice.finite_alpha_survival(q, 0.01, 2, 500, n_samples=1, seed=k)
        assert abs(rho[k + 1] - want) < 0.005
