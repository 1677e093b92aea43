"""Config parsing/serialization and the seeded benchmark generator."""

import numpy as np
import pytest

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from stocksync.config import (
    ConfigError,
    dump_config,
    load_config,
    scenario_from_dict,
    write_config,
)
from stocksync.scenario import DEFAULT_REFERENCE, benchmark_scenario


def _small_scenario(seed=3):
    return benchmark_scenario(seed=seed, N=2, n=2, T=300)


def _as_dict(scenario):
    """Scenario -> plain dict via its own TOML serialization."""
    return tomllib.loads(dump_config(scenario))


MINIMAL = {
    "network": {
        "chain": [
            {
                "tau": [1],
                "rho": [0.1],
                "xbar": [500.0],
                "wbar_inv": [20.0],
                "wbar_tr": [15.0],
                "dbar": 30.0,
            }
        ]
    }
}


def _minimal(**overrides):
    import copy

    d = copy.deepcopy(MINIMAL)
    for key, value in overrides.items():
        d[key] = value
    return d


# ---------------------------------------------------------------------------
# round trips
# ---------------------------------------------------------------------------


def test_round_trip_exact(tmp_path):
    sc = _small_scenario()
    path = tmp_path / "scenario.toml"
    write_config(sc, path)
    sc2 = load_config(path)

    assert sc2.network.N == sc.network.N
    for a, b in zip(sc.network.chains, sc2.network.chains):
        assert a.tau == b.tau
        assert a.rho == b.rho
        assert a.xbar == b.xbar
        assert a.wbar_inv == b.wbar_inv
        assert a.wbar_tr == b.wbar_tr
        assert a.dbar == b.dbar  # bit-exact, not approx
    assert sc2.network.gamma_bar == sc.network.gamma_bar
    assert sc2.network.reference_topology == sc.network.reference_topology
    for tag in ("w_inv_means", "w_tr_means", "demand_daily_means"):
        for a, b in zip(getattr(sc.disturbances, tag), getattr(sc2.disturbances, tag)):
            assert np.array_equal(a, b)
    assert sc2.sim.T == sc.sim.T
    assert sc2.sim.seed == sc.sim.seed
    assert sc2.sim.init_range == sc.sim.init_range
    assert sc2.sim.xbar_norm == sc.sim.xbar_norm
    assert sc2.sim.clamp == sc.sim.clamp
    assert [(e.time, e.kind, e.targets) for e in sc2.sim.failures] == [
        (e.time, e.kind, e.targets) for e in sc.sim.failures
    ]
    # serialization is a fixed point of load . dump
    assert dump_config(sc2) == dump_config(sc)


def test_write_config_idempotent_bytes(tmp_path):
    sc = _small_scenario(seed=9)
    p1, p2 = tmp_path / "a.toml", tmp_path / "b.toml"
    write_config(sc, p1)
    write_config(sc, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_cost_matrix_round_trip(tmp_path):
    sc = _small_scenario()
    nN = sc.network.n * sc.network.N
    rng = np.random.default_rng(0)
    sc.network.cost = rng.uniform(0.5, 3.0, (nN, nN))
    path = tmp_path / "c.toml"
    write_config(sc, path)
    sc2 = load_config(path)
    assert np.array_equal(sc2.network.cost, sc.network.cost)


# ---------------------------------------------------------------------------
# strictness: unknown/missing keys, bad values
# ---------------------------------------------------------------------------


def test_unknown_top_level_key():
    with pytest.raises(ConfigError, match=r"'simulation'.*top level"):
        scenario_from_dict(_minimal(simulation={}))


def test_unknown_network_key():
    d = _minimal()
    d["network"]["gamma"] = 1.0
    with pytest.raises(ConfigError, match=r"'gamma'.*\[network\]"):
        scenario_from_dict(d)


def test_unknown_chain_key():
    d = _minimal()
    d["network"]["chain"][0]["taus"] = [1]
    with pytest.raises(ConfigError, match=r"'taus'.*network.chain #1"):
        scenario_from_dict(d)


def test_unknown_disturbance_key():
    with pytest.raises(ConfigError, match=r"'sigma'.*\[disturbances\]"):
        scenario_from_dict(_minimal(disturbances={"sigma": 0.2}))


def test_unknown_sim_key():
    with pytest.raises(ConfigError, match=r"'horizon'.*\[sim\]"):
        scenario_from_dict(_minimal(sim={"horizon": 100}))


def test_unknown_failure_key():
    sim = {"failures": [{"time": 10, "kind": "inventory", "targets": 1, "site": 3}]}
    with pytest.raises(ConfigError, match=r"'site'.*sim.failures #1"):
        scenario_from_dict(_minimal(sim=sim))


def test_missing_network_section():
    with pytest.raises(ConfigError, match="missing required key 'network'"):
        scenario_from_dict({})


def test_missing_chain_field():
    d = _minimal()
    del d["network"]["chain"][0]["tau"]
    with pytest.raises(ConfigError, match="missing required key 'tau'"):
        scenario_from_dict(d)


def test_empty_chain_list():
    with pytest.raises(ConfigError, match="at least one table"):
        scenario_from_dict({"network": {"chain": []}})


def test_bad_chain_value_wrapped():
    d = _minimal()
    d["network"]["chain"][0]["rho"] = [1.5]
    # chain-level numeric validation runs with the network check, but the
    # error still names the offending chain and field
    with pytest.raises(ConfigError, match=r"chain 1: rho\[0\]=1.5"):
        scenario_from_dict(d)


def test_bad_network_value_wrapped():
    d = _minimal()
    d["network"]["gamma_bar"] = -1.0
    with pytest.raises(ConfigError, match=r"\[network\].*gamma_bar"):
        scenario_from_dict(d)


def test_gamma_bar_zero_is_accepted():
    # a zero gain budget is a valid (if hopeless) request; synthesis is the
    # layer that reports it as infeasible
    d = _minimal()
    d["network"]["gamma_bar"] = 0.0
    assert scenario_from_dict(d).network.gamma_bar == 0.0


def test_bad_disturbance_value_wrapped():
    with pytest.raises(ConfigError, match=r"\[disturbances\]"):
        scenario_from_dict(_minimal(disturbances={"rel_std": -0.1}))


def test_disturbance_chain_count_mismatch():
    dist = {
        "w_inv_means": [[20.0], [20.0]],
        "w_tr_means": [[15.0], [15.0]],
        "demand_daily_means": [[30.0] * 7, [30.0] * 7],
    }
    with pytest.raises(ConfigError, match="covers 2 chains.*defines 1"):
        scenario_from_dict(_minimal(disturbances=dist))


def test_bad_failure_kind_wrapped():
    sim = {"failures": [{"time": 10, "kind": "belt", "targets": 1}]}
    with pytest.raises(ConfigError, match=r"sim.failures #1"):
        scenario_from_dict(_minimal(sim=sim))


def test_failure_beyond_horizon_rejected():
    sim = {"T": 100, "failures": [{"time": 240, "kind": "inventory", "targets": 1}]}
    with pytest.raises(ConfigError, match=r"\[sim\].*beyond horizon"):
        scenario_from_dict(_minimal(sim=sim))


def test_invalid_toml_reported(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("[network\nchain = oops")
    with pytest.raises(ConfigError, match="invalid TOML"):
        load_config(path)


def test_defaults_applied():
    sc = scenario_from_dict(_minimal())
    assert sc.network.gamma_bar == 1.0e4
    assert sc.network.reference_topology == []
    dm = sc.disturbances
    assert dm.rel_std == 0.2
    assert dm.alpha_waste == 0.5
    assert dm.alpha_demand == 0.1
    assert dm.steps_per_day == 24
    # design means fill in for omitted disturbance means
    assert np.array_equal(dm.w_inv_means[0], [20.0])
    assert np.array_equal(dm.demand_daily_means[0], [30.0] * 7)
    assert sc.sim.T == 720
    assert sc.sim.seed == 0
    assert sc.sim.init_range == (100, 900)
    assert sc.sim.xbar_norm == 500.0
    assert sc.sim.clamp is False
    assert sc.sim.failures == []


# ---------------------------------------------------------------------------
# benchmark generator
# ---------------------------------------------------------------------------


def test_benchmark_deterministic():
    assert dump_config(benchmark_scenario(seed=7)) == dump_config(
        benchmark_scenario(seed=7)
    )
    assert dump_config(benchmark_scenario(seed=7)) != dump_config(
        benchmark_scenario(seed=8)
    )


def test_benchmark_parameter_ranges():
    N, n = 3, 4
    sc = benchmark_scenario(seed=11, N=N, n=n)
    for i, chain in enumerate(sc.network.chains, start=1):
        assert all(2 <= t <= 5 for t in chain.tau)
        for means in (chain.wbar_inv, chain.wbar_tr):
            for m in means:
                step = (m - 10 - 2 * i) / 2  # inverse of 10 + 2k + 2i
                assert step == int(step) and 1 <= step <= 5
        daily = sc.disturbances.demand_daily_means[i - 1]
        for d in daily:
            step = (d - 100 - 20 * i) / 2
            assert step == int(step) and 1 <= step <= 10 * N
        assert chain.dbar == float(np.mean(daily))


def test_benchmark_disturbance_means_match_design():
    sc = benchmark_scenario(seed=4, N=2, n=3)
    for i, chain in enumerate(sc.network.chains):
        assert np.array_equal(sc.disturbances.w_inv_means[i], chain.wbar_inv)
        assert np.array_equal(sc.disturbances.w_tr_means[i], chain.wbar_tr)


def test_benchmark_reference_truncates_to_network_size():
    assert benchmark_scenario(seed=0, N=3, n=1).network.reference_topology == (
        DEFAULT_REFERENCE
    )
    assert benchmark_scenario(seed=0, N=2, n=1).network.reference_topology == [
        (0, 1),
        (1, 0),
    ]
    assert benchmark_scenario(seed=0, N=1, n=1).network.reference_topology == []


def test_benchmark_failures_truncate_to_horizon():
    times = lambda sc: [ev.time for ev in sc.sim.failures]
    assert times(benchmark_scenario(seed=0, T=720)) == [240, 480]
    assert times(benchmark_scenario(seed=0, T=300)) == [240]
    assert times(benchmark_scenario(seed=0, T=100)) == []


def test_benchmark_rejects_degenerate_shape():
    with pytest.raises(ValueError):
        benchmark_scenario(seed=0, N=0)
    with pytest.raises(ValueError):
        benchmark_scenario(seed=0, n=0)


def test_benchmark_round_trips_through_config(tmp_path):
    path = tmp_path / "bench.toml"
    sc = benchmark_scenario(seed=1, N=2, n=2, T=300)
    write_config(sc, path)
    assert dump_config(load_config(path)) == dump_config(sc)
