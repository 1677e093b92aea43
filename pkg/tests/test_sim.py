import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stocksync.codesign import codesign_global, default_rho_grid, design_local_improved
from stocksync.model import (
    ChainSpec,
    NetworkSpec,
    build_chain_error_dynamics,
    consensus_projection,
    steady_state,
)
from stocksync.sim import (
    DisturbanceModel,
    FailureEvent,
    Realization,
    SimConfig,
    day_index,
    cpmae_series,
    draw_realization,
    empirical_gain,
    generate_disturbances,
    monte_carlo,
    montecarlo_summary,
    montecarlo_to_csv,
    montecarlo_to_json,
    pmae_series,
    simresult_to_csv,
    simulate,
)
from stocksync.strategies import build_strategy


def _chain(n, tau, rho=0.1):
    return ChainSpec(
        n=n,
        tau=list(tau),
        rho=[rho] * n,
        xbar=[500.0] * n,
        wbar_inv=[20.0] * n,
        wbar_tr=[15.0] * n,
        dbar=30.0,
    )


def _matching_dm(network, rel_std=0.2, **kw):
    """Disturbance model whose means coincide with the chains' design means."""
    return DisturbanceModel(
        w_inv_means=[c.wbar_inv for c in network.chains],
        w_tr_means=[c.wbar_tr for c in network.chains],
        demand_daily_means=[[c.dbar] * 7 for c in network.chains],
        rel_std=rel_std,
        **kw,
    )


def _equilibrium_realization(network, sc, dm, seed=0):
    """Draw a realization, then pin the initial state to the equilibrium."""
    real = draw_realization(network, sc, dm, seed)
    for i, chain in enumerate(network.chains):
        ss = steady_state(chain)
        real.x0[i] = ss.xbar.copy()
        real.pipe0[i] = ss.pipe.copy()
    return real


@pytest.fixture(scope="module")
def net2():
    return NetworkSpec(
        chains=[_chain(1, [1]), _chain(1, [2])],
        reference_topology=[(0, 1), (1, 0)],
    )


@pytest.fixture(scope="module")
def designed2(net2):
    eds = [build_chain_error_dynamics(c) for c in net2.chains]
    locals_ = [
        design_local_improved(ed, N=net2.N, rho_grid=default_rho_grid(5)) for ed in eds
    ]
    gd = codesign_global(net2, eds, locals_, constrain_to_reference=False)
    return locals_, gd


@pytest.fixture(scope="module")
def dcc2(net2, designed2):
    locals_, gd = designed2
    return build_strategy("DCC-U", net2, local_designs=locals_, global_design=gd)


# ---------------------------------------------------------------------------
# day mapping and disturbance generation
# ---------------------------------------------------------------------------


def test_day_index_frozen_values():
    # 1-based hours, 24 per day, week cycles through ceil(t/24) mod 7
    assert day_index(1) == 1
    assert day_index(24) == 1
    assert day_index(25) == 2
    assert day_index(144) == 6
    assert day_index(145) == 0
    assert day_index(168) == 0
    assert day_index(169) == 1
    assert day_index(3, steps_per_day=1) == 3


@given(st.integers(min_value=1, max_value=10**6), st.integers(min_value=1, max_value=100))
@settings(max_examples=60, deadline=None)
def test_day_index_weekly_periodic(t, spd):
    assert day_index(t + 7 * spd, spd) == day_index(t, spd)
    assert 0 <= day_index(t, spd) < 7


def test_alpha_one_smoothing_is_identity():
    dm = DisturbanceModel(
        w_inv_means=[[20.0, 40.0]],
        w_tr_means=[[15.0, 30.0]],
        demand_daily_means=[[10, 20, 30, 40, 50, 60, 70]],
        rel_std=0.3,
        alpha_waste=1.0,
        alpha_demand=1.0,
    )
    T = 97
    out = generate_disturbances(dm, T, np.random.default_rng(42))

    rng = np.random.default_rng(42)
    days = np.array([day_index(t) for t in range(1, T + 1)])
    mi = np.array([20.0, 40.0])
    raw_inv = rng.normal(mi, 0.3 * mi, size=(T, 2))
    mt = np.array([15.0, 30.0])
    raw_tr = rng.normal(mt, 0.3 * mt, size=(T, 2))
    md = np.array([10, 20, 30, 40, 50, 60, 70], dtype=float)[days]
    raw_d = rng.normal(md, 0.3 * md)

    assert np.array_equal(out.w_inv[0], raw_inv)
    assert np.array_equal(out.w_tr[0], raw_tr)
    assert np.array_equal(out.demand[0], raw_d)


def test_zero_std_draws_equal_means():
    dm = DisturbanceModel(
        w_inv_means=[[20.0, 40.0]],
        w_tr_means=[[15.0, 30.0]],
        demand_daily_means=[[30.0] * 7],
        rel_std=0.0,
    )
    T = 200
    out = generate_disturbances(dm, T, np.random.default_rng(0))
    # constant-mean signals: smoothing is a no-op, every draw is the mean
    assert np.allclose(out.w_inv[0], [20.0, 40.0], rtol=0, atol=0)
    assert np.allclose(out.w_tr[0], [15.0, 30.0], rtol=0, atol=0)
    assert np.allclose(out.demand[0], 30.0, rtol=0, atol=0)


def test_zero_std_weekly_pattern_and_smoother_recurrence():
    pattern = np.array([10, 20, 30, 40, 50, 60, 70], dtype=float)
    dm = DisturbanceModel(
        w_inv_means=[[20.0]],
        w_tr_means=[[15.0]],
        demand_daily_means=[pattern],
        rel_std=0.0,
        alpha_demand=1.0,
    )
    T = 24 * 7 * 2 + 5
    out = generate_disturbances(dm, T, np.random.default_rng(1))
    days = np.array([day_index(t) for t in range(1, T + 1)])
    assert np.array_equal(out.demand[0], pattern[days])

    # with alpha < 1 the output must satisfy the smoothing recurrence
    # s(t) = alpha * raw(t) + (1 - alpha) * s(t-1), seeded with s(0) = raw(0)
    dm_s = DisturbanceModel(
        w_inv_means=[[20.0]],
        w_tr_means=[[15.0]],
        demand_daily_means=[pattern],
        rel_std=0.0,
        alpha_demand=0.1,
    )
    sm = generate_disturbances(dm_s, T, np.random.default_rng(1)).demand[0]
    raw = pattern[days]
    expect = np.empty(T)
    expect[0] = raw[0]
    for t in range(1, T):
        expect[t] = 0.1 * raw[t] + 0.9 * expect[t - 1]
    assert np.allclose(sm, expect, rtol=0, atol=1e-12)


def test_demand_sample_mean_tracks_pattern_weighted_mean():
    pattern = np.array([80.0, 95.0, 110.0, 125.0, 140.0, 155.0, 170.0])
    dm = DisturbanceModel(
        w_inv_means=[[20.0]],
        w_tr_means=[[15.0]],
        demand_daily_means=[pattern],
    )
    T = 100_000
    out = generate_disturbances(dm, T, np.random.default_rng(7))
    days = np.array([day_index(t) for t in range(1, T + 1)])
    expected = float(np.mean(pattern[days]))
    observed = float(np.mean(out.demand[0]))
    assert abs(observed - expected) <= 0.01 * expected


# ---------------------------------------------------------------------------
# simulate: fixed points, decay, degenerate network
# ---------------------------------------------------------------------------


def test_equilibrium_start_stays_at_target(net2):
    dm = _matching_dm(net2, rel_std=0.0)
    sc = SimConfig(T=200, failures=[])
    cs = build_strategy("LSSC", net2)
    real = _equilibrium_realization(net2, sc, dm)
    sr = simulate(net2, cs, sc, dm, realization=real)
    assert np.max(np.abs(sr.x - 500.0)) <= 1e-9
    assert np.max(sr.pmae) <= 1e-12
    assert sr.diagnostics == []


def test_single_chain_network_has_zero_consensus_error():
    net = NetworkSpec(chains=[_chain(3, [1, 2, 1])])
    dm = _matching_dm(net)
    sc = SimConfig(T=150, failures=[], seed=5)
    cs = build_strategy("LSSC", net)
    sr = simulate(net, cs, sc, dm)
    assert np.all(sr.z == 0.0)
    assert np.all(sr.pmae == 0.0)
    # zero output with nonzero disturbance energy: the gain ratio is exactly 0
    assert empirical_gain(sr) == 0.0


def test_single_chain_geometric_decay_after_flush():
    chain = _chain(2, [2, 3])
    net = NetworkSpec(chains=[chain])
    dm = _matching_dm(net, rel_std=0.0)
    sc = SimConfig(T=80, failures=[], seed=3)
    cs = build_strategy("LSSC", net)
    real = draw_realization(net, sc, dm, 3)
    real.x0 = [np.array([700.0, 350.0])]
    sr = simulate(net, cs, sc, dm, realization=real)

    err = sr.x[:, 0, :] - 500.0
    t0 = max(chain.tau)  # random pipeline content fully replaced by then
    for t in range(t0, sc.T - 1):
        assert np.allclose(err[t + 1], 0.9 * err[t], rtol=1e-12, atol=1e-12)
    horizon = np.arange(sc.T - t0)
    closed_form = err[t0] * (0.9 ** horizon)[:, None]
    assert np.allclose(err[t0:], closed_form, rtol=1e-9, atol=1e-9)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def test_pmae_formula_frozen_examples():
    assert np.all(pmae_series(np.zeros((4, 6)), 6, 500.0) == 0.0)
    # 12 inventories, all deviations of magnitude 50, normalized by 500:
    # (sum |z| / 12) * 100 / 500 = 50 * 0.2 = 10 percent
    z = np.full((5, 12), 50.0)
    z[:, ::2] *= -1.0
    assert np.allclose(pmae_series(z, 12, 500.0), 10.0, rtol=0, atol=1e-12)
    assert np.allclose(cpmae_series(np.full(9, 3.25)), 3.25, rtol=0, atol=0)
    with pytest.raises(ValueError):
        pmae_series(z, 12, 0.0)
    with pytest.raises(ValueError):
        pmae_series(z, 0, 500.0)


@given(st.floats(min_value=0.0, max_value=1e6, allow_nan=False))
@settings(max_examples=40, deadline=None)
def test_pmae_scales_linearly(scale):
    z = np.arange(24, dtype=float).reshape(2, 12) - 11.0
    base = pmae_series(z, 12, 500.0)
    scaled = pmae_series(scale * z, 12, 500.0)
    assert np.allclose(scaled, scale * base, rtol=1e-12, atol=1e-9)


def test_metrics_recomputable_from_stored_trajectories(net2):
    dm = _matching_dm(net2)
    sc = SimConfig(T=120, failures=[], seed=17)
    cs = build_strategy("LSSC", net2)
    sr = simulate(net2, cs, sc, dm)

    E = consensus_projection(net2.N, net2.n)
    z_again = sr.y.reshape(sc.T, -1) @ E.T
    assert np.array_equal(z_again, sr.z)
    assert np.array_equal(pmae_series(sr.z, net2.N * net2.n, sc.xbar_norm), sr.pmae)
    assert np.array_equal(cpmae_series(sr.pmae), sr.cpmae)
    assert np.array_equal(sr.y, sr.x - 500.0)


# ---------------------------------------------------------------------------
# empirical gain against the synthesis certificate
# ---------------------------------------------------------------------------


def test_empirical_gain_respects_certificate_from_equilibrium(net2, designed2, dcc2):
    _, gd = designed2
    dm = _matching_dm(net2)
    sc = SimConfig(T=400, failures=[])
    real = _equilibrium_realization(net2, sc, dm, seed=11)
    sr = simulate(net2, dcc2, sc, dm, realization=real)
    assert sr.diagnostics == []
    assert empirical_gain(sr) <= gd.gamma_tilde * (1.0 + 1e-6)


def test_empirical_gain_zero_disturbance_is_an_error(net2):
    dm = _matching_dm(net2, rel_std=0.0)
    sc = SimConfig(T=50, failures=[])
    cs = build_strategy("LSSC", net2)
    real = _equilibrium_realization(net2, sc, dm)
    sr = simulate(net2, cs, sc, dm, realization=real)
    assert np.all(sr.r == 0.0)
    with pytest.raises(ValueError):
        empirical_gain(sr)


# ---------------------------------------------------------------------------
# realizations, pairing, failures
# ---------------------------------------------------------------------------


def test_paired_strategies_consume_identical_draws(net2, designed2):
    locals_, _ = designed2
    dm = _matching_dm(net2)
    sc = SimConfig(T=90, seed=23, failures=[FailureEvent(time=30, kind="inventory", targets=1)])
    real = draw_realization(net2, sc, dm, 23)
    a = simulate(net2, build_strategy("LSSC", net2), sc, dm, realization=real)
    b = simulate(net2, build_strategy("LSFC", net2, local_designs=locals_), sc, dm, realization=real)
    assert np.array_equal(a.r, b.r)
    assert np.array_equal(a.x[0], b.x[0])
    assert a.events == b.events
    assert a.seed == b.seed == 23


def test_realization_stream_is_deterministic(net2):
    dm = _matching_dm(net2)
    sc = SimConfig(T=40, failures=[])
    r1 = draw_realization(net2, sc, dm, 99)
    r2 = draw_realization(net2, sc, dm, 99)
    for a, b in zip(r1.x0 + r1.pipe0, r2.x0 + r2.pipe0):
        assert np.array_equal(a, b)
    for a, b in zip(r1.disturbances.demand, r2.disturbances.demand):
        assert np.array_equal(a, b)
    assert r1.failure_sites == r2.failure_sites
    # initial conditions are integers inside the configured range
    for arr in r1.x0 + r1.pipe0:
        assert np.all(arr == np.round(arr))
        assert np.all((arr >= 100) & (arr <= 900))


def test_failures_strike_before_measurement():
    net = NetworkSpec(chains=[_chain(2, [1, 2]), _chain(2, [2, 1])])
    dm = _matching_dm(net)
    sc = SimConfig(
        T=20,
        failures=[
            FailureEvent(time=5, kind="transport-link", targets=1),
            FailureEvent(time=9, kind="inventory", targets=2),
        ],
    )
    cs = build_strategy("LSSC", net)
    real = draw_realization(net, sc, dm, 31)
    real.failure_sites = [[(0, 1)], [(0, 0), (1, 1)]]
    sr = simulate(net, cs, sc, dm, realization=real)

    # chain 0, stage 1 occupies the last two pipeline slots (tau = [1, 2])
    assert np.all(sr.pipes[0][4, 1:3] == 0.0)
    assert np.any(sr.pipes[0][3, 1:3] != 0.0)
    assert sr.x[8, 0, 0] == 0.0
    assert sr.x[8, 1, 1] == 0.0
    assert sr.events == [
        {"time": 5, "kind": "transport-link", "sites": [[0, 1]]},
        {"time": 9, "kind": "inventory", "sites": [[0, 0], [1, 1]]},
    ]
    # failures are state jumps, not disturbances: r keeps its modeled value
    dist = real.disturbances
    expect_r = (dist.w_tr[0][8] - 15.0) + (dist.w_inv[0][8] - 20.0)
    expect_r[-1] += dist.demand[0][8] - 30.0
    assert np.allclose(sr.r[8, 0], expect_r, rtol=0, atol=1e-12)


def test_link_level_conservation(net2):
    # whatever enters a pipeline leaves it unchanged tau steps later: the
    # order placed at step s is the head slot measured at step s + tau
    dm = _matching_dm(net2)
    sc = SimConfig(T=60, failures=[], seed=41)
    cs = build_strategy("LSSC", net2)
    sr = simulate(net2, cs, sc, dm)
    for i, chain in enumerate(net2.chains):
        offsets = np.concatenate(([0], np.cumsum(chain.tau))).astype(int)
        for k, tau_k in enumerate(chain.tau):
            head = offsets[k]
            for s in range(sc.T - tau_k):
                assert sr.pipes[i][s + tau_k, head] == sr.u[s, i, k]


def test_clamped_orders_are_nonnegative(net2):
    dm = _matching_dm(net2)
    sc = SimConfig(T=100, failures=[], seed=2, clamp=True)
    cs = build_strategy("LSSC", net2)
    real = draw_realization(net2, sc, dm, 2)
    sr = simulate(net2, cs, sc, dm, realization=real)
    assert np.all(sr.u >= 0.0)


# ---------------------------------------------------------------------------
# Monte-Carlo aggregation
# ---------------------------------------------------------------------------


def test_monte_carlo_single_realization_equals_pmae(net2):
    dm = _matching_dm(net2)
    sc = SimConfig(T=70, failures=[])
    cs = build_strategy("LSSC", net2)
    mcr = monte_carlo(net2, {"LSSC": cs}, sc, dm, R=1, base_seed=13)
    real = draw_realization(net2, sc, dm, 13)
    sr = simulate(net2, cs, sc, dm, realization=real)
    assert np.array_equal(mcr.apmae["LSSC"], sr.pmae)
    assert np.array_equal(mcr.capmae["LSSC"], sr.cpmae)
    assert mcr.final_capmae["LSSC"] == sr.cpmae[-1]
    assert mcr.seeds == [13]


def test_monte_carlo_is_bitwise_deterministic(net2, designed2):
    locals_, _ = designed2
    dm = _matching_dm(net2)
    sc = SimConfig(T=50, failures=[FailureEvent(time=20, kind="inventory", targets=1)])
    controllers = {
        "LSSC": build_strategy("LSSC", net2),
        "LSFC": build_strategy("LSFC", net2, local_designs=locals_),
    }
    a = monte_carlo(net2, controllers, sc, dm, R=4, base_seed=5)
    b = monte_carlo(net2, controllers, sc, dm, R=4, base_seed=5)
    for kind in controllers:
        assert np.array_equal(a.apmae[kind], b.apmae[kind])
        assert np.array_equal(a.capmae[kind], b.capmae[kind])
    assert a.final_capmae == b.final_capmae
    assert a.seeds == [5, 6, 7, 8]
    # APMAE really is the realization mean of PMAE
    stack = []
    for seed in a.seeds:
        real = draw_realization(net2, sc, dm, seed)
        stack.append(simulate(net2, controllers["LSSC"], sc, dm, realization=real).pmae)
    assert np.array_equal(np.mean(np.stack(stack), axis=0), a.apmae["LSSC"])


def test_monte_carlo_worker_count_does_not_change_bytes(net2, tmp_path):
    dm = _matching_dm(net2)
    sc = SimConfig(T=40, failures=[FailureEvent(time=10, kind="transport-link", targets=1)])
    controllers = {"LSSC": build_strategy("LSSC", net2)}
    serial = monte_carlo(net2, controllers, sc, dm, R=6, base_seed=0, jobs=1)
    parallel = monte_carlo(net2, controllers, sc, dm, R=6, base_seed=0, jobs=2)
    p1, p2 = tmp_path / "serial.csv", tmp_path / "parallel.csv"
    montecarlo_to_csv(serial, p1)
    montecarlo_to_csv(parallel, p2)
    assert p1.read_bytes() == p2.read_bytes()
    j1, j2 = tmp_path / "serial.json", tmp_path / "parallel.json"
    montecarlo_to_json(serial, j1, sc)
    montecarlo_to_json(parallel, j2, sc)
    assert j1.read_bytes() == j2.read_bytes()


def test_monte_carlo_input_validation(net2):
    dm = _matching_dm(net2)
    sc = SimConfig(T=10, failures=[])
    cs = build_strategy("LSSC", net2)
    with pytest.raises(ValueError):
        monte_carlo(net2, {"LSSC": cs}, sc, dm, R=0)
    with pytest.raises(ValueError):
        monte_carlo(net2, [], sc, dm, R=1)
    with pytest.raises(ValueError):
        monte_carlo(net2, [("LSSC", cs), ("LSSC", cs)], sc, dm, R=1)


def test_certified_design_stays_bounded_across_seeds(net2, dcc2):
    dm = _matching_dm(net2)
    sc = SimConfig(T=720, failures=[])
    for seed in range(200):
        real = draw_realization(net2, sc, dm, seed)
        sr = simulate(net2, dcc2, sc, dm, realization=real)
        assert sr.diagnostics == []
        assert np.all(np.isfinite(sr.pmae))
        assert sr.pmae.max() < 1e3


# ---------------------------------------------------------------------------
# export formats
# ---------------------------------------------------------------------------


def test_simresult_csv_schema_and_determinism(net2, tmp_path):
    dm = _matching_dm(net2)
    sc = SimConfig(T=25, seed=3, failures=[])
    cs = build_strategy("LSSC", net2)
    real = draw_realization(net2, sc, dm, 3)
    sr = simulate(net2, cs, sc, dm, realization=real)

    p1, p2 = tmp_path / "run1.csv", tmp_path / "run2.csv"
    simresult_to_csv(sr, p1)
    simresult_to_csv(sr, p2)
    assert p1.read_bytes() == p2.read_bytes()

    with open(p1) as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    expected = ["t"]
    for name in ("x", "u", "y", "r"):
        expected += [f"{name}_{i}_1" for i in (1, 2)]
    expected += ["pipe_1_1", "pipe_2_1", "pipe_2_2", "z_1", "z_2", "pmae", "cpmae"]
    assert header == expected
    assert len(body) == sc.T
    assert body[0][0] == "1"
    assert float(body[0][1]) == sr.x[0, 0, 0]
    assert float(body[-1][-1]) == sr.cpmae[-1]


def test_montecarlo_exports_round_trip(net2, tmp_path):
    dm = _matching_dm(net2)
    sc = SimConfig(T=30, failures=[FailureEvent(time=12, kind="transport-link", targets=1)])
    controllers = {"LSSC": build_strategy("LSSC", net2)}
    mcr = monte_carlo(net2, controllers, sc, dm, R=2, base_seed=9)

    cpath = tmp_path / "mc.csv"
    montecarlo_to_csv(mcr, cpath)
    with open(cpath) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "apmae_LSSC", "capmae_LSSC"]
    assert len(rows) == sc.T + 1
    assert float(rows[-1][2]) == mcr.final_capmae["LSSC"]

    jpath = tmp_path / "mc.json"
    montecarlo_to_json(mcr, jpath, sc)
    payload = json.loads(jpath.read_text())
    assert payload["seeds"] == [9, 10]
    assert payload["R"] == 2
    assert payload["final_capmae"]["LSSC"] == mcr.final_capmae["LSSC"]
    assert payload["config"]["T"] == 30
    assert payload["config"]["failures"][0]["kind"] == "transport-link"
    assert jpath.read_text().endswith("\n")

    summary = montecarlo_summary(mcr)
    assert "config" not in summary
    assert summary["strategies"] == ["LSSC"]


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def test_disturbance_model_validation():
    good = dict(
        w_inv_means=[[20.0]], w_tr_means=[[15.0]], demand_daily_means=[[30.0] * 7]
    )
    DisturbanceModel(**good)
    with pytest.raises(ValueError, match="equal length"):
        DisturbanceModel(
            w_inv_means=[[20.0], [20.0]],
            w_tr_means=[[15.0]],
            demand_daily_means=[[30.0] * 7],
        )
    with pytest.raises(ValueError, match="positive"):
        DisturbanceModel(**{**good, "w_inv_means": [[0.0]]})
    with pytest.raises(ValueError, match="7 daily"):
        DisturbanceModel(**{**good, "demand_daily_means": [[30.0] * 6]})
    for alpha in (0.0, 1.2):
        with pytest.raises(ValueError, match="smoothing"):
            DisturbanceModel(**{**good, "alpha_waste": alpha})
    with pytest.raises(ValueError, match="rel_std"):
        DisturbanceModel(**{**good, "rel_std": -0.1})
    with pytest.raises(ValueError, match="steps_per_day"):
        DisturbanceModel(**{**good, "steps_per_day": 0})
    with pytest.raises(ValueError):
        generate_disturbances(DisturbanceModel(**good), 0, np.random.default_rng(0))


def test_failure_and_config_validation():
    with pytest.raises(ValueError):
        FailureEvent(time=10, kind="meteor", targets=1)
    with pytest.raises(ValueError):
        FailureEvent(time=0, kind="inventory", targets=1)
    with pytest.raises(ValueError):
        FailureEvent(time=10, kind="inventory", targets=-1)
    with pytest.raises(ValueError):
        SimConfig(T=0)
    with pytest.raises(ValueError):
        SimConfig(init_range=(-5, 100))
    with pytest.raises(ValueError):
        SimConfig(init_range=(900, 100))
    with pytest.raises(ValueError):
        SimConfig(xbar_norm=0.0)
    with pytest.raises(ValueError, match="beyond horizon"):
        SimConfig(T=100, failures=[FailureEvent(time=240, kind="inventory", targets=1)])


def test_simulate_dimension_mismatches(net2):
    single = NetworkSpec(chains=[_chain(1, [1])])
    dm2 = _matching_dm(net2)
    sc = SimConfig(T=10, failures=[])
    cs1 = build_strategy("LSSC", single)
    with pytest.raises(ValueError, match="controller wired"):
        simulate(net2, cs1, sc, dm2)
    cs2 = build_strategy("LSSC", net2)
    dm1 = _matching_dm(single)
    with pytest.raises(ValueError, match="disturbance model"):
        simulate(net2, cs2, sc, dm1)
    too_many = SimConfig(T=10, failures=[FailureEvent(time=5, kind="inventory", targets=9)])
    with pytest.raises(ValueError, match="distinct sites"):
        draw_realization(net2, too_many, dm2, 0)
