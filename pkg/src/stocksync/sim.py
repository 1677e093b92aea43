"""Closed-loop network simulation under stochastic waste and demand.

The engine advances every chain in absolute coordinates (levels, not
deviations): each step applies any scheduled failures, measures the state,
computes orders through the active strategy, then updates inventories and
pipelines with that step's realized waste and demand.  Consensus error,
disturbance deviation, and the percentage-mean-absolute-error metrics are
recorded along the way.  Monte-Carlo evaluation runs paired realizations —
every strategy inside one realization consumes byte-identical initial
conditions, disturbance draws, and failure sites — and reduces in a fixed
order so results are reproducible bit-for-bit regardless of worker count.

Randomness is organized around one integer seed per realization
(``base_seed + index``).  Each realization splits its seed into three named
child streams, in this fixed order: initial conditions, failure sites,
disturbances.  Disturbance draws inside the third stream follow a documented
per-chain order (inventory waste, then transport waste, then demand), so
adding chains never reshuffles earlier chains' draws.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .model import NetworkSpec, chain_blocks, chain_step_blocks, consensus_projection
from .strategies import ControllerSet, MeasuredState, compute_orders

FAILURE_KINDS = ("transport-link", "inventory")


# ---------------------------------------------------------------------------
# disturbance model
# ---------------------------------------------------------------------------


@dataclass
class DisturbanceModel:
    """Means and shaping parameters of the stochastic waste/demand inputs.

    Per chain ``i``: per-stage inventory-waste means ``w_inv_means[i]``,
    per-pipeline transport-waste means ``w_tr_means[i]`` (both length ``n``),
    and seven daily demand means ``demand_daily_means[i]`` cycled with the
    day of the week.  Draws are normal with standard deviation
    ``rel_std * mean`` and are exponentially smoothed per signal.
    """

    w_inv_means: list
    w_tr_means: list
    demand_daily_means: list
    rel_std: float = 0.2
    alpha_waste: float = 0.5
    alpha_demand: float = 0.1
    steps_per_day: int = 24

    def __post_init__(self) -> None:
        self.w_inv_means = [np.asarray(m, dtype=float).ravel() for m in self.w_inv_means]
        self.w_tr_means = [np.asarray(m, dtype=float).ravel() for m in self.w_tr_means]
        self.demand_daily_means = [
            np.asarray(m, dtype=float).ravel() for m in self.demand_daily_means
        ]
        if not (len(self.w_inv_means) == len(self.w_tr_means) == len(self.demand_daily_means)):
            raise ValueError("per-chain mean lists must have equal length")
        for m in self.w_inv_means + self.w_tr_means + self.demand_daily_means:
            if np.any(m <= 0.0):
                raise ValueError("disturbance means must be positive")
        for d in self.demand_daily_means:
            if d.shape != (7,):
                raise ValueError("each chain needs exactly 7 daily demand means")
        for a in (self.alpha_waste, self.alpha_demand):
            if not 0.0 < a <= 1.0:
                raise ValueError("smoothing factors must lie in (0, 1]")
        if self.rel_std < 0.0:
            raise ValueError("rel_std must be nonnegative")
        if self.steps_per_day < 1:
            raise ValueError("steps_per_day must be at least 1")

    @property
    def N(self) -> int:
        return len(self.w_inv_means)


@dataclass
class DisturbanceRealization:
    """Smoothed per-step sequences: ``w_inv[i]``/``w_tr[i]`` of shape (T, n)
    and ``demand[i]`` of shape (T,)."""

    w_inv: list
    w_tr: list
    demand: list


def day_index(t: int, steps_per_day: int = 24) -> int:
    """Day-of-week slot for 1-based step ``t``: ``ceil(t / steps_per_day) % 7``."""
    return int(-(-t // steps_per_day) % 7)


def _smooth(raw: np.ndarray, alpha: float) -> np.ndarray:
    """Exponential smoothing along axis 0 with ``s[0] = raw[0]``."""
    if alpha == 1.0:
        return raw.copy()
    first = raw[:1]
    zi = (1.0 - alpha) * first
    out, _ = lfilter([alpha], [1.0, alpha - 1.0], raw, axis=0, zi=zi)
    return out


def generate_disturbances(
    dm: DisturbanceModel, T: int, rng: np.random.Generator
) -> DisturbanceRealization:
    """Draw and smooth every disturbance sequence for one realization.

    Draw order is fixed (per chain: inventory waste, transport waste,
    demand), making the output a pure function of the generator state.
    """
    if T < 1:
        raise ValueError("horizon must be at least one step")
    days = np.array([day_index(t, dm.steps_per_day) for t in range(1, T + 1)])
    w_inv, w_tr, demand = [], [], []
    for i in range(dm.N):
        mi = dm.w_inv_means[i]
        raw = rng.normal(mi, dm.rel_std * mi, size=(T, mi.size))
        w_inv.append(_smooth(raw, dm.alpha_waste))

        mt = dm.w_tr_means[i]
        raw = rng.normal(mt, dm.rel_std * mt, size=(T, mt.size))
        w_tr.append(_smooth(raw, dm.alpha_waste))

        md = dm.demand_daily_means[i][days]
        raw = rng.normal(md, dm.rel_std * md)
        demand.append(_smooth(raw.reshape(T, 1), dm.alpha_demand).ravel())
    return DisturbanceRealization(w_inv=w_inv, w_tr=w_tr, demand=demand)


# ---------------------------------------------------------------------------
# simulation configuration
# ---------------------------------------------------------------------------


@dataclass
class FailureEvent:
    """``targets`` sites of the given kind fail at step ``time`` (1-based):
    a transport-link failure empties the chosen pipeline, an inventory
    failure empties the chosen stock."""

    time: int
    kind: str
    targets: int

    def __post_init__(self) -> None:
        if self.kind not in FAILURE_KINDS:
            raise ValueError(f"kind must be one of {FAILURE_KINDS}")
        if self.time < 1:
            raise ValueError("failure time is a 1-based step index")
        if self.targets < 0:
            raise ValueError("targets must be nonnegative")


def default_failures() -> list:
    return [
        FailureEvent(time=240, kind="transport-link", targets=2),
        FailureEvent(time=480, kind="inventory", targets=4),
    ]


@dataclass
class SimConfig:
    T: int = 720
    seed: int = 0
    init_range: tuple = (100, 900)
    failures: list = field(default_factory=default_failures)
    xbar_norm: float = 500.0
    clamp: bool = False

    def __post_init__(self) -> None:
        if self.T < 1:
            raise ValueError("T must be at least 1")
        lo, hi = self.init_range
        if lo < 0 or hi < lo:
            raise ValueError("init_range must be nonnegative and ordered")
        if self.xbar_norm <= 0.0:
            raise ValueError("xbar_norm must be positive")
        for ev in self.failures:
            if ev.time > self.T:
                raise ValueError(f"failure at step {ev.time} lies beyond horizon {self.T}")


@dataclass
class Realization:
    """Everything random about one run, drawn up front so that several
    strategies can consume identical copies (paired comparison)."""

    seed: int
    x0: list
    pipe0: list
    disturbances: DisturbanceRealization
    failure_sites: list  # aligned with SimConfig.failures; entries are [(i, k), ...]


def draw_realization(
    network: NetworkSpec, sc: SimConfig, dm: DisturbanceModel, seed: int
) -> Realization:
    """Materialize one realization from its seed (see module docstring for
    the stream-splitting order)."""
    ss = np.random.SeedSequence(seed)
    init_rng, fail_rng, dist_rng = (np.random.default_rng(c) for c in ss.spawn(3))

    lo, hi = sc.init_range
    x0, pipe0 = [], []
    for chain in network.chains:
        x0.append(init_rng.integers(lo, hi + 1, size=chain.n).astype(float))
        pipe0.append(init_rng.integers(lo, hi + 1, size=chain.tau_total).astype(float))

    N, n = network.N, network.n
    sites_all = [(i, k) for i in range(N) for k in range(n)]
    failure_sites = []
    for ev in sc.failures:
        if ev.targets > len(sites_all):
            raise ValueError(f"cannot pick {ev.targets} distinct sites out of {len(sites_all)}")
        picks = fail_rng.choice(len(sites_all), size=ev.targets, replace=False)
        failure_sites.append([sites_all[int(p)] for p in picks])

    dist = generate_disturbances(dm, sc.T, dist_rng)
    return Realization(seed=seed, x0=x0, pipe0=pipe0, disturbances=dist, failure_sites=failure_sites)


# ---------------------------------------------------------------------------
# single-run simulation
# ---------------------------------------------------------------------------


@dataclass
class SimResult:
    """One closed-loop run: trajectories (step-indexed along axis 0),
    disturbance deviations, metrics, and the realized event log."""

    kind: str
    seed: int
    x: np.ndarray  # (T, N, n) inventory levels
    pipes: list  # per chain (T, tau_total) pipeline contents
    u: np.ndarray  # (T, N, n) orders
    y: np.ndarray  # (T, N, n) inventory errors (virtual outputs)
    z: np.ndarray  # (T, nN) consensus errors
    r: np.ndarray  # (T, N, n) disturbance deviations from design means
    pmae: np.ndarray  # (T,)
    cpmae: np.ndarray  # (T,)
    events: list
    diagnostics: list


def pmae_series(z: np.ndarray, nN: int, xbar_norm: float) -> np.ndarray:
    """Percentage mean absolute consensus error per step:
    ``100 * ||z(t)||_1 / (nN * xbar_norm)``."""
    if xbar_norm <= 0.0:
        raise ValueError("xbar_norm must be positive")
    if nN < 1:
        raise ValueError("nN must be positive")
    z = np.atleast_2d(np.asarray(z, dtype=float))
    return np.sum(np.abs(z), axis=1) * (100.0 / (nN * xbar_norm))


def cpmae_series(pmae: np.ndarray) -> np.ndarray:
    """Running time-average of a PMAE series."""
    p = np.asarray(pmae, dtype=float)
    return np.cumsum(p) / np.arange(1, p.size + 1)


def simulate(
    network: NetworkSpec,
    cs: ControllerSet,
    sc: SimConfig,
    dm: DisturbanceModel,
    realization: Realization | None = None,
) -> SimResult:
    """Run one closed-loop realization of the network under one strategy.

    Per step (1-based ``t``): scheduled failures strike first, then the
    strategy reads the (possibly damaged) state and issues orders, then every
    chain updates with this step's deliveries, waste, and demand.  Passing a
    prebuilt ``realization`` lets several strategies consume identical draws;
    otherwise one is drawn from ``sc.seed``.
    """
    N, n, T = network.N, network.n, sc.T
    if cs.N != N:
        raise ValueError(f"controller wired for {cs.N} chains, network has {N}")
    if dm.N != N:
        raise ValueError(f"disturbance model covers {dm.N} chains, network has {N}")
    real = realization if realization is not None else draw_realization(network, sc, dm, sc.seed)

    blocks = [chain_blocks(c) for c in network.chains]
    E = consensus_projection(N, n)
    w_inv_bar = [np.asarray(c.wbar_inv, dtype=float) for c in network.chains]
    w_tr_bar = [np.asarray(c.wbar_tr, dtype=float) for c in network.chains]
    d_bar = [float(c.dbar) for c in network.chains]
    taus = [np.concatenate(([0], np.cumsum(c.tau))).astype(int) for c in network.chains]

    by_time: dict = {}
    events = []
    for ev, sites in zip(sc.failures, real.failure_sites):
        by_time.setdefault(ev.time, []).append((ev.kind, sites))
        events.append({"time": ev.time, "kind": ev.kind, "sites": [list(s) for s in sites]})

    x = [xi.copy() for xi in real.x0]
    pipe = [pi.copy() for pi in real.pipe0]
    dist = real.disturbances

    x_traj = np.empty((T, N, n))
    u_traj = np.empty((T, N, n))
    y_traj = np.empty((T, N, n))
    r_traj = np.empty((T, N, n))
    pipe_traj = [np.empty((T, c.tau_total)) for c in network.chains]

    for step in range(T):
        t = step + 1
        for kind, sites in by_time.get(t, ()):  # failures strike before measurement
            for (i, k) in sites:
                if kind == "transport-link":
                    pipe[i][taus[i][k] : taus[i][k + 1]] = 0.0
                else:
                    x[i][k] = 0.0

        ms = MeasuredState(inventories=x, pipelines=pipe)
        orders = compute_orders(cs, ms)
        if sc.clamp:
            orders = [np.maximum(u, 0.0) for u in orders]

        for i in range(N):
            x_traj[step, i] = x[i]
            pipe_traj[i][step] = pipe[i]
            u_traj[step, i] = orders[i]
            y_traj[step, i] = x[i] - cs.x_targets[i]
            r_traj[step, i] = (
                (dist.w_tr[i][step] - w_tr_bar[i])
                + (dist.w_inv[i][step] - w_inv_bar[i])
            )
            r_traj[step, i, -1] += dist.demand[i][step] - d_bar[i]

        for i in range(N):
            x[i], pipe[i], _ = chain_step_blocks(
                blocks[i], x[i], pipe[i], orders[i],
                dist.w_inv[i][step], dist.w_tr[i][step], dist.demand[i][step],
            )

    z = y_traj.reshape(T, N * n) @ E.T
    pm = pmae_series(z, N * n, sc.xbar_norm)
    cpm = cpmae_series(pm)

    diagnostics = []
    for name, arr in (("inventory", x_traj), ("order", u_traj), ("consensus error", z)):
        if not np.all(np.isfinite(arr)):
            bad = int(np.argwhere(~np.isfinite(arr.reshape(T, -1)).all(axis=1))[0][0]) + 1
            diagnostics.append(f"non-finite {name} trajectory from step {bad}")
    return SimResult(
        kind=cs.kind,
        seed=real.seed,
        x=x_traj,
        pipes=pipe_traj,
        u=u_traj,
        y=y_traj,
        z=z,
        r=r_traj,
        pmae=pm,
        cpmae=cpm,
        events=events,
        diagnostics=diagnostics,
    )


def empirical_gain(sr: SimResult) -> float:
    """Realized energy ratio ``sum ||z||^2 / sum ||r||^2`` over the run."""
    num = float(np.sum(sr.z**2))
    den = float(np.sum(sr.r**2))
    if den == 0.0:
        raise ValueError("disturbance energy is zero; the gain ratio is undefined")
    return num / den


# ---------------------------------------------------------------------------
# Monte-Carlo aggregation
# ---------------------------------------------------------------------------


@dataclass
class MonteCarloResult:
    """Paired Monte-Carlo aggregate: per-strategy averaged PMAE profiles and
    their running means, plus the seed ledger that reproduces the study."""

    strategies: list
    R: int
    base_seed: int
    seeds: list
    T: int
    apmae: dict  # kind -> (T,)
    capmae: dict  # kind -> (T,)
    final_capmae: dict  # kind -> float


def _mc_one(args):
    network, controllers, sc, dm, seed = args
    real = draw_realization(network, sc, dm, seed)
    out = {}
    for kind, cs in controllers:
        sr = simulate(network, cs, sc, dm, realization=real)
        out[kind] = sr.pmae
    return seed, out


def monte_carlo(
    network: NetworkSpec,
    controllers,
    sc: SimConfig,
    dm: DisturbanceModel,
    R: int,
    base_seed: int = 0,
    jobs: int = 1,
) -> MonteCarloResult:
    """Evaluate strategies over ``R`` paired realizations.

    ``controllers`` maps strategy kind to a built :class:`ControllerSet`
    (dict or pair list; order is preserved in the result).  Realization ``r``
    uses seed ``base_seed + r`` and feeds every strategy the same draws.
    Aggregation always reduces in realization order, so any ``jobs`` count
    yields bit-identical results.
    """
    if R < 1:
        raise ValueError("need at least one realization")
    pairs = list(controllers.items()) if isinstance(controllers, dict) else list(controllers)
    if not pairs:
        raise ValueError("no strategies given")
    kinds = [k for k, _ in pairs]
    if len(set(kinds)) != len(kinds):
        raise ValueError("duplicate strategy kinds")

    seeds = [base_seed + r for r in range(R)]
    tasks = [(network, pairs, sc, dm, s) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            raw = list(pool.map(_mc_one, tasks, chunksize=max(1, R // (4 * jobs))))
    else:
        raw = [_mc_one(t) for t in tasks]
    by_seed = dict(raw)

    apmae, capmae, final = {}, {}, {}
    for kind in kinds:
        stack = np.stack([by_seed[s][kind] for s in seeds], axis=0)
        a = np.mean(stack, axis=0)
        c = cpmae_series(a)
        apmae[kind], capmae[kind], final[kind] = a, c, float(c[-1])
    return MonteCarloResult(
        strategies=kinds,
        R=R,
        base_seed=base_seed,
        seeds=seeds,
        T=sc.T,
        apmae=apmae,
        capmae=capmae,
        final_capmae=final,
    )


# ---------------------------------------------------------------------------
# file export
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    return repr(float(v))


def simresult_to_csv(sr: SimResult, path) -> None:
    """One row per step.  Columns: ``t``; ``x_i_k``, ``u_i_k``, ``y_i_k``,
    ``r_i_k`` per chain ``i`` and stage ``k`` (1-based); ``pipe_i_s`` per
    flat pipeline slot ``s`` (stage delay lines concatenated, 1-based);
    ``z_j``; ``pmae``; ``cpmae``."""
    T, N, n = sr.x.shape
    header = ["t"]
    for name in ("x", "u", "y", "r"):
        header += [f"{name}_{i+1}_{k+1}" for i in range(N) for k in range(n)]
    for i, p in enumerate(sr.pipes):
        tt = p.shape[1]
        header += [f"pipe_{i+1}_{s+1}" for s in range(tt)]
    header += [f"z_{j+1}" for j in range(sr.z.shape[1])] + ["pmae", "cpmae"]

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for step in range(T):
            row = [str(step + 1)]
            for arr in (sr.x, sr.u, sr.y, sr.r):
                row += [_fmt(v) for v in arr[step].ravel()]
            for p in sr.pipes:
                row += [_fmt(v) for v in p[step]]
            row += [_fmt(v) for v in sr.z[step]]
            row += [_fmt(sr.pmae[step]), _fmt(sr.cpmae[step])]
            w.writerow(row)


def montecarlo_to_csv(mcr: MonteCarloResult, path) -> None:
    """One row per step; per strategy one APMAE and one CAPMAE column."""
    header = ["t"]
    for kind in mcr.strategies:
        header += [f"apmae_{kind}", f"capmae_{kind}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for step in range(mcr.T):
            row = [str(step + 1)]
            for kind in mcr.strategies:
                row += [_fmt(mcr.apmae[kind][step]), _fmt(mcr.capmae[kind][step])]
            w.writerow(row)


def montecarlo_series_to_csv(mcr: MonteCarloResult, kind: str, path) -> None:
    """One strategy's series: columns ``t``, ``apmae``, ``capmae``."""
    if kind not in mcr.apmae:
        raise ValueError(f"no series for strategy {kind!r}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "apmae", "capmae"])
        for step in range(mcr.T):
            w.writerow(
                [str(step + 1), _fmt(mcr.apmae[kind][step]), _fmt(mcr.capmae[kind][step])]
            )


def montecarlo_summary(mcr: MonteCarloResult, sc: SimConfig | None = None) -> dict:
    """JSON-ready summary: final CAPMAE per strategy, the seed ledger, and an
    echo of the configuration."""
    out = {
        "strategies": list(mcr.strategies),
        "R": mcr.R,
        "base_seed": mcr.base_seed,
        "seeds": list(mcr.seeds),
        "T": mcr.T,
        "final_capmae": {k: float(v) for k, v in mcr.final_capmae.items()},
    }
    if sc is not None:
        out["config"] = {
            "T": sc.T,
            "init_range": list(sc.init_range),
            "xbar_norm": sc.xbar_norm,
            "clamp": sc.clamp,
            "failures": [
                {"time": ev.time, "kind": ev.kind, "targets": ev.targets}
                for ev in sc.failures
            ],
        }
    return out


def montecarlo_to_json(mcr: MonteCarloResult, path, sc: SimConfig | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(montecarlo_summary(mcr, sc), fh, indent=2, sort_keys=True)
        fh.write("\n")
