"""Strict TOML configuration for scenarios.

The file mirrors the domain types section by section (``[network]`` with
``[[network.chain]]`` tables, ``[disturbances]``, ``[sim]`` with
``[[sim.failures]]`` tables).  Unknown keys anywhere are hard errors — a
misspelled control parameter must never be silently ignored — and every
value is re-validated by the domain constructors on load.  ``dump_config``
and ``load_config`` round-trip exactly (floats are written with ``repr``).
"""

from __future__ import annotations

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - version dependent
    import tomli as tomllib

import numpy as np

from .model import ChainSpec, NetworkSpec, validate_network
from .scenario import Scenario
from .sim import DisturbanceModel, FailureEvent, SimConfig


class ConfigError(Exception):
    """A configuration file is malformed, inconsistent, or has unknown keys."""


_NETWORK_KEYS = {
    "gamma_bar",
    "c0",
    "cost_in_reference",
    "cost_outside",
    "reference_topology",
    "cost",
    "chain",
}
_CHAIN_KEYS = {"tau", "rho", "xbar", "wbar_inv", "wbar_tr", "dbar"}
_DISTURBANCE_KEYS = {
    "rel_std",
    "alpha_waste",
    "alpha_demand",
    "steps_per_day",
    "w_inv_means",
    "w_tr_means",
    "demand_daily_means",
}
_SIM_KEYS = {"T", "seed", "init_range", "xbar_norm", "clamp", "failures"}
_FAILURE_KEYS = {"time", "kind", "targets"}


def _check_keys(table: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in [{where}]")


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing required key '{key}' in [{where}]")
    return table[key]


def load_config(path) -> Scenario:
    """Parse and validate a scenario configuration file."""
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return scenario_from_dict(data)


def scenario_from_dict(data: dict) -> Scenario:
    _check_keys(data, {"network", "disturbances", "sim"}, "top level")

    net_tbl = _require(data, "network", "top level")
    _check_keys(net_tbl, _NETWORK_KEYS, "network")
    chain_tbls = _require(net_tbl, "chain", "network")
    if not isinstance(chain_tbls, list) or not chain_tbls:
        raise ConfigError("[[network.chain]] needs at least one table")

    chains = []
    for idx, tbl in enumerate(chain_tbls):
        where = f"network.chain #{idx + 1}"
        _check_keys(tbl, _CHAIN_KEYS, where)
        tau = [int(t) for t in _require(tbl, "tau", where)]
        n = len(tau)
        try:
            chains.append(
                ChainSpec(
                    n=n,
                    tau=tau,
                    rho=[float(r) for r in _require(tbl, "rho", where)],
                    xbar=[float(v) for v in _require(tbl, "xbar", where)],
                    wbar_inv=[float(v) for v in _require(tbl, "wbar_inv", where)],
                    wbar_tr=[float(v) for v in _require(tbl, "wbar_tr", where)],
                    dbar=float(_require(tbl, "dbar", where)),
                )
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value in [{where}]: {exc}") from exc

    reference = [
        (int(j), int(i)) for j, i in net_tbl.get("reference_topology", [])
    ]
    cost = net_tbl.get("cost")
    network = NetworkSpec(
        chains=chains,
        gamma_bar=float(net_tbl.get("gamma_bar", 1.0e4)),
        c0=float(net_tbl.get("c0", 1.0)),
        reference_topology=reference,
        cost_in_reference=float(net_tbl.get("cost_in_reference", 1.0)),
        cost_outside=float(net_tbl.get("cost_outside", 20.0)),
        cost=np.asarray(cost, dtype=float) if cost is not None else None,
    )
    try:
        validate_network(network)
    except ValueError as exc:
        raise ConfigError(f"bad value in [network]: {exc}") from exc

    dist_tbl = data.get("disturbances", {})
    _check_keys(dist_tbl, _DISTURBANCE_KEYS, "disturbances")
    try:
        dm = DisturbanceModel(
            w_inv_means=dist_tbl.get("w_inv_means", [c.wbar_inv for c in chains]),
            w_tr_means=dist_tbl.get("w_tr_means", [c.wbar_tr for c in chains]),
            demand_daily_means=dist_tbl.get(
                "demand_daily_means", [[c.dbar] * 7 for c in chains]
            ),
            rel_std=float(dist_tbl.get("rel_std", 0.2)),
            alpha_waste=float(dist_tbl.get("alpha_waste", 0.5)),
            alpha_demand=float(dist_tbl.get("alpha_demand", 0.1)),
            steps_per_day=int(dist_tbl.get("steps_per_day", 24)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad value in [disturbances]: {exc}") from exc
    if dm.N != len(chains):
        raise ConfigError(
            f"[disturbances] covers {dm.N} chains, [network] defines {len(chains)}"
        )

    sim_tbl = data.get("sim", {})
    _check_keys(sim_tbl, _SIM_KEYS, "sim")
    failures = []
    for idx, tbl in enumerate(sim_tbl.get("failures", [])):
        where = f"sim.failures #{idx + 1}"
        _check_keys(tbl, _FAILURE_KEYS, where)
        try:
            failures.append(
                FailureEvent(
                    time=int(_require(tbl, "time", where)),
                    kind=str(_require(tbl, "kind", where)),
                    targets=int(_require(tbl, "targets", where)),
                )
            )
        except ValueError as exc:
            raise ConfigError(f"bad value in [{where}]: {exc}") from exc
    try:
        sc = SimConfig(
            T=int(sim_tbl.get("T", 720)),
            seed=int(sim_tbl.get("seed", 0)),
            init_range=tuple(int(v) for v in sim_tbl.get("init_range", (100, 900))),
            failures=failures,
            xbar_norm=float(sim_tbl.get("xbar_norm", 500.0)),
            clamp=bool(sim_tbl.get("clamp", False)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad value in [sim]: {exc}") from exc

    return Scenario(network=network, disturbances=dm, sim=sc, seed=sc.seed)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return repr(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(v, np.ndarray):
        return _toml_value(v.tolist())
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v).__name__} to TOML")


def _emit(lines: list, table: dict) -> None:
    for key, value in table.items():
        lines.append(f"{key} = {_toml_value(value)}")


def dump_config(scenario: Scenario) -> str:
    """Serialize a scenario to TOML text that :func:`load_config` reads back
    to an equivalent scenario (exact float round-trip)."""
    net, dm, sc = scenario.network, scenario.disturbances, scenario.sim
    lines: list = ["[network]"]
    _emit(
        lines,
        {
            "gamma_bar": net.gamma_bar,
            "c0": net.c0,
            "cost_in_reference": net.cost_in_reference,
            "cost_outside": net.cost_outside,
            "reference_topology": [list(e) for e in net.reference_topology],
        },
    )
    if net.cost is not None:
        _emit(lines, {"cost": np.asarray(net.cost)})
    for chain in net.chains:
        lines += ["", "[[network.chain]]"]
        _emit(
            lines,
            {
                "tau": list(chain.tau),
                "rho": list(chain.rho),
                "xbar": list(chain.xbar),
                "wbar_inv": list(chain.wbar_inv),
                "wbar_tr": list(chain.wbar_tr),
                "dbar": float(chain.dbar),
            },
        )

    lines += ["", "[disturbances]"]
    _emit(
        lines,
        {
            "rel_std": dm.rel_std,
            "alpha_waste": dm.alpha_waste,
            "alpha_demand": dm.alpha_demand,
            "steps_per_day": dm.steps_per_day,
            "w_inv_means": [m.tolist() for m in dm.w_inv_means],
            "w_tr_means": [m.tolist() for m in dm.w_tr_means],
            "demand_daily_means": [m.tolist() for m in dm.demand_daily_means],
        },
    )

    lines += ["", "[sim]"]
    _emit(
        lines,
        {
            "T": sc.T,
            "seed": sc.seed,
            "init_range": list(sc.init_range),
            "xbar_norm": sc.xbar_norm,
            "clamp": sc.clamp,
        },
    )
    for ev in sc.failures:
        lines += ["", "[[sim.failures]]"]
        _emit(lines, {"time": ev.time, "kind": ev.kind, "targets": ev.targets})
    return "\n".join(lines) + "\n"


def write_config(scenario: Scenario, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_config(scenario))
