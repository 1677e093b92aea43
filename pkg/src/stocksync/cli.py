"""Command-line front end for the full pipeline.

Subcommands: ``scenario`` (emit a seeded benchmark config), ``synthesize``
(run the LMI designs and export design/certificate/topology files),
``simulate`` (one closed-loop run to CSV/JSON), ``montecarlo`` (paired
realizations, one series file per strategy plus a summary), and
``export-topology`` (design bundle or topology JSON to DOT/JSON).

Exit codes are a stable scripting contract: 0 success, 2 configuration or
usage error, 3 infeasible synthesis, 4 numerical failure.  All randomness
flows from explicit seeds; rerunning a command with the same inputs
overwrites every data file with identical bytes (the manifest also records
wall-clock timings, which naturally differ between runs).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .codesign import (
    GlobalDesign,
    LocalDesign,
    SynthesisError,
    codesign_global,
    default_rho_grid,
    design_local_basic,
    design_local_improved,
    extract_topology,
)
from .config import ConfigError, load_config, write_config
from .lmi import SupplyRate
from .model import build_chain_error_dynamics
from .scenario import benchmark_scenario
from .sim import (
    draw_realization,
    empirical_gain,
    monte_carlo,
    montecarlo_series_to_csv,
    montecarlo_summary,
    simresult_to_csv,
    simulate,
)
from .strategies import KINDS, build_strategy

DESIGN_FORMAT = "stocksync-design/1"
TOPOLOGY_FORMAT = "stocksync-topology/1"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4


# ---------------------------------------------------------------------------
# run manifest
# ---------------------------------------------------------------------------


@dataclass
class RunManifest:
    """What a command run produced: inputs, outputs, and phase timings.

    Written atomically (temp file + rename) as ``manifest.json`` once the
    run has finished; ``outputs`` lists every data file the command wrote.
    """

    command: str
    config: str | None
    seed: int | None
    out_dir: str
    tool_version: str = __version__
    outputs: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def add_output(self, path) -> None:
        self.outputs.append(os.path.basename(str(path)))

    def write(self) -> None:
        payload = {
            "tool": "stocksync",
            "tool_version": self.tool_version,
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "outputs": sorted(self.outputs),
            "timings": {k: round(v, 6) for k, v in self.timings.items()},
        }
        fd, tmp = tempfile.mkstemp(dir=self.out_dir, suffix=".manifest")
        try:
            with os.fdopen(fd, "w") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write("\n")
            os.replace(tmp, os.path.join(self.out_dir, "manifest.json"))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


class _Phase:
    def __init__(self, manifest: RunManifest, name: str):
        self.manifest, self.name = manifest, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.manifest.timings[self.name] = time.perf_counter() - self.t0
        return False


# ---------------------------------------------------------------------------
# design bundle (de)serialization
# ---------------------------------------------------------------------------


def _arr(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def save_design_bundle(path, kind: str, locals_: list, gd: GlobalDesign | None) -> None:
    """Serialize a strategy's designs to a self-describing JSON bundle."""
    chains = []
    for ld in locals_:
        chains.append(
            {
                "L": _arr(ld.L),
                "P_storage": _arr(ld.P_storage),
                "P_lmi": _arr(ld.P_lmi),
                "nu": float(ld.passivity_nu),
                "rho": float(ld.passivity_rho),
                "design": ld.design,
                "extended_output": bool(ld.extended_output),
                "X": {
                    "kind": ld.X.kind,
                    "X11": _arr(ld.X.X11),
                    "X12": _arr(ld.X.X12),
                    "X22": _arr(ld.X.X22),
                },
            }
        )
    payload: dict = {"format": DESIGN_FORMAT, "kind": kind, "chains": chains}
    if gd is not None:
        payload["global"] = {
            "constrained": bool(gd.constrained),
            "gamma_tilde": float(gd.gamma_tilde),
            "gamma_bar_binding": bool(gd.gamma_bar_binding),
            "p": _arr(gd.p),
            "K_blocks": {f"{i},{j}": _arr(m) for (i, j), m in sorted(gd.K_blocks.items())},
            "L_blocks": {f"{i},{j}": _arr(m) for (i, j), m in sorted(gd.L_blocks.items())},
            "Kbar_blocks": {
                f"{i},{j}": _arr(m) for (i, j), m in sorted(gd.Kbar_blocks.items())
            },
        }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_design_bundle(path) -> tuple[str, list, GlobalDesign | None]:
    """Read a design bundle back into usable design objects."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != DESIGN_FORMAT:
        raise ConfigError(
            f"{path}: not a design bundle (format {payload.get('format')!r})"
        )
    locals_ = []
    for c in payload["chains"]:
        locals_.append(
            LocalDesign(
                L=np.asarray(c["L"], dtype=float),
                P_storage=np.asarray(c["P_storage"], dtype=float),
                P_lmi=np.asarray(c["P_lmi"], dtype=float),
                X=SupplyRate(
                    c["X"]["kind"],
                    np.asarray(c["X"]["X11"], dtype=float),
                    np.asarray(c["X"]["X12"], dtype=float),
                    np.asarray(c["X"]["X22"], dtype=float),
                ),
                passivity_nu=float(c["nu"]),
                passivity_rho=float(c["rho"]),
                design=c["design"],
                extended_output=bool(c["extended_output"]),
            )
        )
    gd = None
    if "global" in payload:
        g = payload["global"]

        def blocks(tag):
            out = {}
            for key, m in g[tag].items():
                i, j = key.split(",")
                out[(int(i), int(j))] = np.asarray(m, dtype=float)
            return out

        gd = GlobalDesign(
            K_blocks=blocks("K_blocks"),
            L_blocks=blocks("L_blocks"),
            Kbar_blocks=blocks("Kbar_blocks"),
            gamma_tilde=float(g["gamma_tilde"]),
            p=np.asarray(g["p"], dtype=float),
            gamma_bar_binding=bool(g["gamma_bar_binding"]),
            constrained=bool(g["constrained"]),
            result=None,
        )
    return payload["kind"], locals_, gd


# ---------------------------------------------------------------------------
# topology export
# ---------------------------------------------------------------------------


def _node_name(chain: int, inv: int) -> str:
    """Deterministic 1-based node naming: ``chain{i}/inv{k}``."""
    return f"chain{chain}/inv{inv}"


def topology_to_dict(gd: GlobalDesign, N: int, n: int, threshold_rel: float) -> dict:
    """Inventory-level edge list of the consensus coupling structure."""
    topo = extract_topology(gd, threshold_rel=threshold_rel)
    nodes = [_node_name(i + 1, k + 1) for i in range(N) for k in range(n)]
    edges = []
    for (j, i) in sorted(topo.edges):
        W = gd.K_blocks[(i, j)]
        for (k, l) in sorted(topo.edges[(j, i)]):
            edges.append(
                {
                    "from": _node_name(j + 1, l + 1),
                    "to": _node_name(i + 1, k + 1),
                    "from_chain": j + 1,
                    "from_inv": l + 1,
                    "to_chain": i + 1,
                    "to_inv": k + 1,
                    "weight": float(W[k, l]),
                }
            )
    return {
        "format": TOPOLOGY_FORMAT,
        "N": N,
        "n": n,
        "threshold": threshold_rel,
        "nodes": nodes,
        "edges": edges,
    }


def topology_dict_to_dot(topo: dict) -> str:
    """Render a topology dict as DOT; node/edge order is deterministic."""
    lines = ["digraph topology {", "  rankdir=LR;"]
    for node in topo["nodes"]:
        lines.append(f'  "{node}";')
    for e in topo["edges"]:
        lines.append(f'  "{e["from"]}" -> "{e["to"]}" [weight={e["weight"]!r}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _write_topology(topo: dict, fmt: str, path) -> None:
    if fmt == "json":
        with open(path, "w") as fh:
            json.dump(topo, fh, indent=2, sort_keys=True)
            fh.write("\n")
    elif fmt == "dot":
        with open(path, "w") as fh:
            fh.write(topology_dict_to_dot(topo))
    else:
        raise ConfigError(f"unknown topology format {fmt!r} (expected dot or json)")


# ---------------------------------------------------------------------------
# strategy wiring shared by simulate/montecarlo
# ---------------------------------------------------------------------------


def _build_controller(kind, scenario, bundles, gcc_epsilon):
    """Build one strategy from loaded design bundles, strictly matched."""
    if kind in ("LSSC", "GCC"):
        return build_strategy(
            kind,
            scenario.network,
            gcc_epsilon=gcc_epsilon,
            clamp_nonnegative=scenario.sim.clamp,
        )
    if kind not in bundles:
        raise ConfigError(f"strategy {kind} needs a design bundle (--designs)")
    bkind, locals_, gd = bundles[kind]
    return build_strategy(
        kind,
        scenario.network,
        local_designs=locals_,
        global_design=gd if kind.startswith("DCC") else None,
        clamp_nonnegative=scenario.sim.clamp,
    )


def _load_bundles(paths) -> dict:
    bundles = {}
    for p in paths or []:
        kind, locals_, gd = load_design_bundle(p)
        if kind in bundles:
            raise ConfigError(f"duplicate design bundle for strategy {kind}")
        bundles[kind] = (kind, locals_, gd)
    return bundles


# ---------------------------------------------------------------------------
# subcommand implementations
# ---------------------------------------------------------------------------


def cmd_scenario(args) -> int:
    scenario = benchmark_scenario(
        seed=args.seed, N=args.chains, n=args.stages, T=args.horizon
    )
    write_config(scenario, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    scenario = load_config(args.config)
    if args.strategy not in ("LSFC", "DCC-C", "DCC-U"):
        raise ConfigError(
            f"nothing to synthesize for {args.strategy} "
            "(only LSFC, DCC-C, and DCC-U carry designed gains)"
        )
    os.makedirs(args.out, exist_ok=True)
    manifest = RunManifest(
        command="synthesize", config=args.config, seed=scenario.seed, out_dir=args.out
    )
    network = scenario.network
    eds = [build_chain_error_dynamics(c) for c in network.chains]
    grid = default_rho_grid(args.grid)

    gd = None
    with _Phase(manifest, "synthesis"):
        if args.strategy == "LSFC":
            locals_ = [design_local_basic(ed) for ed in eds]
        else:
            # the network-feasibility scaling needs two chains; a single-chain
            # network degenerates to the same local problem at N = 2
            n_scale = max(network.N, 2)
            locals_ = [
                design_local_improved(ed, N=n_scale, rho_grid=grid) for ed in eds
            ]
            gd = codesign_global(
                network, eds, locals_, constrain_to_reference=args.strategy == "DCC-C"
            )

    with _Phase(manifest, "export"):
        designs_path = os.path.join(args.out, "designs.json")
        save_design_bundle(designs_path, args.strategy, locals_, gd)
        manifest.add_output(designs_path)

        report = {
            "strategy": args.strategy,
            "gamma_bar": network.gamma_bar,
            "chains": [
                {
                    "design": ld.design,
                    "nu": float(ld.passivity_nu),
                    "rho": float(ld.passivity_rho),
                    "psd_margins": [float(m) for m in (ld.result.psd_margins if ld.result else [])],
                    "solver_status": ld.result.solver_status if ld.result else "",
                    "verified": bool(ld.result.verified) if ld.result else None,
                }
                for ld in locals_
            ],
        }
        if gd is not None:
            report["network"] = {
                "gamma_tilde": float(gd.gamma_tilde),
                "gamma_bar_binding": bool(gd.gamma_bar_binding),
                "p": _arr(gd.p),
                "psd_margins": [float(m) for m in gd.result.psd_margins],
                "verified": bool(gd.result.verified),
            }
        cert_path = os.path.join(args.out, "certificates.json")
        with open(cert_path, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        manifest.add_output(cert_path)

        if gd is not None:
            topo = topology_to_dict(gd, network.N, network.n, args.threshold)
            for fmt in ("dot", "json"):
                tpath = os.path.join(args.out, f"topology.{fmt}")
                _write_topology(topo, fmt, tpath)
                manifest.add_output(tpath)

    manifest.write()
    if gd is not None:
        print(f"synthesized {args.strategy}: gamma_tilde={gd.gamma_tilde:.6g}")
    else:
        print(f"synthesized {args.strategy}: {len(locals_)} local designs")
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = load_config(args.config)
    if args.horizon is not None:
        if args.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        scenario.sim.T = args.horizon
        scenario.sim.__post_init__()
    if args.clamp:
        scenario.sim.clamp = True
    seed = scenario.sim.seed if args.seed is None else args.seed

    bundles = _load_bundles(args.designs)
    try:
        cs = _build_controller(args.strategy, scenario, bundles, args.gcc_epsilon)
        real = draw_realization(scenario.network, scenario.sim, scenario.disturbances, seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    os.makedirs(args.out, exist_ok=True)
    manifest = RunManifest(
        command="simulate", config=args.config, seed=seed, out_dir=args.out
    )
    with _Phase(manifest, "simulate"):
        try:
            sr = simulate(scenario.network, cs, scenario.sim, scenario.disturbances, real)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    with _Phase(manifest, "export"):
        csv_path = os.path.join(args.out, "run.csv")
        simresult_to_csv(sr, csv_path)
        manifest.add_output(csv_path)
        try:
            gain = empirical_gain(sr)
        except ValueError:
            gain = None
        summary = {
            "strategy": sr.kind,
            "seed": sr.seed,
            "T": scenario.sim.T,
            "final_pmae": float(sr.pmae[-1]),
            "final_cpmae": float(sr.cpmae[-1]),
            "empirical_gain": gain,
            "events": sr.events,
            "diagnostics": sr.diagnostics,
        }
        json_path = os.path.join(args.out, "run.json")
        with open(json_path, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        manifest.add_output(json_path)

    manifest.write()
    print(f"{sr.kind}: final CPMAE {sr.cpmae[-1]:.4f}% over {scenario.sim.T} steps")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    scenario = load_config(args.config)
    kinds = [k.strip() for k in args.strategies.split(",") if k.strip()]
    if not kinds:
        raise ConfigError("no strategies given")
    for k in kinds:
        if k not in KINDS:
            raise ConfigError(f"unknown strategy {k!r} (choose from {', '.join(KINDS)})")
    if args.clamp:
        scenario.sim.clamp = True

    bundles = _load_bundles(args.designs)
    try:
        controllers = [
            (k, _build_controller(k, scenario, bundles, args.gcc_epsilon)) for k in kinds
        ]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    os.makedirs(args.out, exist_ok=True)
    base_seed = scenario.sim.seed if args.seed is None else args.seed
    manifest = RunManifest(
        command="montecarlo", config=args.config, seed=base_seed, out_dir=args.out
    )
    with _Phase(manifest, "montecarlo"):
        try:
            mcr = monte_carlo(
                scenario.network,
                controllers,
                scenario.sim,
                scenario.disturbances,
                R=args.realizations,
                base_seed=base_seed,
                jobs=args.jobs,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    with _Phase(manifest, "export"):
        for kind in kinds:
            spath = os.path.join(args.out, f"series_{kind}.csv")
            montecarlo_series_to_csv(mcr, kind, spath)
            manifest.add_output(spath)
        jpath = os.path.join(args.out, "summary.json")
        with open(jpath, "w") as fh:
            json.dump(montecarlo_summary(mcr, scenario.sim), fh, indent=2, sort_keys=True)
            fh.write("\n")
        manifest.add_output(jpath)

    manifest.write()
    width = max(len(k) for k in kinds)
    print(f"final CAPMAE over R={mcr.R} realizations (T={mcr.T}):")
    for kind in kinds:
        print(f"  {kind:<{width}}  {mcr.final_capmae[kind]:10.4f}%")
    return EXIT_OK


def cmd_export_topology(args) -> int:
    with open(args.designs) as fh:
        payload = json.load(fh)
    if payload.get("format") == TOPOLOGY_FORMAT:
        topo = payload
    elif payload.get("format") == DESIGN_FORMAT:
        kind, _, gd = load_design_bundle(args.designs)
        if gd is None:
            raise ConfigError(f"design bundle for {kind} has no consensus design")
        N = int(np.sqrt(len(gd.K_blocks)))
        n = next(iter(gd.K_blocks.values())).shape[0]
        topo = topology_to_dict(gd, N, n, args.threshold)
    else:
        raise ConfigError(f"{args.designs}: unrecognized file format")
    _write_topology(topo, args.format, args.out)
    print(f"wrote {args.out} ({len(topo['edges'])} edges)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="stocksync",
        description="inventory-consensus control: synthesis, simulation, topology export",
    )
    ap.add_argument("--version", action="version", version=f"stocksync {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenario", help="write a seeded benchmark configuration")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chains", type=int, default=3)
    p.add_argument("--stages", type=int, default=4)
    p.add_argument("--horizon", type=int, default=720)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("synthesize", help="run the LMI designs for one strategy")
    p.add_argument("--config", required=True)
    p.add_argument("--strategy", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid", type=int, default=25, help="output-passivity sweep points")
    p.add_argument("--threshold", type=float, default=1e-5, help="relative edge threshold")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="one closed-loop run")
    p.add_argument("--config", required=True)
    p.add_argument("--strategy", required=True, choices=KINDS)
    p.add_argument("--designs", action="append", help="design bundle (repeatable)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--gcc-epsilon", type=float, default=0.1)
    p.add_argument("--clamp", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("montecarlo", help="paired Monte-Carlo comparison")
    p.add_argument("--config", required=True)
    p.add_argument("--strategies", required=True, help="comma-separated strategy kinds")
    p.add_argument("--designs", action="append", help="design bundle (repeatable)")
    p.add_argument("--realizations", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--gcc-epsilon", type=float, default=0.1)
    p.add_argument("--clamp", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("export-topology", help="design bundle or topology JSON to DOT/JSON")
    p.add_argument("--designs", required=True)
    p.add_argument("--format", required=True)
    p.add_argument("--threshold", type=float, default=1e-5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_topology)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SynthesisError as exc:
        code = EXIT_INFEASIBLE if "infeasible" in str(exc).lower() else EXIT_NUMERICAL
        print(f"error: {exc}", file=sys.stderr)
        return code
    except np.linalg.LinAlgError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
