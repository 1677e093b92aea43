"""The four figure kinds and their file readers.

Every reader validates its input completely before any drawing starts, so a
schema error never leaves a half-written output file behind.  Rendering is
deterministic: fixed SVG hash salt, no embedded timestamps, text kept as
text (``svg.fonttype: none``) so tests can introspect labels.
"""

from __future__ import annotations

import csv
import json
import os
import re
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import FancyArrowPatch
from matplotlib.ticker import FormatStrFormatter

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - version dependent
    import tomli as tomllib

TOPOLOGY_FORMAT = "stocksync-topology/1"

KINDS = ("metric-curves", "topology", "demand-profile", "network-state")

_RC = {
    "svg.fonttype": "none",
    "svg.hashsalt": "plotkit",
    "figure.figsize": (7.0, 4.2),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.framealpha": 0.9,
}


class SchemaError(Exception):
    """An input file does not match the documented schema."""


@dataclass
class FigureSpec:
    """One figure request: inputs, kind, styling, destination."""

    inputs: list
    kind: str
    out: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(
                f"unknown figure kind {self.kind!r} (expected one of {', '.join(KINDS)})"
            )
        if not self.inputs:
            raise SchemaError("need at least one input file")


def render(spec: FigureSpec) -> dict:
    """Dispatch a :class:`FigureSpec` to its renderer; returns its stats."""
    if spec.kind == "metric-curves":
        return plot_metrics(spec.inputs, spec.out, **spec.options)
    if len(spec.inputs) != 1:
        raise SchemaError(f"{spec.kind} takes exactly one input file")
    fn = {
        "topology": plot_topology,
        "demand-profile": plot_demand_profile,
        "network-state": plot_network_state,
    }[spec.kind]
    return fn(spec.inputs[0], spec.out, **spec.options)


# ---------------------------------------------------------------------------
# readers (validate everything up front)
# ---------------------------------------------------------------------------


def _series_name(path) -> str:
    stem = os.path.splitext(os.path.basename(str(path)))[0]
    return stem[len("series_"):] if stem.startswith("series_") else stem


def read_series_csv(path, column: str) -> tuple[str, np.ndarray, np.ndarray]:
    """One montecarlo series file -> (strategy name, t, values)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = rows[0]
    if "t" not in header:
        raise SchemaError(f"{path}: missing column 't' (found {', '.join(header)})")
    if column not in header:
        raise SchemaError(
            f"{path}: missing column {column!r} (found {', '.join(header)})"
        )
    if len(rows) == 1:
        raise SchemaError(f"{path}: no data rows")
    ti, ci = header.index("t"), header.index(column)
    try:
        t = np.array([float(r[ti]) for r in rows[1:]])
        v = np.array([float(r[ci]) for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"{path}: malformed row: {exc}") from exc
    return _series_name(path), t, v


def read_topology_json(path) -> dict:
    """A topology export -> validated dict with N, n, nodes, edges."""
    with open(path) as fh:
        try:
            topo = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
    if topo.get("format") != TOPOLOGY_FORMAT:
        raise SchemaError(
            f"{path}: not a topology file (format {topo.get('format')!r})"
        )
    for key in ("N", "n", "nodes", "edges"):
        if key not in topo:
            raise SchemaError(f"{path}: missing key {key!r}")
    for e in topo["edges"]:
        for key in ("from_chain", "from_inv", "to_chain", "to_inv", "weight"):
            if key not in e:
                raise SchemaError(f"{path}: edge missing key {key!r}")
    return topo


def read_demand_toml(path) -> tuple[list, int]:
    """A scenario config -> (per-chain daily demand means, steps per day)."""
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise SchemaError(f"{path}: invalid TOML: {exc}") from exc
    dist = data.get("disturbances")
    if dist is None:
        raise SchemaError(f"{path}: missing [disturbances] section")
    daily = dist.get("demand_daily_means")
    if daily is None:
        raise SchemaError(f"{path}: missing key 'demand_daily_means' in [disturbances]")
    if not daily or any(len(week) != 7 for week in daily):
        raise SchemaError(f"{path}: demand_daily_means must be per-chain lists of 7")
    return [list(map(float, week)) for week in daily], int(dist.get("steps_per_day", 24))


def read_run_csv(path) -> tuple[np.ndarray, dict]:
    """A single-run export -> (t, {(chain, inv): inventory series})."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = rows[0]
    if not header or header[0] != "t":
        raise SchemaError(f"{path}: first column must be 't'")
    pat = re.compile(r"^x_(\d+)_(\d+)$")
    cols = {}
    for idx, name in enumerate(header):
        m = pat.match(name)
        if m:
            cols[(int(m.group(1)), int(m.group(2)))] = idx
    if not cols:
        raise SchemaError(f"{path}: no inventory columns x_i_k found")
    if len(rows) == 1:
        raise SchemaError(f"{path}: no data rows")
    try:
        t = np.array([float(r[0]) for r in rows[1:]])
        series = {
            key: np.array([float(r[idx]) for r in rows[1:]])
            for key, idx in cols.items()
        }
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"{path}: malformed row: {exc}") from exc
    return t, series


# ---------------------------------------------------------------------------
# renderers
# ---------------------------------------------------------------------------


def _save(fig, out) -> None:
    if str(out).lower().endswith(".svg"):
        fig.savefig(out, metadata={"Date": None})
    else:
        fig.savefig(out, dpi=150)
    plt.close(fig)


def plot_metrics(paths, out, column: str = "apmae", title: str | None = None) -> dict:
    """Consensus-error curves: one labeled line per strategy series file."""
    if not paths:
        raise SchemaError("need at least one series file")
    series = [read_series_csv(p, column) for p in paths]

    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for name, t, v in series:
            ax.plot(t, v, label=name, linewidth=1.6)
        ax.set_xlabel("step $t$")
        ax.set_ylabel(f"{column.upper()} [%]")
        ax.yaxis.set_major_formatter(FormatStrFormatter("%g%%"))
        ax.legend(loc="best")
        ax.set_title(title or "consensus error across strategies")
        fig.tight_layout()
        _save(fig, out)
    return {
        "out": str(out),
        "curves": [name for name, _, _ in series],
        "steps": int(series[0][1].size),
    }


def _edge_widths(weights) -> list:
    """Line widths proportional to |weight|, on a visible 0.6-3.0 pt range."""
    mags = [abs(float(w)) for w in weights]
    top = max(mags, default=0.0)
    if top == 0.0:
        return [0.6 for _ in mags]
    return [0.6 + 2.4 * m / top for m in mags]


def plot_topology(path, out, title: str | None = None) -> dict:
    """Inter-chain coupling diagram on a chain-row / inventory-column grid.

    Edge thickness scales with coupling magnitude; reciprocal links stay
    readable because every arrow bows slightly to its right.
    """
    topo = read_topology_json(path)
    N, n, edges = int(topo["N"]), int(topo["n"]), topo["edges"]

    def pos(chain: int, inv: int) -> tuple:
        return (float(inv - 1), float(N - chain))

    widths = _edge_widths([e["weight"] for e in edges])
    bundles = {(e["from_chain"], e["to_chain"]) for e in edges}

    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(1.6 * max(n, 2) + 1.8, 1.3 * max(N, 2)))
        ax.set_axis_off()
        for i in range(1, N + 1):
            ax.text(-0.9, pos(i, 1)[1], f"chain {i}", ha="right", va="center",
                    fontsize=11)
            for k in range(1, n + 1):
                x, y = pos(i, k)
                ax.scatter([x], [y], s=650, zorder=3, color="#dce6f1",
                           edgecolors="#3b6ea5", linewidths=1.2)
                ax.text(x, y, str(k), ha="center", va="center", zorder=4,
                        fontsize=10)
        for k in range(1, n + 1):
            ax.text(pos(1, k)[0], N - 1 + 0.58, f"inv {k}", ha="center",
                    va="bottom", fontsize=10, color="#555555")
        for e, lw in zip(edges, widths):
            a = pos(e["from_chain"], e["from_inv"])
            b = pos(e["to_chain"], e["to_inv"])
            rad = 0.25 if a == b else 0.12
            ax.add_patch(
                FancyArrowPatch(
                    a, b, connectionstyle=f"arc3,rad={rad}",
                    arrowstyle="-|>", mutation_scale=11, lw=lw,
                    color="#b2452c", shrinkA=14, shrinkB=14, zorder=2,
                )
            )
        ax.set_xlim(-2.1, n - 0.4)
        ax.set_ylim(-0.6, N)
        ax.set_title(title or f"consensus topology ({len(edges)} links)")
        fig.tight_layout()
        _save(fig, out)
    return {
        "out": str(out),
        "nodes": len(topo["nodes"]),
        "edges": len(edges),
        "bundles": len(bundles),
    }


def plot_demand_profile(path, out, title: str | None = None) -> dict:
    """Weekly demand staircase per chain, with dashed design-mean levels."""
    daily, steps_per_day = read_demand_toml(path)

    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        days = np.arange(8)
        for i, week in enumerate(daily, start=1):
            steps = week + [week[-1]]  # closing value for the final riser
            (line,) = ax.step(days, steps, where="post", linewidth=1.6,
                              label=f"chain {i}")
            ax.axhline(float(np.mean(week)), color=line.get_color(),
                       linestyle="--", linewidth=0.9, alpha=0.55)
        ax.set_xlabel(f"day of week ({steps_per_day} steps each)")
        ax.set_ylabel("mean demand [units/step]")
        ax.set_xticks(np.arange(7) + 0.5, [f"{d + 1}" for d in range(7)])
        ax.set_xlim(0, 7)
        ax.legend(loc="best")
        ax.set_title(title or "weekly demand pattern (dashed: design mean)")
        fig.tight_layout()
        _save(fig, out)
    return {"out": str(out), "chains": len(daily)}


def plot_network_state(path, out, title: str | None = None) -> dict:
    """Inventory-level trajectories from one run, one panel per chain."""
    t, series = read_run_csv(path)
    chains = sorted({i for i, _ in series})

    with plt.rc_context(_RC):
        fig, axes = plt.subplots(
            len(chains), 1, sharex=True,
            figsize=(7.0, 1.0 + 1.7 * len(chains)), squeeze=False,
        )
        for ax, i in zip(axes[:, 0], chains):
            for k in sorted(k for c, k in series if c == i):
                ax.plot(t, series[(i, k)], linewidth=1.3, label=f"inv {k}")
            ax.set_ylabel(f"chain {i}")
            ax.legend(loc="upper right", fontsize=8)
        axes[-1, 0].set_xlabel("step $t$")
        fig.suptitle(title or "inventory levels")
        fig.tight_layout()
        _save(fig, out)
    return {
        "out": str(out),
        "chains": len(chains),
        "stages": max(k for _, k in series),
        "steps": int(t.size),
    }
