"""Batch figure rendering for stocksync's file outputs.

The package deliberately links against nothing from the producing tool: it
reads the documented CSV/JSON/TOML files and draws.  See :mod:`plotkit.figures`
for the figure kinds and :mod:`plotkit.cli` for the ``plot`` command.
"""

from .figures import (
    FigureSpec,
    SchemaError,
    plot_demand_profile,
    plot_metrics,
    plot_network_state,
    plot_topology,
    render,
)

__version__ = "0.1.0"

__all__ = [
    "FigureSpec",
    "SchemaError",
    "plot_demand_profile",
    "plot_metrics",
    "plot_network_state",
    "plot_topology",
    "render",
    "__version__",
]
