"""stocksync: dissipativity-based inventory consensus control for
multi-echelon supply chain networks — modeling, LMI synthesis, topology
co-design, and Monte-Carlo simulation."""

__version__ = "0.1.0"
