"""Multi-table synthetic data preparation and evaluation.

Two tables sharing a subject identifier are split into a parent table (one
row per subject, holding the columns that are constant within subjects) and
child tables (the rest). Synthetic bundles are scored pair by pair with
cross-table feature correlations, and two synthesizers are compared through
the distribution of those scores.
"""

from derecsim.derec import DerecBundle, detect, recreate, connect, run_derec
from derecsim.errors import DerecSimError
from derecsim.simpro import SimproReport, Comparison, compare, evaluate
from derecsim.table import ColumnKind, DataTable, Schema

__version__ = "0.1.0"

__all__ = [
    "ColumnKind",
    "Comparison",
    "DataTable",
    "DerecBundle",
    "DerecSimError",
    "Schema",
    "SimproReport",
    "compare",
    "connect",
    "detect",
    "evaluate",
    "recreate",
    "run_derec",
]
