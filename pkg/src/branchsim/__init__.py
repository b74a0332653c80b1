"""Simulation and limit-theorem verification for near-critical branching processes
with dependent immigration."""

__version__ = "0.1.0"

from branchsim.limits import DriftParam, TimeChange  # noqa: E402
from branchsim.moments import MomentTables, geom_ratio, mean_A, var_tables, y_moments  # noqa: E402
from branchsim.regvar import RegVarSeq, check_conditions, eval_seq  # noqa: E402

__all__ = ["DriftParam", "TimeChange", "MomentTables", "RegVarSeq", "check_conditions", "eval_seq",
           "geom_ratio", "mean_A", "var_tables", "y_moments", "__version__"]
