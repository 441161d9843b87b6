"""Independent oracles and estimators used to check the solvers."""

from .infsup import InfSupEstimate, estimate_inf_sup
from .manufactured import ManufacturedCase, constant_case, sine_case, skewed_case
from .primal import NodalField, OracleResult, primal_oracle, primal_oracle_1d
from .study import StudyTable, convergence_study, observed_order
from .sweep import inequality_sweep

__all__ = [
    "InfSupEstimate", "estimate_inf_sup", "ManufacturedCase", "constant_case", "sine_case", "skewed_case",
    "NodalField", "OracleResult", "primal_oracle", "primal_oracle_1d", "StudyTable",
    "convergence_study", "observed_order", "inequality_sweep",
]
