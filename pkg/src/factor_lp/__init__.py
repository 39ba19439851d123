from .kernels import (
    kernel_f,
    kernel_f_H,
    kernel_q_n,
    kernel_r_n,
    expected_truncated_poisson,
    baseline_spm,
    baseline_multi,
    poisson_mode_mass,
)
from .continuous import ContinuousBound, solve_lp_spm_continuous, solve_lp_spm_H
from .simplex import LpInstance, LpSolution, RevisedSimplex, solve_lp, OPTIMAL, INFEASIBLE, UNBOUNDED, ITERATION_LIMIT
from .programs import build_lp_spm_n, build_lp_esp, build_lp_esp_n
from .tables import (
    BoundTable,
    TableConfig,
    Cell,
    bound_tables,
    best_over_k,
    solve_cell,
    load_goldens,
    reference_values,
    esp_headline_factor,
    TABLES,
)
from .checks import (
    CheckReport,
    polynomial_extremal_check,
    monotone_kernel_check,
    flipped_r_kernel,
    extremal_cells,
    S_TOTALS,
    spm_polynomial,
    esp_polynomial,
    simplex_points,
)
