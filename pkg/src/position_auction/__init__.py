from .auction import (
    PaFeasibility,
    PaOutcome,
    PaSpmResult,
    PaExact,
    LayerPolicy,
    pa_feasible,
    pa_feasible_subsets,
    pa_optimal,
    pa_spm,
    pa_bound,
    pa_revenue_fractions,
    exact_pa_values,
)
