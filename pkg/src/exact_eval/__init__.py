from helpers import EnumerationBudget
from .enumeration import (
    MECHANISM_TAGS,
    ExactOpt,
    ThresholdMarginal,
    DominanceReport,
    Certificate,
    exact_opt,
    threshold_marginals,
    exact_myersonian_value,
    exact_mechanism_value,
    per_profile_dominance,
    random_instance,
    certify_instance,
    finite_spm_factor,
    spm_factor,
    evaluate,
)
