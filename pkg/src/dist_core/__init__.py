from .distribution import (
    DiscreteDistribution,
    IronedVirtualFunction,
    cdf,
    raw_virtual_values,
    iron,
    sample,
    uniform_grid,
    point_mass,
    monopoly_price,
    monopoly_revenue,
    poisson_binomial_pmf,
    truncated_mean,
)
from .utilities import DistributionFile, distribution_from_dict, distribution_to_dict, load_distribution
