from .instance import (
    AuctionInstance,
    FeasibilityConstraint,
    KUnit,
    Partition,
    PositionAuction,
    MatroidOracle,
    powerset,
)
from .optimal import (
    OptimalAuction,
    ThresholdSample,
    optimal_auction,
    myerson_allocate,
    threshold,
    resample_thresholds,
)
from .s_curve import SCurve, exact_s_curve, mc_s_curve, payment_masses, project_decreasing, default_grid
from .utilities import InstanceFile, instance_from_dict, instance_to_dict, load_instance
