from .spm import (
    SequentialPostedPrice,
    BestSpm,
    GroupSpm,
    PartitionSpm,
    run_spm,
    expected_spm_revenue,
    myersonian_spm_revenue,
    uniform_price_search,
    best_spm_revenue,
    partition_spm,
    matroid_myersonian_spm,
)
from .esp import (
    EagerSecondPrice,
    EspRevenues,
    run_esp,
    expected_esp_revenue,
    uniform_esp_search,
    myersonian_esp_revenue,
    esp_revenues,
)
from .utilities import PriceSearch, greedy_max_weight
