from .entropy import (
    EntropyProfile,
    FeatureRecord,
    block_average,
    entropy_change,
    entropy_csv,
    entropy_profile,
    feature_records,
    histogram_entropy,
    proxy_entropy_change,
    proxy_profile,
)
from .pareto import ParetoPoint, dominates, pareto_csv, pareto_front, points_from_reports, reference_reports

__all__ = [
    "EntropyProfile",
    "FeatureRecord",
    "ParetoPoint",
    "block_average",
    "dominates",
    "entropy_change",
    "entropy_csv",
    "entropy_profile",
    "feature_records",
    "histogram_entropy",
    "pareto_csv",
    "pareto_front",
    "points_from_reports",
    "proxy_entropy_change",
    "proxy_profile",
    "reference_reports",
]
