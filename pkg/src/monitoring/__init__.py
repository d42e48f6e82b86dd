# Embedding-geometry monitors
from .distributions import (
    DistributionStats,
    distribution_stats,
    embedding_norm_stats,
    vector_norm_stats,
    weight_distance_stats,
)
