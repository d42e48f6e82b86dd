# Verification scoring, metrics and report files
from .metrics import (
    DEFAULT_DCF,
    SRE08,
    SRE10,
    DcfParams,
    MetricsReport,
    OperatingPoints,
    compute_eer,
    compute_metrics,
    compute_min_dcf,
    cosine_score,
    dcf_at_threshold,
    min_dcf_point,
    operating_points,
)
from .reports import read_csv, read_digest, read_json, write_csv, write_json
