"""End-to-end campaign orchestration."""
from .campaign import (
    CampaignReport,
    LocationResult,
    build_windows,
    run_campaign,
    spearman,
    stage_cluster,
    stage_evaluate,
    stage_optimize,
    traffic_report,
)
from .config import CampaignConfig, load_config
from .plots import emit_plots

__all__ = [
    "CampaignConfig", "CampaignReport", "LocationResult", "build_windows", "emit_plots",
    "load_config", "run_campaign", "spearman", "stage_cluster", "stage_evaluate",
    "stage_optimize", "traffic_report",
]
