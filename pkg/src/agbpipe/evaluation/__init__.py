"""Bin-wise, eco-region-stratified RMSE evaluation and report emission."""

from .metrics import BinSpec, BinStat, StratumStats, EvalReport, binwise_rmse, stratified_report
from .render import report_to_json, report_from_json, report_to_csv, report_from_csv, render_svg, write_report

__all__ = [
    "BinSpec", "BinStat", "StratumStats", "EvalReport", "binwise_rmse", "stratified_report",
    "report_to_json", "report_from_json", "report_to_csv", "report_from_csv", "render_svg", "write_report",
]
