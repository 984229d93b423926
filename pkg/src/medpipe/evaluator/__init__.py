"""Segmentation metrics, summary statistics and evaluation reports."""

from .metrics import PERCENTILES, AggregateSummary, aggregate, dice
from .report import build_report, evaluate, to_json

__all__ = ["PERCENTILES", "AggregateSummary", "aggregate", "build_report", "dice", "evaluate", "to_json"]
