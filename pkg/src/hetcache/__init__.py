"""Cost-minimizing resource allocation and cooperative caching for PD-NOMA HetNets."""

from .model import (
    AllocationState,
    BaseStation,
    ContentCatalog,
    CostBreakdown,
    CostConstants,
    NetworkScenario,
    sample_requests,
    total_cost,
    zipf_popularity,
)

__all__ = [
    "AllocationState",
    "BaseStation",
    "ContentCatalog",
    "CostBreakdown",
    "CostConstants",
    "NetworkScenario",
    "sample_requests",
    "total_cost",
    "zipf_popularity",
]

__version__ = "0.1.0"
