"""Network-slice resource allocation: Jackson-network capacity sizing,
virtual network embedding with admission control, provider pricing, and a
two-time-scale simulator."""

from .capacity import (CapacityPlan, brute_force_capacity_oracle, capacity_sweep, cost_breakdown,
                       optimal_capacity)
from .embedding import (AdmissionDecision, AllocationState, Embedding, admit_dynamic, embed_max,
                        embed_one, release, resize)
from .model import (NodeKind, PriceVector, SubstrateLink, SubstrateNetwork, SubstrateNode,
                    TrafficModel, VirtualNode, VnRequest, case_study_topology, validate_request,
                    validate_substrate)
from .pricing import PricingOutcome, best_response, maximize_revenue, price_sweep_report
from .queueing import FlowSolution, QueueMetrics, is_stable, mean_delay, solve_traffic_equations
from .simulator import EpochConfig, ScheduledEvent, SimReport, run_two_time_scale, simulate_slice_packets

__all__ = [
    "AdmissionDecision", "AllocationState", "CapacityPlan", "Embedding", "EpochConfig",
    "FlowSolution", "NodeKind", "PriceVector", "PricingOutcome", "QueueMetrics", "ScheduledEvent",
    "SimReport", "SubstrateLink", "SubstrateNetwork", "SubstrateNode", "TrafficModel",
    "VirtualNode", "VnRequest", "admit_dynamic", "best_response", "brute_force_capacity_oracle",
    "capacity_sweep", "case_study_topology", "cost_breakdown", "embed_max", "embed_one",
    "is_stable", "maximize_revenue", "mean_delay", "optimal_capacity", "price_sweep_report",
    "release", "resize", "run_two_time_scale", "simulate_slice_packets", "solve_traffic_equations",
    "validate_request", "validate_substrate",
]

__version__ = "0.1.0"
