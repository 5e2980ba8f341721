"""Risk-aware price-maker bidding for a virtual power plant.

The package solves a bi-level bidding problem (upper level: VPP schedule and
bids; lower level: DC-OPF market clearing) as a single MILP via a KKT
reformulation, and verifies every solution against an independent clearing LP.
"""

__version__ = "0.1.0"
