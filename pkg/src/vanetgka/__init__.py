"""Self-authenticating deniable group key agreement for VANETs.

Protocol engine (RSU-to-RSU deniable key agreement, RSU/vehicle mutual
authentication, group key lifecycle, intra-group messaging), analytic cost
models, and a deterministic discrete-event simulator.
"""

from .crypto import PROFILES, SystemParams, get_profile

__all__ = ["PROFILES", "SystemParams", "get_profile"]
__version__ = "0.1.0"
