"""twinsync: deterministic digital-twin synchronization engine and
teleoperation network testbed."""

__version__ = "0.1.0"
