from .app import create_app
from .state import DimSpec, InstanceConfig, InstanceStore, VoteRejected

__all__ = ["create_app", "DimSpec", "InstanceConfig", "InstanceStore", "VoteRejected"]
