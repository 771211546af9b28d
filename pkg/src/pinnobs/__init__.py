from pinnobs.network import LayerSpec
from pinnobs.network import NetworkParams
from pinnobs.systems import SystemModel
from pinnobs.systems import build_system
from pinnobs.systems import registry

__all__ = ["LayerSpec", "NetworkParams", "SystemModel", "build_system", "registry"]
