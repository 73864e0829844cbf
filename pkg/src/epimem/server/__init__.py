"""Memory-server process, name service, and capacity enforcement."""

from .capacity import CapacityParams, hot_entities, plan_evictions, protected_entities
from .config import ConfigError, ServerConfig, parse_endpoint
from .memory_server import MemoryServer, Subscription
from .mns import MnsRegistry, MnsServer, NameNotFound

__all__ = [name for name in dir() if not name.startswith("_")]
