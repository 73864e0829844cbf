"""Distributed, inherently episodic memory middleware.

Hierarchical memory servers with commit/query/notify protocols, a name-service
registry, an introspectable variant data format, tiered long-term storage with
latent compression, and prediction through future-timestamp queries.
"""

__version__ = "0.1.0"
