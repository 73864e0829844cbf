"""Long-term memory: filtering, online compression, latent encoding, recall."""

from .codecs import compress_value, decompress_value, image_paths, stored_size
from .filter import FilterPolicy, FilterState, filter_snapshots
from .flatten import LeafSpec, NoSharedLayout, decompose, recompose, shared_layout
from .latent import (
    DegenerateHistory,
    EncodedHistory,
    LatentModel,
    train_latent_model,
)
from .store import IntegrityError, LtmStore, NotFound

__all__ = [name for name in dir() if not name.startswith("_")]
