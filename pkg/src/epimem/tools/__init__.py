"""Benchmark harness, payload generators, reference channels, operator CLI."""

from .payloads import (
    COMPLEX_SIZE,
    IMAGE_BYTES,
    MODERATE_SIZE,
    SIMPLE_SIZE,
    ComplexReading,
    ModerateReading,
    PayloadSpec,
    SimpleReading,
    from_data_object,
    make_reading,
)
from .streams import EntityStream, RecordingSpec, generate_recording

__all__ = [name for name in dir() if not name.startswith("_")]
