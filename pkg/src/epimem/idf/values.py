"""Recursive variant values: the single payload representation of the memory system.

Every payload in the system is a tree of these variants. Values are treated as
immutable once constructed; they can be shared freely between threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

INT32_MIN = -(2**31)
INT32_MAX = 2**31 - 1
INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

# element kind -> (code on the wire, byte width, numpy dtype)
ELEM_KINDS = {
    "u8": (0, 1, np.uint8),
    "i32": (1, 4, np.int32),
    "i64": (2, 8, np.int64),
    "f32": (3, 4, np.float32),
    "f64": (4, 8, np.float64),
}
ELEM_CODE_TO_KIND = {code: kind for kind, (code, _, _) in ELEM_KINDS.items()}


@dataclass(frozen=True)
class Null:
    pass


@dataclass(frozen=True)
class Bool:
    value: bool

    def __post_init__(self):
        object.__setattr__(self, "value", bool(self.value))


@dataclass(frozen=True)
class Int32:
    value: int

    def __post_init__(self):
        if not INT32_MIN <= self.value <= INT32_MAX:
            raise ValueError(f"Int32 out of range: {self.value}")


@dataclass(frozen=True)
class Int64:
    value: int

    def __post_init__(self):
        if not INT64_MIN <= self.value <= INT64_MAX:
            raise ValueError(f"Int64 out of range: {self.value}")


@dataclass(frozen=True)
class Float32:
    """Single-precision float; the stored value is always exactly representable."""

    value: float

    def __post_init__(self):
        object.__setattr__(
            self, "value", struct.unpack("<f", struct.pack("<f", self.value))[0]
        )


@dataclass(frozen=True)
class Float64:
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class String:
    value: str

    def __post_init__(self):
        # must be encodable; lone surrogates are not valid payload text
        self.value.encode("utf-8")


@dataclass(frozen=True)
class Time:
    """Signed microseconds since the Unix epoch, UTC."""

    micros: int

    def __post_init__(self):
        if not INT64_MIN <= self.micros <= INT64_MAX:
            raise ValueError(f"Time out of range: {self.micros}")


@dataclass(frozen=True)
class NDArray:
    elem_kind: str
    dims: tuple[int, ...]
    data: bytes

    def __post_init__(self):
        if self.elem_kind not in ELEM_KINDS:
            raise ValueError(f"unknown element kind {self.elem_kind!r}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if any(d < 0 for d in self.dims):
            raise ValueError(f"negative extent in dims {self.dims}")
        if len(self.data) != self.element_count * ELEM_KINDS[self.elem_kind][1]:
            raise ValueError(
                f"NDArray buffer is {len(self.data)} bytes, expected "
                f"{self.element_count * ELEM_KINDS[self.elem_kind][1]} "
                f"for dims {self.dims} of {self.elem_kind}"
            )

    @property
    def element_count(self) -> int:
        n = 1
        for d in self.dims:
            n *= d
        return n

    def to_numpy(self) -> np.ndarray:
        dtype = ELEM_KINDS[self.elem_kind][2]
        return np.frombuffer(self.data, dtype=np.dtype(dtype).newbyteorder("<")).reshape(
            self.dims
        ).astype(dtype)

    @classmethod
    def from_numpy(cls, array: np.ndarray) -> "NDArray":
        kind = {
            np.dtype(np.uint8): "u8",
            np.dtype(np.int32): "i32",
            np.dtype(np.int64): "i64",
            np.dtype(np.float32): "f32",
            np.dtype(np.float64): "f64",
        }.get(array.dtype)
        if kind is None:
            raise ValueError(f"unsupported dtype {array.dtype}")
        little = array.astype(array.dtype.newbyteorder("<"), copy=False)
        return cls(kind, tuple(array.shape), np.ascontiguousarray(little).tobytes())


@dataclass(frozen=True)
class List:
    items: tuple["DataObject", ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))


@dataclass(frozen=True)
class Map:
    entries: dict[str, "DataObject"] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "entries", dict(self.entries))
        for key in self.entries:
            if not isinstance(key, str):
                raise ValueError(f"Map key must be str, got {type(key).__name__}")

    def __eq__(self, other):
        # key-order-insensitive; dict equality already is
        if not isinstance(other, Map):
            return NotImplemented
        return self.entries == other.entries

    def __hash__(self):
        return hash(frozenset(self.entries))


DataObject = Union[
    Null, Bool, Int32, Int64, Float32, Float64, String, Time, NDArray, List, Map
]

_VARIANTS = (Null, Bool, Int32, Int64, Float32, Float64, String, Time, NDArray, List, Map)


def is_data_object(value: object) -> bool:
    return isinstance(value, _VARIANTS)


def canonical(value: DataObject) -> DataObject:
    """Canonical form: Map entries sorted ascending by key, recursively."""
    if isinstance(value, List):
        return List(tuple(canonical(v) for v in value.items))
    if isinstance(value, Map):
        return Map({k: canonical(value.entries[k]) for k in sorted(value.entries)})
    return value


def from_python(obj: object) -> DataObject:
    """Build a DataObject from plain Python values.

    bool -> Bool, int -> Int64, float -> Float64, str -> String,
    bytes -> NDArray of u8, numpy arrays -> NDArray, list/tuple -> List,
    dict -> Map, None -> Null. Existing DataObjects pass through.
    """
    if is_data_object(obj):
        return obj  # type: ignore[return-value]
    if obj is None:
        return Null()
    if isinstance(obj, bool):
        return Bool(obj)
    if isinstance(obj, int):
        return Int64(obj)
    if isinstance(obj, float):
        return Float64(obj)
    if isinstance(obj, str):
        return String(obj)
    if isinstance(obj, (bytes, bytearray)):
        return NDArray("u8", (len(obj),), bytes(obj))
    if isinstance(obj, np.ndarray):
        return NDArray.from_numpy(obj)
    if isinstance(obj, (list, tuple)):
        return List(tuple(from_python(v) for v in obj))
    if isinstance(obj, dict):
        return Map({k: from_python(v) for k, v in obj.items()})
    raise TypeError(f"cannot represent {type(obj).__name__} as a DataObject")


def to_python(value: DataObject) -> object:
    """Inverse-ish of from_python; NDArrays come back as numpy arrays."""
    if isinstance(value, Null):
        return None
    if isinstance(value, (Bool, Int32, Int64, Float32, Float64, String)):
        return value.value
    if isinstance(value, Time):
        return value.micros
    if isinstance(value, NDArray):
        return value.to_numpy()
    if isinstance(value, List):
        return [to_python(v) for v in value.items]
    if isinstance(value, Map):
        return {k: to_python(v) for k, v in value.entries.items()}
    raise TypeError(f"not a DataObject: {type(value).__name__}")


def _unchecked_string(text: str) -> String:
    """Wrap text already known UTF-8-clean (decoder output)."""
    value = object.__new__(String)
    object.__setattr__(value, "value", text)
    return value


def _unchecked_map(entries: dict) -> Map:
    """Wrap a fresh str-keyed dict without copying (decoder output)."""
    value = object.__new__(Map)
    object.__setattr__(value, "entries", entries)
    return value


Path = tuple  # segments: str for map keys, int for list indices


def walk(value: DataObject, path: Path = ()) -> Iterator[tuple[Path, DataObject]]:
    """Depth-first traversal yielding (path, leaf) pairs.

    Path segments are map keys (str) and list indices (int); containers
    themselves are not yielded. Map entries are visited in sorted key order so
    traversal order is canonical.
    """
    if isinstance(value, List):
        for i, item in enumerate(value.items):
            yield from walk(item, path + (i,))
    elif isinstance(value, Map):
        for key in sorted(value.entries):
            yield from walk(value.entries[key], path + (key,))
    else:
        yield path, value


def get_at(value: DataObject, path: Path) -> DataObject:
    node = value
    for seg in path:
        if isinstance(seg, int):
            node = node.items[seg]  # type: ignore[union-attr]
        else:
            node = node.entries[seg]  # type: ignore[union-attr]
    return node


def set_at(value: DataObject, path: Path, leaf: DataObject) -> DataObject:
    """Return a copy of `value` with the leaf at `path` replaced."""
    if not path:
        return leaf
    seg = path[0]
    if isinstance(seg, int):
        assert isinstance(value, List)
        items = list(value.items)
        items[seg] = set_at(items[seg], path[1:], leaf)
        return List(tuple(items))
    assert isinstance(value, Map)
    entries = dict(value.entries)
    entries[seg] = set_at(entries[seg], path[1:], leaf)
    return Map(entries)
