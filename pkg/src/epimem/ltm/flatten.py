"""Flattening data objects into numeric vectors for similarity and encoding.

Numeric leaves (int32/int64/float32/float64 scalars and every NDArray) flatten
into one float64 vector described by a layout of (path, kind, dims) specs in
canonical traversal order. Everything else -- strings, bools, times, nulls and
empty containers -- is non-encodable and is extracted verbatim with its path.
Recomposition rebuilds the exact tree from the layout, a vector, and the
extracted leaves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..idf import (
    Bool,
    DataObject,
    Float32,
    Float64,
    Int32,
    Int64,
    List,
    Map,
    NDArray,
    Null,
    String,
    Time,
)
from ..idf.values import ELEM_KINDS

SCALAR_KINDS = {
    Int32: "int32",
    Int64: "int64",
    Float32: "float32",
    Float64: "float64",
}
_INT_BOUNDS = {
    "int32": (-(2**31), 2**31 - 1),
    "int64": (-(2**63), 2**63 - 1),
    "u8": (0, 255),
    "i32": (-(2**31), 2**31 - 1),
    "i64": (-(2**63), 2**63 - 1),
}


@dataclass(frozen=True)
class LeafSpec:
    path: tuple
    kind: str  # scalar kinds int32/int64/float32/float64 or nd:<elem kind>
    dims: tuple[int, ...] = ()

    @property
    def size(self) -> int:
        n = 1
        for d in self.dims:
            n *= d
        return n


class NoSharedLayout(ValueError):
    """Snapshot histories whose numeric layouts differ cannot be encoded."""


def decompose(
    value: DataObject,
) -> tuple[tuple[LeafSpec, ...], np.ndarray, list[tuple[tuple, DataObject]]]:
    """Split a value into (layout, float64 vector, extracted non-numeric leaves)."""
    layout: list[LeafSpec] = []
    chunks: list[np.ndarray] = []
    extras: list[tuple[tuple, DataObject]] = []

    def visit(node: DataObject, path: tuple) -> None:
        if isinstance(node, (Int32, Int64)):
            layout.append(LeafSpec(path, SCALAR_KINDS[type(node)]))
            chunks.append(np.array([node.value], dtype=np.float64))
        elif isinstance(node, (Float32, Float64)):
            layout.append(LeafSpec(path, SCALAR_KINDS[type(node)]))
            chunks.append(np.array([node.value], dtype=np.float64))
        elif isinstance(node, NDArray):
            layout.append(LeafSpec(path, f"nd:{node.elem_kind}", node.dims))
            chunks.append(node.to_numpy().astype(np.float64).ravel())
        elif isinstance(node, List):
            if not node.items:
                extras.append((path, node))
            for i, item in enumerate(node.items):
                visit(item, path + (i,))
        elif isinstance(node, Map):
            if not node.entries:
                extras.append((path, node))
            for key in sorted(node.entries):
                visit(node.entries[key], path + (key,))
        else:  # Null, Bool, String, Time
            extras.append((path, node))

    visit(value, ())
    vector = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.float64)
    return tuple(layout), vector, extras


def recompose(
    layout: tuple[LeafSpec, ...],
    vector: np.ndarray,
    extras: list[tuple[tuple, DataObject]],
) -> DataObject:
    """Rebuild the tree from a layout, vector, and extracted leaves."""
    leaves: list[tuple[tuple, DataObject]] = list(extras)
    offset = 0
    for spec in layout:
        chunk = np.asarray(vector[offset : offset + spec.size], dtype=np.float64)
        offset += spec.size
        leaves.append((spec.path, _leaf_from_chunk(spec, chunk)))
    if offset != len(vector):
        raise ValueError(f"vector length {len(vector)} does not match layout ({offset})")
    return _assemble(leaves)


def _leaf_from_chunk(spec: LeafSpec, chunk: np.ndarray) -> DataObject:
    if spec.kind == "float64":
        return Float64(float(chunk[0]))
    if spec.kind == "float32":
        return Float32(float(chunk[0]))
    if spec.kind in ("int32", "int64"):
        lo, hi = _INT_BOUNDS[spec.kind]
        n = int(np.clip(np.rint(chunk[0]), lo, hi))
        return Int32(n) if spec.kind == "int32" else Int64(n)
    assert spec.kind.startswith("nd:")
    elem = spec.kind[3:]
    dtype = ELEM_KINDS[elem][2]
    if elem in ("f32", "f64"):
        arr = chunk.astype(dtype).reshape(spec.dims)
    else:
        lo, hi = _INT_BOUNDS[elem]
        arr = np.clip(np.rint(chunk), lo, hi).astype(dtype).reshape(spec.dims)
    return NDArray.from_numpy(arr)


def _assemble(leaves: list[tuple[tuple, DataObject]]) -> DataObject:
    if len(leaves) == 1 and leaves[0][0] == ():
        return leaves[0][1]
    if not leaves:
        raise ValueError("nothing to assemble")
    groups: dict = {}
    for path, leaf in leaves:
        if not path:
            raise ValueError("mixed root leaf and nested leaves")
        groups.setdefault(path[0], []).append((path[1:], leaf))
    if all(isinstance(seg, int) for seg in groups):
        indices = sorted(groups)
        if indices != list(range(len(indices))):
            raise ValueError(f"list indices with gaps: {indices}")
        return List(tuple(_assemble(groups[i]) for i in indices))
    if all(isinstance(seg, str) for seg in groups):
        return Map({key: _assemble(groups[key]) for key in groups})
    raise ValueError("mixed list and map segments at one level")


def shared_layout(values: list[DataObject]) -> tuple[LeafSpec, ...]:
    """The common numeric layout of a history, or raise NoSharedLayout."""
    if not values:
        raise NoSharedLayout("empty history")
    first, _, _ = decompose(values[0])
    for value in values[1:]:
        layout, _, _ = decompose(value)
        if layout != first:
            raise NoSharedLayout("numeric leaf layouts differ across snapshots")
    return first
