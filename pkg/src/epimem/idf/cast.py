"""Partial casts of data objects against type objects.

A cast never fabricates data: object fields are resolved independently by
name, fields without a representable source member stay uninitialized.
Numeric widening (int -> long, float -> double) is permitted, narrowing is
not. Only casts to leaf and special kinds can fail hard, and only when the
top-level variant is incompatible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .typeobjects import (
    LeafType,
    ListType,
    MapType,
    ObjectType,
    PairType,
    SPECIAL_TYPES,
    TupleType,
    TypeObject,
    kind_name,
    special_layout,
)
from .values import (
    Bool,
    DataObject,
    Float32,
    Float64,
    Int32,
    Int64,
    List,
    Map,
    NDArray,
    String,
    Time,
)


class CastShapeError(TypeError):
    """Value's top-level variant is incompatible with a leaf or special kind."""


class UninitializedField(KeyError):
    """A TypedView field without a source value was read."""


@dataclass
class TypedView:
    """Result of casting a value against a type.

    For object targets, `fields` holds the converted values of matched fields
    and `uninitialized` the names that have no representable source member.
    For all other targets the single converted value is in `value`.
    """

    source: DataObject
    target: TypeObject
    fields: dict[str, DataObject] = field(default_factory=dict)
    uninitialized: frozenset[str] = frozenset()
    value: DataObject | None = None

    @property
    def present(self) -> frozenset[str]:
        return frozenset(self.fields)

    def is_present(self, name: str) -> bool:
        return name in self.fields

    def __getitem__(self, name: str) -> DataObject:
        if name in self.uninitialized:
            raise UninitializedField(name)
        return self.fields[name]

    def get(self, name: str) -> DataObject | None:
        return self.fields.get(name)

    def conforms(self) -> bool:
        """True when every non-optional field of an object target is present."""
        if isinstance(self.target, ObjectType):
            return not any(n in self.uninitialized for n in self.target.required_fields)
        return self.value is not None


def adapt(value: DataObject, ty: TypeObject) -> DataObject | None:
    """Convert `value` to conform to `ty`, or None if it is not representable.

    Widening rewrites the variant (Int32 -> Int64, Float32 -> Float64);
    everything else passes through unchanged.
    """
    if isinstance(ty, LeafType):
        kind = ty.kind
        if kind == "int":
            return value if isinstance(value, Int32) else None
        if kind == "long":
            if isinstance(value, Int64):
                return value
            if isinstance(value, Int32):
                return Int64(value.value)
            return None
        if kind == "float":
            return value if isinstance(value, Float32) else None
        if kind == "double":
            if isinstance(value, Float64):
                return value
            if isinstance(value, Float32):
                return Float64(value.value)
            return None
        if kind == "bool":
            return value if isinstance(value, Bool) else None
        if kind == "string":
            return value if isinstance(value, String) else None
        if kind == "time":
            return value if isinstance(value, Time) else None
        raise AssertionError(kind)
    if isinstance(ty, SPECIAL_TYPES):
        if not isinstance(value, NDArray):
            return None
        dims, elem_kind = special_layout(ty)  # type: ignore[misc]
        if value.elem_kind != elem_kind or len(value.dims) != len(dims):
            return None
        for actual, expected in zip(value.dims, dims):
            if expected is not None and actual != expected:
                return None
        return value
    if isinstance(ty, ListType):
        if not isinstance(value, List):
            return None
        adapted = [adapt(item, ty.element) for item in value.items]
        if any(item is None for item in adapted):
            return None
        return List(tuple(adapted))  # type: ignore[arg-type]
    if isinstance(ty, (TupleType, PairType)):
        element_types = (
            ty.elements if isinstance(ty, TupleType) else (ty.first, ty.second)
        )
        if not isinstance(value, List) or len(value.items) != len(element_types):
            return None
        adapted = [adapt(item, t) for item, t in zip(value.items, element_types)]
        if any(item is None for item in adapted):
            return None
        return List(tuple(adapted))  # type: ignore[arg-type]
    if isinstance(ty, MapType):
        if not isinstance(value, Map):
            return None
        adapted_entries = {}
        for key, item in value.entries.items():
            adapted = adapt(item, ty.value)
            if adapted is None:
                return None
            adapted_entries[key] = adapted
        return Map(adapted_entries)
    if isinstance(ty, ObjectType):
        # partial semantics: any map is representable as any object
        return value if isinstance(value, Map) else None
    raise TypeError(f"not a TypeObject: {type(ty).__name__}")


def cast(value: DataObject, ty: TypeObject) -> TypedView:
    if isinstance(ty, ObjectType):
        fields: dict[str, DataObject] = {}
        missing = []
        source_entries = value.entries if isinstance(value, Map) else {}
        for name, fld in ty.fields.items():
            member = source_entries.get(name)
            adapted = adapt(member, fld.type) if member is not None else None
            if adapted is None:
                missing.append(name)
            else:
                fields[name] = adapted
        return TypedView(value, ty, fields=fields, uninitialized=frozenset(missing))
    adapted = adapt(value, ty)
    if adapted is None:
        if isinstance(ty, (LeafType, *SPECIAL_TYPES)):
            raise CastShapeError(
                f"cannot cast {type(value).__name__} to {kind_name(ty)}"
            )
        return TypedView(value, ty, uninitialized=frozenset({""}))
    return TypedView(value, ty, value=adapted)


def conformance_gaps(
    value: DataObject, ty: TypeObject, prefix: str = ""
) -> list[str]:
    """Dotted paths of non-optional object fields that are missing or
    not representable; empty when `value` minimally conforms to `ty`."""
    if isinstance(ty, ObjectType):
        if not isinstance(value, Map):
            return [prefix or "<root>"]
        gaps: list[str] = []
        for name, fld in ty.fields.items():
            path = f"{prefix}.{name}" if prefix else name
            member = value.entries.get(name)
            if member is None:
                if not fld.optional:
                    gaps.append(path)
                continue
            if isinstance(fld.type, ObjectType):
                gaps.extend(conformance_gaps(member, fld.type, path))
            elif adapt(member, fld.type) is None and not fld.optional:
                gaps.append(path)
        return gaps
    return [] if adapt(value, ty) is not None else [prefix or "<root>"]
