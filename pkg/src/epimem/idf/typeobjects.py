"""Type objects: mirrored static type annotations for data objects.

Type annotations carry no data. Leaf kinds describe scalar variants, special
kinds describe values encoded into NDArrays with a fixed layout, and container
kinds compose other types. Object types have named fields which may be marked
optional.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

LEAF_KINDS = ("int", "long", "float", "double", "bool", "string", "time")


@dataclass(frozen=True)
class LeafType:
    kind: str

    def __post_init__(self):
        if self.kind not in LEAF_KINDS:
            raise ValueError(f"unknown leaf kind {self.kind!r}")


@dataclass(frozen=True)
class MatrixType:
    rows: int
    cols: int
    elem_kind: str


@dataclass(frozen=True)
class OrientationType:
    """Quaternion, 4 x f32 in order x, y, z, w."""


@dataclass(frozen=True)
class ImageType:
    height: int
    width: int
    channels: int
    pixel_kind: str = "u8"


@dataclass(frozen=True)
class PointCloudType:
    """N points, one f32 column per declared field; N is free."""

    point_fields: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "point_fields", tuple(self.point_fields))


@dataclass(frozen=True)
class ListType:
    element: "TypeObject"


@dataclass(frozen=True)
class TupleType:
    elements: tuple["TypeObject", ...]

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))


@dataclass(frozen=True)
class MapType:
    value: "TypeObject"


@dataclass(frozen=True)
class PairType:
    first: "TypeObject"
    second: "TypeObject"


@dataclass(frozen=True)
class ObjectField:
    type: "TypeObject"
    optional: bool = False


@dataclass(frozen=True)
class ObjectType:
    fields: dict[str, ObjectField] = field(default_factory=dict)
    name: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "fields", dict(self.fields))

    def __eq__(self, other):
        if not isinstance(other, ObjectType):
            return NotImplemented
        return self.name == other.name and self.fields == other.fields

    def __hash__(self):
        return hash((self.name, frozenset(self.fields)))

    @property
    def required_fields(self) -> tuple[str, ...]:
        return tuple(n for n, f in self.fields.items() if not f.optional)


TypeObject = Union[
    LeafType,
    MatrixType,
    OrientationType,
    ImageType,
    PointCloudType,
    ListType,
    TupleType,
    MapType,
    PairType,
    ObjectType,
]

SPECIAL_TYPES = (MatrixType, OrientationType, ImageType, PointCloudType)


def special_layout(ty: TypeObject) -> tuple[tuple[int | None, ...], str] | None:
    """Implied (dims, elem_kind) of a special kind; None extents are free."""
    if isinstance(ty, MatrixType):
        return (ty.rows, ty.cols), ty.elem_kind
    if isinstance(ty, OrientationType):
        return (4,), "f32"
    if isinstance(ty, ImageType):
        return (ty.height, ty.width, ty.channels), ty.pixel_kind
    if isinstance(ty, PointCloudType):
        return (None, len(ty.point_fields)), "f32"
    return None


def kind_name(ty: TypeObject) -> str:
    """Short kind identifier, used by binding templates and error messages."""
    if isinstance(ty, LeafType):
        return ty.kind
    return {
        MatrixType: "matrix",
        OrientationType: "orientation",
        ImageType: "image",
        PointCloudType: "pointcloud",
        ListType: "list",
        TupleType: "tuple",
        MapType: "map",
        PairType: "pair",
        ObjectType: "object",
    }[type(ty)]
