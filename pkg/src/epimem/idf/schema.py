"""Schema files: static type declarations in XML.

Layout::

    <schema>
      <object name="Pose">
        <field name="position" type="matrix(3,1,f32)"/>
        <field name="orientation" type="orientation"/>
        <field name="label" type="string" optional="true"/>
      </object>
    </schema>

Type expressions are the leaf kinds (int, long, float, double, bool, string,
time), the special kinds matrix(rows,cols,elem), orientation,
image(height,width,channels,pixel), pointcloud(field,...), the containers
list(T), map(T), pair(T,T), tuple(T,...), or the name of an object declared
in the same document or an imported one. Cyclic by-value containment is
rejected.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Iterable

from .typeobjects import (
    ImageType,
    LEAF_KINDS,
    LeafType,
    ListType,
    MapType,
    MatrixType,
    ObjectField,
    ObjectType,
    OrientationType,
    PairType,
    PointCloudType,
    TupleType,
    TypeObject,
)
from .values import ELEM_KINDS


class SchemaError(ValueError):
    pass


class SchemaParseError(SchemaError):
    pass


class SchemaResolutionError(SchemaError):
    def __init__(self, name: str, location: str):
        self.name = name
        self.location = location
        super().__init__(f"unknown type {name!r} referenced at {location}")


class SchemaCycleError(SchemaError):
    def __init__(self, chain: list[str]):
        self.chain = chain
        super().__init__("cyclic type definition: " + " -> ".join(chain))


@dataclass
class SchemaDocument:
    types: dict[str, ObjectType] = field(default_factory=dict)

    def get(self, name: str) -> ObjectType:
        return self.types[name]

    def __contains__(self, name: str) -> bool:
        return name in self.types

    def names(self) -> list[str]:
        return list(self.types)


@dataclass(frozen=True)
class _Ref:
    """Unresolved reference to a named object type."""

    name: str


def parse_schema(text: str, imports: Iterable[SchemaDocument] = ()) -> SchemaDocument:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise SchemaParseError(f"malformed schema markup: {exc}") from None
    if root.tag != "schema":
        raise SchemaParseError(f"root element must be <schema>, got <{root.tag}>")

    raw: dict[str, dict[str, tuple[TypeObject | _Ref, bool]]] = {}
    for child in root:
        if child.tag != "object":
            raise SchemaParseError(f"unexpected element <{child.tag}> under <schema>")
        name = child.get("name")
        if not name:
            raise SchemaParseError("<object> requires a name attribute")
        if name in raw:
            raise SchemaParseError(f"duplicate object {name!r}")
        fields: dict[str, tuple[TypeObject | _Ref, bool]] = {}
        for fld in child:
            if fld.tag != "field":
                raise SchemaParseError(
                    f"unexpected element <{fld.tag}> in object {name!r}"
                )
            fname = fld.get("name")
            ftype = fld.get("type")
            if not fname or not ftype:
                raise SchemaParseError(
                    f"<field> in object {name!r} requires name and type attributes"
                )
            if fname in fields:
                raise SchemaParseError(f"duplicate field {name}.{fname}")
            optional = (fld.get("optional") or "false").lower() in ("true", "1", "yes")
            fields[fname] = (_parse_type_expr(ftype, f"{name}.{fname}"), optional)
        raw[name] = fields

    imported: dict[str, ObjectType] = {}
    for doc in imports:
        imported.update(doc.types)
    return _resolve(raw, imported)


def _parse_type_expr(expr: str, location: str) -> TypeObject | _Ref:
    expr = expr.strip()
    head, args = _split_call(expr, location)
    if args is None:
        if head in LEAF_KINDS:
            return LeafType(head)
        if head == "orientation":
            return OrientationType()
        if not head or any(c in head for c in "(),"):
            raise SchemaParseError(f"bad type expression {expr!r} at {location}")
        return _Ref(head)
    if head == "matrix":
        rows, cols, elem = _arity(args, 3, expr, location)
        return MatrixType(_int(rows, location), _int(cols, location), _elem(elem, location))
    if head == "image":
        h, w, c, pixel = _arity(args, 4, expr, location)
        return ImageType(
            _int(h, location), _int(w, location), _int(c, location), _elem(pixel, location)
        )
    if head == "pointcloud":
        if not args:
            raise SchemaParseError(f"pointcloud needs at least one field at {location}")
        return PointCloudType(tuple(a.strip() for a in args))
    if head == "list":
        (inner,) = _arity(args, 1, expr, location)
        return ListType(_parse_type_expr(inner, location))  # type: ignore[arg-type]
    if head == "map":
        (inner,) = _arity(args, 1, expr, location)
        return MapType(_parse_type_expr(inner, location))  # type: ignore[arg-type]
    if head == "pair":
        first, second = _arity(args, 2, expr, location)
        return PairType(
            _parse_type_expr(first, location),  # type: ignore[arg-type]
            _parse_type_expr(second, location),  # type: ignore[arg-type]
        )
    if head == "tuple":
        if not args:
            raise SchemaParseError(f"tuple needs at least one element at {location}")
        return TupleType(tuple(_parse_type_expr(a, location) for a in args))  # type: ignore[arg-type]
    raise SchemaParseError(f"unknown parameterized kind {head!r} at {location}")


def _split_call(expr: str, location: str) -> tuple[str, list[str] | None]:
    """Split 'head(a,b,...)' respecting nested parentheses; args None if no call."""
    if "(" not in expr:
        return expr, None
    head, rest = expr.split("(", 1)
    if not rest.endswith(")"):
        raise SchemaParseError(f"unbalanced parentheses in {expr!r} at {location}")
    body = rest[:-1]
    args, depth, start = [], 0, 0
    for i, ch in enumerate(body):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise SchemaParseError(f"unbalanced parentheses in {expr!r} at {location}")
        elif ch == "," and depth == 0:
            args.append(body[start:i])
            start = i + 1
    if depth != 0:
        raise SchemaParseError(f"unbalanced parentheses in {expr!r} at {location}")
    tail = body[start:]
    if tail.strip() or not args:
        args.append(tail)
    return head.strip(), [a.strip() for a in args]


def _arity(args: list[str], n: int, expr: str, location: str) -> list[str]:
    if len(args) != n:
        raise SchemaParseError(f"{expr!r} takes {n} arguments at {location}")
    return args


def _int(text: str, location: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise SchemaParseError(f"expected integer, got {text!r} at {location}") from None
    if value < 0:
        raise SchemaParseError(f"negative extent {value} at {location}")
    return value


def _elem(text: str, location: str) -> str:
    if text not in ELEM_KINDS:
        raise SchemaParseError(f"unknown element kind {text!r} at {location}")
    return text


def _resolve(
    raw: dict[str, dict[str, tuple[TypeObject | _Ref, bool]]],
    imported: dict[str, ObjectType],
) -> SchemaDocument:
    _check_cycles(raw, imported)
    resolved: dict[str, ObjectType] = {}

    def resolve_name(name: str, location: str) -> ObjectType:
        if name in resolved:
            return resolved[name]
        if name in raw:
            return build(name)
        if name in imported:
            return imported[name]
        raise SchemaResolutionError(name, location)

    def resolve_type(ty: TypeObject | _Ref, location: str) -> TypeObject:
        if isinstance(ty, _Ref):
            return resolve_name(ty.name, location)
        if isinstance(ty, ListType):
            return ListType(resolve_type(ty.element, location))
        if isinstance(ty, MapType):
            return MapType(resolve_type(ty.value, location))
        if isinstance(ty, PairType):
            return PairType(
                resolve_type(ty.first, location), resolve_type(ty.second, location)
            )
        if isinstance(ty, TupleType):
            return TupleType(tuple(resolve_type(t, location) for t in ty.elements))
        return ty

    def build(name: str) -> ObjectType:
        fields = {
            fname: ObjectField(resolve_type(ty, f"{name}.{fname}"), optional)
            for fname, (ty, optional) in raw[name].items()
        }
        resolved[name] = ObjectType(fields, name=name)
        return resolved[name]

    for name in raw:
        if name not in resolved:
            build(name)
    return SchemaDocument(resolved)


def _check_cycles(
    raw: dict[str, dict[str, tuple[TypeObject | _Ref, bool]]],
    imported: dict[str, ObjectType],
) -> None:
    def refs_of(ty: TypeObject | _Ref) -> list[str]:
        if isinstance(ty, _Ref):
            return [ty.name]
        if isinstance(ty, ListType):
            return refs_of(ty.element)
        if isinstance(ty, MapType):
            return refs_of(ty.value)
        if isinstance(ty, PairType):
            return refs_of(ty.first) + refs_of(ty.second)
        if isinstance(ty, TupleType):
            return [r for t in ty.elements for r in refs_of(t)]
        return []

    WHITE, GRAY, BLACK = 0, 1, 2
    color = {name: WHITE for name in raw}
    stack: list[str] = []

    def visit(name: str) -> None:
        color[name] = GRAY
        stack.append(name)
        for _, (ty, _) in raw[name].items():
            for ref in refs_of(ty):
                if ref in raw:
                    if color[ref] == GRAY:
                        raise SchemaCycleError(stack[stack.index(ref) :] + [ref])
                    if color[ref] == WHITE:
                        visit(ref)
        stack.pop()
        color[name] = BLACK

    for name in raw:
        if color[name] == WHITE:
            visit(name)
