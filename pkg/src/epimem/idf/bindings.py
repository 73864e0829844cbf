"""Template-driven binding generation.

Renders each named object type of a schema into source text for some target
language. The template carries every piece of target syntax, so the generator
itself stays language-neutral: a unit template wraps the whole type, a field
template renders one field line, and the `kinds` table maps each type-object
kind to its rendering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .schema import SchemaDocument
from .typeobjects import (
    ImageType,
    LeafType,
    ListType,
    MapType,
    MatrixType,
    ObjectType,
    PairType,
    PointCloudType,
    TupleType,
    TypeObject,
    kind_name,
)


class TemplateCoverageError(KeyError):
    def __init__(self, kind: str, template: str):
        self.kind = kind
        super().__init__(f"template {template!r} has no rendering for kind {kind!r}")


@dataclass
class BindingTemplate:
    """Renderings for one target.

    `unit` placeholders: {name}, {fields}. `field_line` placeholders: {name},
    {type}, {optional} (the optional_mark or empty). `kinds` placeholders vary
    per kind: matrix {rows}/{cols}/{elem}; image {height}/{width}/{channels}/
    {pixel}; pointcloud {fields}; list {element}; map {value}; pair {first}/
    {second}; tuple {elements}; object {name}.
    """

    name: str
    unit: str
    field_line: str
    kinds: dict[str, str] = field(default_factory=dict)
    optional_mark: str = "?"
    field_separator: str = "\n"


def render_type(ty: TypeObject, template: BindingTemplate) -> str:
    kind = kind_name(ty)
    fmt = template.kinds.get(kind)
    if fmt is None:
        raise TemplateCoverageError(kind, template.name)
    if isinstance(ty, LeafType):
        return fmt
    if isinstance(ty, MatrixType):
        return fmt.format(rows=ty.rows, cols=ty.cols, elem=ty.elem_kind)
    if isinstance(ty, ImageType):
        return fmt.format(
            height=ty.height, width=ty.width, channels=ty.channels, pixel=ty.pixel_kind
        )
    if isinstance(ty, PointCloudType):
        return fmt.format(fields=", ".join(ty.point_fields))
    if isinstance(ty, ListType):
        return fmt.format(element=render_type(ty.element, template))
    if isinstance(ty, MapType):
        return fmt.format(value=render_type(ty.value, template))
    if isinstance(ty, PairType):
        return fmt.format(
            first=render_type(ty.first, template),
            second=render_type(ty.second, template),
        )
    if isinstance(ty, TupleType):
        return fmt.format(
            elements=", ".join(render_type(t, template) for t in ty.elements)
        )
    if isinstance(ty, ObjectType):
        return fmt.format(name=ty.name or "<anonymous>")
    return fmt


def emit_binding_stubs(
    schema: SchemaDocument, template: BindingTemplate
) -> dict[str, str]:
    """One rendered unit per named object type, in declaration order."""
    units: dict[str, str] = {}
    for name, ty in schema.types.items():
        lines = [
            template.field_line.format(
                name=fname,
                type=render_type(fld.type, template),
                optional=template.optional_mark if fld.optional else "",
            )
            for fname, fld in ty.fields.items()
        ]
        units[name] = template.unit.format(
            name=name, fields=template.field_separator.join(lines)
        )
    return units


# Echoes each field with its kind; handy for inspection and tests.
DEBUG_TEMPLATE = BindingTemplate(
    name="debug",
    unit="{name}:\n{fields}\n",
    field_line="  {name}: {type}{optional}",
    kinds={
        "int": "int",
        "long": "long",
        "float": "float",
        "double": "double",
        "bool": "bool",
        "string": "string",
        "time": "time",
        "matrix": "matrix({rows}x{cols} {elem})",
        "orientation": "orientation",
        "image": "image({height}x{width}x{channels} {pixel})",
        "pointcloud": "pointcloud({fields})",
        "list": "list({element})",
        "map": "map({value})",
        "pair": "pair({first}, {second})",
        "tuple": "tuple({elements})",
        "object": "{name}",
    },
)

# Plain dataclass stubs with conversion helpers against the variant values.
PYTHON_TEMPLATE = BindingTemplate(
    name="python",
    unit=(
        "@dataclass\n"
        "class {name}:\n"
        "{fields}\n"
        "\n"
        "    def to_data_object(self) -> Map:\n"
        "        return idf.from_python(asdict(self))\n"
        "\n"
        "    @classmethod\n"
        "    def from_data_object(cls, value: Map) -> \"{name}\":\n"
        "        return cls(**idf.to_python(value))\n"
    ),
    field_line="    {name}: {type}{optional}",
    optional_mark=" | None = None",
    kinds={
        "int": "int",
        "long": "int",
        "float": "float",
        "double": "float",
        "bool": "bool",
        "string": "str",
        "time": "int",
        "matrix": "np.ndarray",
        "orientation": "np.ndarray",
        "image": "np.ndarray",
        "pointcloud": "np.ndarray",
        "list": "list[{element}]",
        "map": "dict[str, {value}]",
        "pair": "tuple[{first}, {second}]",
        "tuple": "tuple[{elements}]",
        "object": "\"{name}\"",
    },
)
