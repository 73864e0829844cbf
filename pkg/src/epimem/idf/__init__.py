"""Introspectable variant data format: values, types, codec, casts, schemas."""

from .bindings import (
    BindingTemplate,
    DEBUG_TEMPLATE,
    PYTHON_TEMPLATE,
    TemplateCoverageError,
    emit_binding_stubs,
    render_type,
)
from .cast import (
    CastShapeError,
    TypedView,
    UninitializedField,
    adapt,
    cast,
    conformance_gaps,
)
from .codec import MalformedInput, decode, decode_from, encode
from .schema import (
    SchemaCycleError,
    SchemaDocument,
    SchemaError,
    SchemaParseError,
    SchemaResolutionError,
    parse_schema,
)
from .sizing import payload_size
from .typeobjects import (
    ImageType,
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
    Null,
    String,
    Time,
    canonical,
    from_python,
    get_at,
    is_data_object,
    set_at,
    to_python,
    walk,
)

__all__ = [name for name in dir() if not name.startswith("_")]
