import pytest

from epimem import idf
from epimem.idf import (
    DEBUG_TEMPLATE,
    BindingTemplate,
    LeafType,
    ListType,
    MatrixType,
    ObjectType,
    OrientationType,
    SchemaCycleError,
    SchemaParseError,
    SchemaResolutionError,
    TemplateCoverageError,
    emit_binding_stubs,
    parse_schema,
)

POSE_XML = """
<schema>
  <object name="Pose">
    <field name="position" type="matrix(3,1,f32)"/>
    <field name="orientation" type="orientation"/>
  </object>
</schema>
"""


def test_parse_pose():
    doc = parse_schema(POSE_XML)
    pose = doc.get("Pose")
    assert pose.name == "Pose"
    assert list(pose.fields) == ["position", "orientation"]
    assert pose.fields["position"].type == MatrixType(3, 1, "f32")
    assert pose.fields["orientation"].type == OrientationType()


def test_unresolved_reference():
    xml = """<schema><object name="A"><field name="f" type="Foo"/></object></schema>"""
    with pytest.raises(SchemaResolutionError) as err:
        parse_schema(xml)
    assert err.value.name == "Foo"
    assert err.value.location == "A.f"


def test_mutual_containment_is_a_cycle():
    xml = """
    <schema>
      <object name="A"><field name="b" type="B"/></object>
      <object name="B"><field name="a" type="A"/></object>
    </schema>
    """
    with pytest.raises(SchemaCycleError):
        parse_schema(xml)


def test_self_containment_is_a_cycle():
    xml = """<schema><object name="A"><field name="a" type="list(A)"/></object></schema>"""
    with pytest.raises(SchemaCycleError):
        parse_schema(xml)


def test_imports_resolve():
    base = parse_schema(POSE_XML)
    xml = """<schema><object name="Track"><field name="pose" type="Pose"/></object></schema>"""
    doc = parse_schema(xml, imports=[base])
    assert doc.get("Track").fields["pose"].type.name == "Pose"


def test_malformed_markup():
    with pytest.raises(SchemaParseError):
        parse_schema("<schema><object></schema>")


def test_unknown_kind_and_bad_args():
    with pytest.raises(SchemaParseError):
        parse_schema('<schema><object name="A"><field name="f" type="frob(1)"/></object></schema>')
    with pytest.raises(SchemaParseError):
        parse_schema('<schema><object name="A"><field name="f" type="matrix(3,f32)"/></object></schema>')


def test_nested_containers_and_optional():
    xml = """
    <schema>
      <object name="Scene">
        <field name="tags" type="list(string)"/>
        <field name="scores" type="map(double)"/>
        <field name="extent" type="pair(double,double)"/>
        <field name="cloud" type="pointcloud(x,y,z)" optional="true"/>
      </object>
    </schema>
    """
    scene = parse_schema(xml).get("Scene")
    assert scene.fields["tags"].type == ListType(LeafType("string"))
    assert scene.fields["cloud"].optional
    assert scene.required_fields == ("tags", "scores", "extent")


def test_debug_binding_echo():
    units = emit_binding_stubs(parse_schema(POSE_XML), DEBUG_TEMPLATE)
    assert list(units) == ["Pose"]
    text = units["Pose"]
    assert "position: matrix(3x1 f32)" in text
    assert "orientation: orientation" in text


def test_empty_schema_empty_output():
    assert emit_binding_stubs(parse_schema("<schema/>"), DEBUG_TEMPLATE) == {}


def test_template_coverage_error():
    xml = """<schema><object name="A"><field name="f" type="tuple(int,int)"/></object></schema>"""
    doc = parse_schema(xml)
    gap = BindingTemplate(
        name="gappy",
        unit="{name} {fields}",
        field_line="{name}:{type}{optional}",
        kinds={"int": "int"},
    )
    with pytest.raises(TemplateCoverageError):
        emit_binding_stubs(doc, gap)


def test_binding_regeneration_deterministic():
    doc = parse_schema(POSE_XML)
    assert emit_binding_stubs(doc, DEBUG_TEMPLATE) == emit_binding_stubs(doc, DEBUG_TEMPLATE)


def test_python_template_renders():
    units = emit_binding_stubs(parse_schema(POSE_XML), idf.PYTHON_TEMPLATE)
    assert "class Pose:" in units["Pose"]
    assert "def to_data_object" in units["Pose"]
