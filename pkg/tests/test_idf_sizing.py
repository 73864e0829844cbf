from hypothesis import given, settings

from epimem import idf
from epimem.idf import payload_size

from strategies import data_objects


def test_leaf_sizes():
    assert payload_size(idf.Null()) == 0
    assert payload_size(idf.Bool(True)) == 1
    assert payload_size(idf.Int32(1)) == 4
    assert payload_size(idf.Float32(1.0)) == 4
    assert payload_size(idf.Int64(42)) == 8
    assert payload_size(idf.Float64(1.0)) == 8
    assert payload_size(idf.Time(0)) == 8


def test_string_counts_utf8_bytes():
    assert payload_size(idf.String("cup")) == 3
    assert payload_size(idf.String("é")) == 2


def test_ndarray_counts_buffer():
    assert payload_size(idf.NDArray("u8", (128, 128, 3), bytes(49152))) == 49152


def test_containers_add_no_overhead():
    value = idf.Map({"a": idf.Int64(1), "b": idf.List((idf.Int32(2), idf.Null()))})
    assert payload_size(value) == 8 + 4 + 0


@given(data_objects(max_leaves=8), data_objects(max_leaves=8))
@settings(max_examples=100, deadline=None)
def test_size_additivity(a, b):
    assert payload_size(idf.List((a, b))) == payload_size(a) + payload_size(b)
