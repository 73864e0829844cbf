from epimem.idf import encode, payload_size
from epimem.tools import (
    COMPLEX_SIZE,
    IMAGE_BYTES,
    MODERATE_SIZE,
    SIMPLE_SIZE,
    PayloadSpec,
    from_data_object,
    make_reading,
)


def test_exact_sizes():
    assert payload_size(make_reading(PayloadSpec("simple"), 0).to_data_object()) == 8
    assert payload_size(make_reading(PayloadSpec("moderate"), 0).to_data_object()) == 33
    assert payload_size(make_reading(PayloadSpec("complex"), 0).to_data_object()) == 49225
    assert (SIMPLE_SIZE, MODERATE_SIZE, COMPLEX_SIZE) == (8, 33, 49225)


def test_image_share():
    obj = make_reading(PayloadSpec("complex"), 3).to_data_object()
    assert payload_size(obj.entries["image"]) == IMAGE_BYTES == 49152
    remainder = payload_size(obj) - payload_size(obj.entries["image"])
    assert remainder == 73


def test_generation_is_deterministic():
    a = make_reading(PayloadSpec("complex", seed=5), 7).to_data_object()
    b = make_reading(PayloadSpec("complex", seed=5), 7).to_data_object()
    assert encode(a) == encode(b)
    c = make_reading(PayloadSpec("complex", seed=6), 7).to_data_object()
    assert encode(a) != encode(c)


def test_round_trip_through_business_objects():
    for kind in ("simple", "moderate", "complex"):
        reading = make_reading(PayloadSpec(kind), 2)
        data = reading.to_data_object()
        back = from_data_object(kind, data)
        assert encode(back.to_data_object()) == encode(data)


def test_sizes_stable_across_indices():
    for kind, want in (("simple", 8), ("moderate", 33), ("complex", 49225)):
        for i in range(10):
            assert payload_size(make_reading(PayloadSpec(kind), i).to_data_object()) == want
