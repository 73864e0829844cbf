"""Golden-vector corpus for cross-implementation codec conformance.

Deterministic set of encoded values covering every tag, edge values and
nesting patterns. Any conforming codec must decode each vector and re-encode
it to the identical bytes. Regeneration is byte-stable across runs.
"""

from __future__ import annotations

import json
import random
import struct
from pathlib import Path

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
    canonical,
    decode,
    encode,
)

VERSION = 1


def _handcrafted() -> list[tuple[str, DataObject]]:
    vectors: list[tuple[str, DataObject]] = [
        ("null", Null()),
        ("bool_true", Bool(True)),
        ("bool_false", Bool(False)),
        ("int32_zero", Int32(0)),
        ("int32_min", Int32(-(2**31))),
        ("int32_max", Int32(2**31 - 1)),
        ("int64_answer", Int64(42)),
        ("int64_min", Int64(-(2**63))),
        ("int64_max", Int64(2**63 - 1)),
        ("float32_pi", Float32(3.140625)),
        ("float32_neg_inf", Float32(float("-inf"))),
        ("float64_e", Float64(2.718281828459045)),
        ("float64_tiny", Float64(5e-324)),
        ("string_empty", String("")),
        ("string_cup", String("cup")),
        ("string_unicode", String("blåbær 中文 \U0001f916")),
        ("time_epoch", Time(0)),
        ("time_paper_stamp", Time(1645189616492182)),
        ("time_negative", Time(-62135596800000000)),
        ("ndarray_empty_dims", NDArray("f64", (), struct.pack("<d", 1.5))),
        ("ndarray_zero_extent", NDArray("i32", (0, 3), b"")),
        ("ndarray_u8", NDArray("u8", (2, 3), bytes(range(6)))),
        ("ndarray_i32", NDArray("i32", (3,), struct.pack("<3i", -1, 0, 1))),
        ("ndarray_i64", NDArray("i64", (2,), struct.pack("<2q", -(2**40), 2**40))),
        (
            "ndarray_f32_quaternion",
            NDArray("f32", (4,), struct.pack("<4f", 0.0, 0.0, 0.0, 1.0)),
        ),
        ("ndarray_f64", NDArray("f64", (2, 2), struct.pack("<4d", 0.5, -0.5, 1e300, -1e-300))),
        ("list_empty", List(())),
        ("list_mixed", List((Int64(1), String("two"), Null(), Bool(False)))),
        ("list_nested", List((List((List((Int32(7),)),)),))),
        ("map_empty", Map({})),
        ("map_single", Map({"x": Float64(1.0)})),
        (
            "map_sorting",
            Map({"zebra": Int32(1), "apple": Int32(2), "Mango": Int32(3), "_": Int32(4)}),
        ),
        (
            "map_unicode_keys",
            Map({"ä": Int32(1), "a": Int32(2), "中": Int32(3)}),
        ),
        (
            "snapshot_like",
            Map(
                {
                    "id": String("Grasp/Affordance/MyGraspPlanner/blue-cup"),
                    "t": Time(1645189616492182),
                    "instances": List(
                        (
                            Map(
                                {
                                    "pose": NDArray(
                                        "f32", (4,), struct.pack("<4f", 0, 0, 0, 1)
                                    ),
                                    "score": Float64(0.875),
                                }
                            ),
                        )
                    ),
                }
            ),
        ),
        (
            "moderate_payload",
            Map(
                {
                    "value": Int64(1099511627776),
                    "label": String("abcde"),
                    "link": String("WM/C/P/ent001/000001"),
                }
            ),
        ),
    ]
    return vectors


def _seeded(count: int) -> list[tuple[str, DataObject]]:
    rng = random.Random(0xEA51DE)
    keys = "abcdefghijklmnop_äö中"

    def gen(depth: int) -> DataObject:
        choices = ["null", "bool", "i32", "i64", "f32", "f64", "str", "time", "arr"]
        if depth > 0:
            choices += ["list", "map", "list", "map"]
        pick = rng.choice(choices)
        if pick == "null":
            return Null()
        if pick == "bool":
            return Bool(rng.random() < 0.5)
        if pick == "i32":
            return Int32(rng.randint(-(2**31), 2**31 - 1))
        if pick == "i64":
            return Int64(rng.randint(-(2**63), 2**63 - 1))
        if pick == "f32":
            return Float32(struct.unpack("<f", struct.pack("<f", rng.uniform(-1e6, 1e6)))[0])
        if pick == "f64":
            return Float64(rng.uniform(-1e12, 1e12))
        if pick == "str":
            return String("".join(rng.choice(keys) for _ in range(rng.randint(0, 12))))
        if pick == "time":
            return Time(rng.randint(-(2**48), 2**48))
        if pick == "arr":
            kind, width = rng.choice([("u8", 1), ("i32", 4), ("i64", 8), ("f32", 4), ("f64", 8)])
            dims = tuple(rng.randint(0, 3) for _ in range(rng.randint(0, 3)))
            n = 1
            for d in dims:
                n *= d
            if kind == "f32":
                data = b"".join(struct.pack("<f", rng.uniform(-100, 100)) for _ in range(n))
            elif kind == "f64":
                data = b"".join(struct.pack("<d", rng.uniform(-100, 100)) for _ in range(n))
            else:
                data = rng.randbytes(n * width)
            return NDArray(kind, dims, data)
        if pick == "list":
            return List(tuple(gen(depth - 1) for _ in range(rng.randint(0, 4))))
        entries = {}
        for _ in range(rng.randint(0, 4)):
            entries["".join(rng.choice(keys) for _ in range(rng.randint(1, 6)))] = gen(
                depth - 1
            )
        return Map(entries)

    return [(f"seeded_{i:03d}", canonical(gen(3))) for i in range(count)]


def make_vectors(seeded_count: int = 80) -> list[tuple[str, DataObject]]:
    return _handcrafted() + _seeded(seeded_count)


def write_corpus(directory: str | Path) -> int:
    directory = Path(directory)
    vectors_dir = directory / "vectors"
    vectors_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"version": VERSION, "vectors": []}
    for i, (name, value) in enumerate(make_vectors()):
        filename = f"{i:03d}_{name}.bin"
        (vectors_dir / filename).write_bytes(encode(value))
        manifest["vectors"].append({"file": filename, "name": name})
    with open(directory / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1)
    return len(manifest["vectors"])


def verify_corpus(directory: str | Path) -> int:
    """Every vector must decode and re-encode byte-identically."""
    directory = Path(directory)
    with open(directory / "manifest.json") as f:
        manifest = json.load(f)
    checked = 0
    for entry in manifest["vectors"]:
        raw = (directory / "vectors" / entry["file"]).read_bytes()
        value = decode(raw)
        if encode(value) != raw:
            raise AssertionError(f"golden vector {entry['file']} is not canonical")
        if decode(encode(canonical(value))) != value:
            raise AssertionError(f"golden vector {entry['file']} round trip failed")
        checked += 1
    return checked
