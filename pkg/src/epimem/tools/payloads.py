"""Benchmark payload classes.

Three object complexities with exact semantic sizes: simple is a single long
(8 bytes), moderate is a long + five-char label + 20-byte memory link
(33 bytes), complex adds a 128x128x3 image (49152 bytes), two links, a nested
object and a fixed-size map for 49225 bytes total (the non-image remainder is
fixed at 73 = 2x20 + 8 + 25). Generation is deterministic per (seed, index).
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from ..idf import DataObject, Int64, Map, NDArray, String

KINDS = ("simple", "moderate", "complex")

IMAGE_SHAPE = (128, 128, 3)
IMAGE_BYTES = 128 * 128 * 3  # 49152
SIMPLE_SIZE = 8
MODERATE_SIZE = 33
COMPLEX_SIZE = IMAGE_BYTES + 73  # 49225

_LABEL_ALPHABET = "abcdefghijklmnopqrstuvwxyz"


@dataclass(frozen=True)
class PayloadSpec:
    kind: str
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown payload kind {self.kind!r}")


@dataclass
class SimpleReading:
    value: int

    def to_data_object(self) -> DataObject:
        return Int64(self.value)

    @classmethod
    def from_data_object(cls, value: DataObject) -> "SimpleReading":
        return cls(value.value)


@dataclass
class ModerateReading:
    value: int
    label: str  # exactly 5 chars
    link: str  # exactly 20 bytes of ID text

    def to_data_object(self) -> DataObject:
        return Map(
            {
                "value": Int64(self.value),
                "label": String(self.label),
                "link": String(self.link),
            }
        )

    @classmethod
    def from_data_object(cls, value: Map) -> "ModerateReading":
        e = value.entries
        return cls(e["value"].value, e["label"].value, e["link"].value)


@dataclass
class ComplexReading:
    image: np.ndarray  # (128, 128, 3) u8
    link_a: str
    link_b: str
    nested_value: int
    meta_label: str
    meta_link: str

    def to_data_object(self) -> DataObject:
        return Map(
            {
                "image": NDArray.from_numpy(self.image),
                "link_a": String(self.link_a),
                "link_b": String(self.link_b),
                "nested": Map({"value": Int64(self.nested_value)}),
                "meta": Map(
                    {"label": String(self.meta_label), "link": String(self.meta_link)}
                ),
            }
        )

    @classmethod
    def from_data_object(cls, value: Map) -> "ComplexReading":
        e = value.entries
        return cls(
            image=e["image"].to_numpy(),
            link_a=e["link_a"].value,
            link_b=e["link_b"].value,
            nested_value=e["nested"].entries["value"].value,
            meta_label=e["meta"].entries["label"].value,
            meta_link=e["meta"].entries["link"].value,
        )


def make_link(rng: random.Random) -> str:
    link = f"WM/C/P/ent{rng.randint(0, 999):03d}/{rng.randint(0, 999_999):06d}"
    assert len(link.encode("utf-8")) == 20
    return link


def make_label(rng: random.Random) -> str:
    return "".join(rng.choice(_LABEL_ALPHABET) for _ in range(5))


def make_reading(spec: PayloadSpec, index: int):
    rng = random.Random(spec.seed * 1_000_003 + index)
    if spec.kind == "simple":
        return SimpleReading(rng.randint(0, 2**40))
    if spec.kind == "moderate":
        return ModerateReading(rng.randint(0, 2**40), make_label(rng), make_link(rng))
    image_rng = np.random.default_rng((spec.seed * 2_654_435_761 + index) % 2**32)
    base = image_rng.integers(0, 40, size=(1, 1, 3), dtype=np.uint8)
    gradient = np.arange(128, dtype=np.uint16)[:, None, None] + base
    image = (gradient % 256).astype(np.uint8) * np.ones(IMAGE_SHAPE, dtype=np.uint8)
    return ComplexReading(
        image=image,
        link_a=make_link(rng),
        link_b=make_link(rng),
        nested_value=rng.randint(0, 2**40),
        meta_label=make_label(rng),
        meta_link=make_link(rng),
    )


def from_data_object(kind: str, value: DataObject):
    if kind == "simple":
        return SimpleReading.from_data_object(value)
    if kind == "moderate":
        return ModerateReading.from_data_object(value)
    return ComplexReading.from_data_object(value)
