"""Synthetic recording generator for the compression benchmark.

Mimics a tabletop manipulation recording: stereo-like smooth camera frames at
20 Hz, a 43-joint configuration stream at 100 Hz confined to a low-rank
subspace, a slowly moving pose, and sparse text labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..idf import (
    DataObject,
    ImageType,
    Map,
    MatrixType,
    NDArray,
    ObjectField,
    ObjectType,
    OrientationType,
    String,
    TypeObject,
)


@dataclass(frozen=True)
class RecordingSpec:
    seed: int = 0
    duration_s: float = 3.0
    image_hz: float = 20.0
    joint_hz: float = 100.0
    pose_hz: float = 10.0
    label_hz: float = 1.0
    height: int = 480
    width: int = 640
    joint_count: int = 43
    joint_rank: int = 3


@dataclass
class EntityStream:
    name: str
    snapshots: list[tuple[int, DataObject]]
    annotation: TypeObject | None = None


def _camera_frames(spec: RecordingSpec, rng) -> EntityStream:
    h, w = spec.height, spec.width
    yy = np.linspace(0.0, 1.0, h)[:, None]
    xx = np.linspace(0.0, 1.0, w)[None, :]
    background = np.stack(
        [120 * yy + 40 * xx, 60 * yy + 80 * xx, 90 - 50 * yy * xx], axis=-1
    )
    count = int(spec.duration_s * spec.image_hz)
    spacing = int(1_000_000 / spec.image_hz)
    snapshots = []
    for i in range(count):
        phase = 2 * np.pi * i / max(count, 1)
        cx, cy = 0.5 + 0.3 * np.cos(phase), 0.5 + 0.3 * np.sin(phase)
        blob = 90.0 * np.exp(-(((xx - cx) ** 2) + ((yy - cy) ** 2)) / 0.02)
        frame = np.clip(background + blob[:, :, None], 0, 255).astype(np.uint8)
        value = Map({"image": NDArray.from_numpy(frame)})
        snapshots.append((i * spacing, value))
    annotation = ObjectType({"image": ObjectField(ImageType(h, w, 3))})
    return EntityStream("camera", snapshots, annotation)


def _joint_stream(spec: RecordingSpec, rng) -> EntityStream:
    basis, _ = np.linalg.qr(rng.standard_normal((spec.joint_count, spec.joint_rank)))
    base = rng.standard_normal(spec.joint_count) * 0.5
    state = np.zeros(spec.joint_rank)
    count = int(spec.duration_s * spec.joint_hz)
    spacing = int(1_000_000 / spec.joint_hz)
    snapshots = []
    for i in range(count):
        state = state + rng.standard_normal(spec.joint_rank) * 0.05
        positions = base + basis @ state
        value = Map({"positions": NDArray.from_numpy(positions.astype(np.float64))})
        snapshots.append((i * spacing, value))
    return EntityStream("joints", snapshots)


def _pose_stream(spec: RecordingSpec, rng) -> EntityStream:
    count = int(spec.duration_s * spec.pose_hz)
    spacing = int(1_000_000 / spec.pose_hz)
    snapshots = []
    for i in range(count):
        t = i / max(count, 1)
        position = np.array([[t], [0.5 * t], [0.1]], dtype=np.float32)
        angle = np.pi * t
        orientation = np.array(
            [0.0, 0.0, np.sin(angle / 2), np.cos(angle / 2)], dtype=np.float32
        )
        value = Map(
            {
                "position": NDArray.from_numpy(position),
                "orientation": NDArray.from_numpy(orientation),
            }
        )
        snapshots.append((i * spacing, value))
    annotation = ObjectType(
        {
            "position": ObjectField(MatrixType(3, 1, "f32")),
            "orientation": ObjectField(OrientationType()),
        }
    )
    return EntityStream("pose", snapshots, annotation)


def _label_stream(spec: RecordingSpec, rng) -> EntityStream:
    actions = ("reach", "grasp", "lift", "place", "retreat")
    count = max(1, int(spec.duration_s * spec.label_hz))
    spacing = int(1_000_000 / spec.label_hz)
    snapshots = [
        (i * spacing, Map({"action": String(actions[i % len(actions)])}))
        for i in range(count)
    ]
    return EntityStream("labels", snapshots)


def generate_recording(spec: RecordingSpec) -> list[EntityStream]:
    rng = np.random.default_rng(spec.seed)
    return [
        _camera_frames(spec, rng),
        _joint_stream(spec, rng),
        _pose_stream(spec, rng),
        _label_stream(spec, rng),
    ]
