"""Latent encoding of entity histories.

The default encoder is linear: mean-center the flattened snapshot vectors,
take an orthonormal basis from the spectral decomposition of the sample
covariance, and keep the smallest dimension retaining at least 99% of the
variance (capped). One-step latent dynamics (z' = A z + b) are fitted by
least squares when at least three snapshots exist. The encoder interface is
pluggable: anything providing encode/decode/predict over the same model
record can replace it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..idf import DataObject
from ..model.ids import MemoryID
from .flatten import LeafSpec, NoSharedLayout, decompose, recompose, shared_layout

DEFAULT_VARIANCE_KEEP = 0.99
DEFAULT_K_MAX = 64


class DegenerateHistory(ValueError):
    pass


@dataclass
class LatentModel:
    entity_id: MemoryID
    layout: tuple[LeafSpec, ...]
    mean: np.ndarray  # (d,)
    basis: np.ndarray  # (d, k), orthonormal columns
    trained_from: int
    trained_to: int
    step_us: int
    dyn_a: np.ndarray | None = None  # (k, k)
    dyn_b: np.ndarray | None = None  # (k,)
    zero_variance: bool = False
    stale: bool = False

    @property
    def latent_dim(self) -> int:
        return self.basis.shape[1]

    @property
    def has_dynamics(self) -> bool:
        return self.dyn_a is not None

    def encode_vector(self, x: np.ndarray) -> np.ndarray:
        return self.basis.T @ (np.asarray(x, dtype=np.float64) - self.mean)

    def decode_vector(self, z: np.ndarray) -> np.ndarray:
        return self.mean + self.basis @ np.asarray(z, dtype=np.float64)

    def encode_value(self, value: DataObject) -> tuple[np.ndarray, list]:
        layout, x, extras = decompose(value)
        if layout != self.layout:
            raise NoSharedLayout("value layout does not match the trained model")
        return self.encode_vector(x), extras

    def decode_value(self, z: np.ndarray, extras: list) -> DataObject:
        return recompose(self.layout, self.decode_vector(z), extras)

    def step(self, z: np.ndarray) -> np.ndarray:
        if not self.has_dynamics:
            raise DegenerateHistory("model has no dynamics")
        return self.dyn_a @ z + self.dyn_b

    def predict_vector(self, z: np.ndarray, steps: int) -> np.ndarray:
        for _ in range(steps):
            z = self.step(z)
        return z


@dataclass
class EncodedHistory:
    model: LatentModel
    timestamps: list[int]
    latents: list[np.ndarray]
    extras: list[list]  # per-snapshot extracted non-numeric leaves


def train_latent_model(
    entity_id: MemoryID,
    history: list[tuple[int, DataObject]],
    variance_keep: float = DEFAULT_VARIANCE_KEEP,
    k_max: int = DEFAULT_K_MAX,
    k_override: int | None = None,
) -> EncodedHistory:
    """Fit the default linear encoder on a time-ordered entity history."""
    if len(history) < 2:
        raise DegenerateHistory(f"need >= 2 snapshots, got {len(history)}")
    timestamps = [ts for ts, _ in history]
    values = [value for _, value in history]
    layout = shared_layout(values)
    rows = []
    extras_per_snapshot = []
    for value in values:
        _, x, extras = decompose(value)
        rows.append(x)
        extras_per_snapshot.append(extras)
    data = np.vstack(rows) if rows[0].size else np.zeros((len(rows), 0))
    if data.shape[1] == 0:
        raise NoSharedLayout("history has no numeric leaves to encode")

    mean = data.mean(axis=0)
    centered = data - mean
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    total = float(np.sum(singular**2))
    zero_variance = total <= 1e-24
    if zero_variance:
        k = 1
    elif k_override is not None:
        k = max(1, min(k_override, vt.shape[0]))
    else:
        ratios = np.cumsum(singular**2) / total
        k = int(np.searchsorted(ratios, variance_keep - 1e-12) + 1)
        k = max(1, min(k, k_max, vt.shape[0]))
    basis = vt[:k].T

    step_us = int(np.median(np.diff(timestamps))) if len(timestamps) > 1 else 0
    model = LatentModel(
        entity_id=entity_id,
        layout=layout,
        mean=mean,
        basis=basis,
        trained_from=timestamps[0],
        trained_to=timestamps[-1],
        step_us=max(1, step_us),
        zero_variance=zero_variance,
    )
    latents = [model.encode_vector(x) for x in rows]
    if len(latents) >= 3:
        prev = np.vstack(latents[:-1])
        nxt = np.vstack(latents[1:])
        augmented = np.hstack([prev, np.ones((prev.shape[0], 1))])
        solution, *_ = np.linalg.lstsq(augmented, nxt, rcond=None)
        model = replace(model, dyn_a=solution[:k].T, dyn_b=solution[k])
    return EncodedHistory(model, timestamps, latents, extras_per_snapshot)
