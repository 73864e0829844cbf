"""Prediction by querying a future timestamp.

Two methods: a fast working-memory extrapolator (per-leaf least-squares line
over the last few snapshots) and the long-term memory's latent dynamics model
(encode, iterate z' = A z + b, decode). Dispatch is deterministic: `auto`
prefers the fast path when enough same-layout snapshots are resident,
otherwise falls back to a non-stale model with dynamics. Prediction is a pure
read; it never mutates the store and results are never stored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .idf import DataObject, List
from .ltm.flatten import decompose, recompose
from .ltm.store import LtmStore
from .model.ids import MemoryID, format_id
from .model.records import EntityInstance, EntitySnapshot, Tier
from .model.store import Entity, MemoryStore

DEFAULT_BASIS = 5
MIN_BASIS = 2


class PredictionError(ValueError):
    code = "prediction-failed"


class InsufficientData(PredictionError):
    code = "insufficient-data"


class StaleModel(PredictionError):
    code = "stale-model"


class NonFutureTimestamp(PredictionError):
    code = "non-future-timestamp"


@dataclass(frozen=True)
class PredictionRequest:
    entity_id: MemoryID
    t_future: int
    source: str = "auto"  # auto | wm | ltm


@dataclass(frozen=True)
class PredictionResult:
    data: tuple[DataObject, ...]  # one predicted value per instance
    method: str  # wm-linear | ltm-latent
    basis_count: int
    horizon_us: int

    def as_snapshot(self, timestamp: int) -> EntitySnapshot:
        from .idf import Bool, Map, String

        instances = tuple(
            EntityInstance(
                i, data, Map({"synthetic": Bool(True), "method": String(self.method)})
            )
            for i, data in enumerate(self.data)
        )
        return EntitySnapshot(timestamp, instances, tier=Tier.WM, synthetic=True)


def _snapshot_value(snapshot: EntitySnapshot) -> DataObject:
    return List(tuple(inst.data for inst in snapshot.instances))


def _wm_basis(entity: Entity, k_basis: int) -> list[tuple[int, DataObject]]:
    """Most recent run of WM snapshots sharing the latest snapshot's layout."""
    if not entity.order:
        return []
    latest_value = _snapshot_value(entity.timeline[entity.order[-1]])
    target_layout, _, _ = decompose(latest_value)
    basis: list[tuple[int, DataObject]] = []
    for ts in reversed(entity.order):
        value = _snapshot_value(entity.timeline[ts])
        layout, _, _ = decompose(value)
        if layout != target_layout:
            break
        basis.append((ts, value))
        if len(basis) == k_basis:
            break
    basis.reverse()
    return basis


def _predict_wm_linear(
    entity: Entity, t_future: int, k_basis: int
) -> tuple[DataObject, int]:
    basis = _wm_basis(entity, k_basis)
    if len(basis) < MIN_BASIS:
        raise InsufficientData(
            f"{format_id(entity.entity_id)} has {len(basis)} usable snapshots, need {MIN_BASIS}"
        )
    layout, _, latest_extras = decompose(basis[-1][1])
    t0 = basis[-1][0]
    times = np.array([(ts - t0) / 1e6 for ts, _ in basis], dtype=np.float64)
    rows = np.vstack([decompose(value)[1] for _, value in basis])
    t_mean = times.mean()
    t_var = float(np.sum((times - t_mean) ** 2))
    means = rows.mean(axis=0)
    if t_var == 0.0:
        slope = np.zeros(rows.shape[1])
    else:
        slope = (times - t_mean) @ (rows - means) / t_var
    intercept = means - slope * t_mean
    predicted = intercept + slope * ((t_future - t0) / 1e6)
    return recompose(layout, predicted, latest_extras), len(basis)


def _predict_ltm_latent(
    entity: Entity, ltm: LtmStore | None, t_future: int
) -> tuple[DataObject, int, int]:
    if ltm is None:
        raise InsufficientData("no long-term store attached")
    model = ltm.model_for(entity.entity_id)
    if model is None or not model.has_dynamics:
        raise InsufficientData(
            f"no usable latent model for {format_id(entity.entity_id)}"
        )
    if model.stale:
        raise StaleModel(f"latent model for {format_id(entity.entity_id)} is stale")
    latest_ts = entity.latest_timestamp
    if latest_ts is not None:
        latest_value = _snapshot_value(entity.timeline[latest_ts])
    else:
        stamps = ltm.entity_timestamps(entity.entity_id)
        if not stamps:
            raise InsufficientData(f"{format_id(entity.entity_id)} has no snapshots")
        latest_ts = stamps[-1]
        latest_value = _snapshot_value(ltm.recall(entity.entity_id.with_snapshot(latest_ts)))
    z, extras = model.encode_value(latest_value)
    steps = max(0, (t_future - latest_ts) // model.step_us)
    z = model.predict_vector(z, int(steps))
    return model.decode_value(z, extras), int(steps), latest_ts


def predict(
    store: MemoryStore,
    request: PredictionRequest,
    ltm: LtmStore | None = None,
    k_basis: int = DEFAULT_BASIS,
) -> PredictionResult:
    k_basis = max(MIN_BASIS, k_basis)
    with store.lock:
        entity = store.find_entity(request.entity_id)
        if entity is None:
            raise InsufficientData(f"unknown entity {format_id(request.entity_id)}")
        latest = entity.latest_timestamp
        if latest is not None and request.t_future <= latest:
            raise NonFutureTimestamp(
                f"{request.t_future} is not after the latest snapshot {latest}"
            )
        source = request.source
        if source == "auto":
            source = "wm" if len(_wm_basis(entity, k_basis)) >= k_basis else "ltm"
            if source == "ltm" and ltm is not None:
                model = ltm.model_for(request.entity_id)
                if model is None or not model.has_dynamics or model.stale:
                    # no usable model; fall back to whatever WM can offer
                    source = "wm"
        if source == "wm":
            value, basis_count = _predict_wm_linear(entity, request.t_future, k_basis)
            horizon = request.t_future - (latest if latest is not None else request.t_future)
            method = "wm-linear"
        elif source == "ltm":
            value, steps, basis_ts = _predict_ltm_latent(entity, ltm, request.t_future)
            basis_count = 1
            horizon = request.t_future - basis_ts
            method = "ltm-latent"
        else:
            raise PredictionError(f"unknown prediction source {request.source!r}")
    if not isinstance(value, List):
        raise PredictionError("prediction did not produce an instance list")
    return PredictionResult(
        data=tuple(value.items),
        method=method,
        basis_count=basis_count,
        horizon_us=horizon,
    )
