"""Tiered long-term storage.

On disk, per core segment::

    <root>/<memory>/<core>/records.log      length-prefixed record frames
    <root>/<memory>/<core>/sidecar.idx      sorted ID -> offset table
    <root>/<memory>/<core>/models/<provider>/<entity>.model

Records hold either online-tier blobs (losslessly compressed) or a latent
vector decoded through the entity's model. The sidecar index alone answers
existence and ID listings; blob decodes are counted so that property can be
checked. The log is append-only; forgetting compacts it and rewrites the
index. Latent records are appended only after the model file is durably
written, then the index entry swaps atomically.
"""

from __future__ import annotations

import logging
import os
import struct
import threading
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..idf import (
    Bool,
    DataObject,
    Int64,
    List,
    Map,
    NDArray,
    Null,
    String,
    Time,
    TypeObject,
    decode,
    encode,
)
from ..model.ids import MemoryID, format_id, parse_id
from ..model.records import EntityInstance, EntitySnapshot, Tier
from .codecs import compress_value, decompress_value, inflate, png_decompress, stored_size
from .filter import FilterPolicy, FilterState
from .flatten import LeafSpec, NoSharedLayout
from .latent import LatentModel, train_latent_model

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class NotFound(KeyError):
    pass


class IntegrityError(ValueError):
    pass


@dataclass
class IndexEntry:
    offset: int
    length: int
    tier: str  # "online" | "latent"


def _path_to_idf(path: tuple) -> List:
    return List(tuple(Int64(seg) if isinstance(seg, int) else String(seg) for seg in path))


def _path_from_idf(value: List) -> tuple:
    return tuple(
        seg.value if isinstance(seg, String) else int(seg.value) for seg in value.items
    )


def _layout_to_idf(layout: tuple[LeafSpec, ...]) -> List:
    return List(
        tuple(
            Map(
                {
                    "path": _path_to_idf(spec.path),
                    "kind": String(spec.kind),
                    "dims": List(tuple(Int64(d) for d in spec.dims)),
                }
            )
            for spec in layout
        )
    )


def _layout_from_idf(value: List) -> tuple[LeafSpec, ...]:
    specs = []
    for item in value.items:
        specs.append(
            LeafSpec(
                path=_path_from_idf(item.entries["path"]),
                kind=item.entries["kind"].value,
                dims=tuple(d.value for d in item.entries["dims"].items),
            )
        )
    return tuple(specs)


def _f64_array(arr: np.ndarray) -> NDArray:
    return NDArray.from_numpy(np.ascontiguousarray(arr, dtype=np.float64))


class _Segment:
    """One core segment's record log, index, and models."""

    def __init__(self, directory: Path, store: "LtmStore"):
        self.dir = directory
        self.store = store
        self.log_path = directory / "records.log"
        self.idx_path = directory / "sidecar.idx"
        self.index: dict[str, IndexEntry] = {}
        self.models: dict[str, LatentModel] = {}
        self._log = None
        self._open()

    # --- files ---------------------------------------------------------------

    def _open(self) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        fresh = not self.log_path.exists()
        self._log = open(self.log_path, "a+b")
        if fresh:
            self._log.write(struct.pack("<I", FORMAT_VERSION))
            self._log.flush()
        covered = self._load_index()
        self._recover_tail(covered)

    def _load_index(self) -> int:
        if not self.idx_path.exists():
            return 4
        raw = self.idx_path.read_bytes()
        if len(raw) < 16:
            return 4
        version, covered, count = struct.unpack_from("<IQI", raw, 0)
        if version != FORMAT_VERSION:
            raise IntegrityError(f"sidecar index version {version} unsupported")
        pos = 16
        for _ in range(count):
            (id_len,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            id_text = raw[pos : pos + id_len].decode("utf-8")
            pos += id_len
            offset, length, tier_code = struct.unpack_from("<QIB", raw, pos)
            pos += 13
            self.index[id_text] = IndexEntry(
                offset, length, "latent" if tier_code == 1 else "online"
            )
        return covered

    def _recover_tail(self, covered: int) -> None:
        self._log.seek(0, os.SEEK_END)
        end = self._log.tell()
        pos = max(covered, 4)
        while pos < end:
            self._log.seek(pos)
            header = self._log.read(4)
            if len(header) < 4:
                break
            (length,) = struct.unpack("<I", header)
            payload = self._log.read(length)
            if len(payload) < length:
                logger.warning("truncated frame at %d in %s", pos, self.log_path)
                break
            frame = decode(payload)
            id_text = frame.entries["id"].value
            tier = frame.entries["tier"].value
            self.index[id_text] = IndexEntry(pos, length + 4, tier)
            pos += 4 + length
        self._log.seek(0, os.SEEK_END)

    def write_index(self) -> None:
        self._log.flush()
        covered = self._log.tell()
        parts = [struct.pack("<IQI", FORMAT_VERSION, covered, len(self.index))]
        for id_text in sorted(self.index):
            entry = self.index[id_text]
            raw = id_text.encode("utf-8")
            parts.append(struct.pack("<H", len(raw)))
            parts.append(raw)
            parts.append(
                struct.pack("<QIB", entry.offset, entry.length, 1 if entry.tier == "latent" else 0)
            )
        tmp = self.idx_path.with_suffix(".idx.tmp")
        tmp.write_bytes(b"".join(parts))
        os.replace(tmp, self.idx_path)

    def append_frame(self, frame: Map) -> tuple[int, int]:
        payload = encode(frame)
        self._log.seek(0, os.SEEK_END)
        offset = self._log.tell()
        self._log.write(struct.pack("<I", len(payload)))
        self._log.write(payload)
        self._log.flush()
        return offset, len(payload) + 4

    def read_frame(self, entry: IndexEntry) -> Map:
        self._log.flush()
        with open(self.log_path, "rb") as f:
            f.seek(entry.offset)
            raw = f.read(entry.length)
        if len(raw) != entry.length:
            raise IntegrityError(f"short read at {entry.offset} in {self.log_path}")
        (length,) = struct.unpack_from("<I", raw, 0)
        if length + 4 != entry.length:
            raise IntegrityError(f"frame length mismatch at {entry.offset}")
        return decode(raw[4:])

    def close(self) -> None:
        if self._log is not None:
            self.write_index()
            self._log.flush()
            os.fsync(self._log.fileno())
            self._log.close()
            self._log = None

    # --- models ---------------------------------------------------------------

    def model_path(self, entity_id: MemoryID) -> Path:
        return (
            self.dir
            / "models"
            / entity_id.provider_segment
            / f"{entity_id.entity_name}.model"
        )

    def save_model(self, model: LatentModel) -> None:
        frame = Map(
            {
                "entity": String(format_id(model.entity_id)),
                "layout": _layout_to_idf(model.layout),
                "mean": _f64_array(model.mean),
                "basis": _f64_array(model.basis),
                "dyn_a": _f64_array(model.dyn_a) if model.dyn_a is not None else Null(),
                "dyn_b": _f64_array(model.dyn_b) if model.dyn_b is not None else Null(),
                "trained_from": Time(model.trained_from),
                "trained_to": Time(model.trained_to),
                "step_us": Int64(model.step_us),
                "zero_variance": Bool(model.zero_variance),
                "stale": Bool(model.stale),
            }
        )
        path = self.model_path(model.entity_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".model.tmp")
        with open(tmp, "wb") as f:
            f.write(struct.pack("<I", FORMAT_VERSION))
            f.write(encode(frame))
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
        self.models[format_id(model.entity_id)] = model

    def load_model(self, entity_id: MemoryID) -> LatentModel | None:
        key = format_id(entity_id)
        if key in self.models:
            return self.models[key]
        path = self.model_path(entity_id)
        if not path.exists():
            return None
        raw = path.read_bytes()
        (version,) = struct.unpack_from("<I", raw, 0)
        if version != FORMAT_VERSION:
            raise IntegrityError(f"model version {version} unsupported")
        frame = decode(raw[4:])
        e = frame.entries
        model = LatentModel(
            entity_id=parse_id(e["entity"].value),
            layout=_layout_from_idf(e["layout"]),
            mean=e["mean"].to_numpy(),
            basis=e["basis"].to_numpy(),
            trained_from=e["trained_from"].micros,
            trained_to=e["trained_to"].micros,
            step_us=e["step_us"].value,
            dyn_a=e["dyn_a"].to_numpy() if isinstance(e["dyn_a"], NDArray) else None,
            dyn_b=e["dyn_b"].to_numpy() if isinstance(e["dyn_b"], NDArray) else None,
            zero_variance=e["zero_variance"].value,
            stale=e["stale"].value,
        )
        self.models[key] = model
        return model


class LtmStore:
    """Long-term memory of one memory server."""

    def __init__(
        self,
        root: str | Path,
        memory_name: str,
        policy: FilterPolicy | None = None,
    ):
        self.root = Path(root)
        self.memory_name = memory_name
        self.policy = policy
        self.segments: dict[str, _Segment] = {}
        self.filters: dict[str, FilterState] = {}
        self.blob_decodes = 0
        self.lock = threading.RLock()
        base = self.root / memory_name
        if base.exists():
            for entry in sorted(base.iterdir()):
                if (entry / "records.log").exists():
                    self.segments[entry.name] = _Segment(entry, self)

    def _segment(self, core: str) -> _Segment:
        segment = self.segments.get(core)
        if segment is None:
            segment = self.segments[core] = _Segment(
                self.root / self.memory_name / core, self
            )
        return segment

    def close(self) -> None:
        with self.lock:
            for segment in self.segments.values():
                segment.close()

    def flush_index(self) -> None:
        with self.lock:
            for segment in self.segments.values():
                segment.write_index()

    # --- consolidation --------------------------------------------------------

    def consolidate(
        self,
        snapshot_id: MemoryID,
        snapshot: EntitySnapshot,
        links: tuple[tuple[MemoryID, MemoryID], ...] = (),
        annotation: TypeObject | None = None,
        consolidated_at: int | None = None,
    ) -> str:
        """Store a snapshot on the online tier; returns 'stored' or 'filtered'."""
        with self.lock:
            value = List(tuple(inst.data for inst in snapshot.instances))
            if self.policy is not None:
                key = format_id(snapshot_id.entity_id)
                state = self.filters.get(key)
                if state is None:
                    state = self.filters[key] = FilterState(self.policy)
                if not state.admit(snapshot.timestamp, value):
                    return "filtered"
            segment = self._segment(snapshot_id.core_segment)
            original = sum(
                len(encode(inst.data)) for inst in snapshot.instances
            )
            instances = []
            total_stored = 0
            for inst in snapshot.instances:
                blobs = compress_value(inst.data, annotation)
                total_stored += stored_size(blobs)
                instances.append(
                    Map(
                        {
                            "blobs": List(
                                tuple(
                                    Map(
                                        {
                                            "codec": String(b["codec"]),
                                            "path": _path_to_idf(b["path"]),
                                            "dims": List(
                                                tuple(Int64(d) for d in b["dims"])
                                            ),
                                            "data": NDArray(
                                                "u8", (len(b["data"]),), b["data"]
                                            ),
                                        }
                                    )
                                    for b in blobs
                                )
                            ),
                            "meta": inst.metadata,
                        }
                    )
                )
            frame = Map(
                {
                    "id": String(format_id(snapshot_id)),
                    "tier": String("online"),
                    "instances": List(tuple(instances)),
                    "sidecar": self._sidecar(
                        snapshot_id, snapshot, original, total_stored, links, consolidated_at
                    ),
                }
            )
            offset, length = segment.append_frame(frame)
            segment.index[format_id(snapshot_id)] = IndexEntry(offset, length, "online")
            return "stored"

    def _sidecar(
        self,
        snapshot_id: MemoryID,
        snapshot: EntitySnapshot,
        original: int,
        stored: int,
        links,
        consolidated_at: int | None,
        extracted: list | None = None,
    ) -> Map:
        from ..model.store import now_us

        return Map(
            {
                "provider": String(snapshot_id.provider_segment),
                "original_size": Int64(original),
                "stored_size": Int64(stored),
                "committed_at": Time(snapshot.timestamp),
                "consolidated_at": Time(
                    now_us() if consolidated_at is None else consolidated_at
                ),
                "extracted": List(
                    tuple(
                        Map({"path": _path_to_idf(path), "value": value})
                        for path, value in (extracted or [])
                    )
                ),
                "links": List(
                    tuple(
                        Map({"from": String(format_id(s)), "to": String(format_id(t))})
                        for s, t in links
                    )
                ),
            }
        )

    # --- metadata-only operations ----------------------------------------------

    def exists(self, snapshot_id: MemoryID) -> bool:
        with self.lock:
            segment = self.segments.get(snapshot_id.core_segment)
            return segment is not None and format_id(snapshot_id) in segment.index

    def list_ids(
        self,
        prefix: MemoryID | None = None,
        begin: int | None = None,
        end: int | None = None,
    ) -> list[MemoryID]:
        with self.lock:
            found = []
            for segment in self.segments.values():
                for id_text in segment.index:
                    mid = parse_id(id_text)
                    if prefix is not None and not prefix.is_prefix_of(mid):
                        continue
                    if begin is not None and mid.timestamp < begin:
                        continue
                    if end is not None and mid.timestamp > end:
                        continue
                    found.append(mid)
            found.sort(key=lambda m: m.components)
            return found

    def entity_timestamps(self, entity_id: MemoryID) -> list[int]:
        return [mid.timestamp for mid in self.list_ids(prefix=entity_id)]

    # --- recall -----------------------------------------------------------------

    def recall(self, snapshot_id: MemoryID) -> EntitySnapshot:
        with self.lock:
            segment = self.segments.get(snapshot_id.core_segment)
            entry = (
                segment.index.get(format_id(snapshot_id)) if segment is not None else None
            )
            if entry is None:
                raise NotFound(f"{format_id(snapshot_id)} is not in long-term storage")
            frame = segment.read_frame(entry)
            try:
                if entry.tier == "latent":
                    return self._recall_latent(segment, snapshot_id, frame)
                return self._recall_online(snapshot_id, frame)
            except (NotFound, IntegrityError):
                raise
            except Exception as exc:
                raise IntegrityError(
                    f"corrupt record for {format_id(snapshot_id)}: {exc}"
                ) from exc

    def _recall_online(self, snapshot_id: MemoryID, frame: Map) -> EntitySnapshot:
        instances = []
        for i, inst in enumerate(frame.entries["instances"].items):
            blobs = []
            for blob in inst.entries["blobs"].items:
                blobs.append(
                    {
                        "codec": blob.entries["codec"].value,
                        "path": _path_from_idf(blob.entries["path"]),
                        "dims": tuple(d.value for d in blob.entries["dims"].items),
                        "data": blob.entries["data"].data,
                    }
                )
            self.blob_decodes += len(blobs)
            data = decompress_value(blobs)
            instances.append(EntityInstance(i, data, inst.entries["meta"]))
        return EntitySnapshot(
            snapshot_id.timestamp, tuple(instances), tier=Tier.LTM_ONLINE
        )

    def _recall_latent(
        self, segment: _Segment, snapshot_id: MemoryID, frame: Map
    ) -> EntitySnapshot:
        model = segment.load_model(snapshot_id.entity_id)
        if model is None:
            raise IntegrityError(
                f"latent record {format_id(snapshot_id)} has no model file"
            )
        z = frame.entries["latent"].to_numpy()
        self.blob_decodes += 1
        extracted = [
            (_path_from_idf(item.entries["path"]), item.entries["value"])
            for item in frame.entries["sidecar"].entries["extracted"].items
        ]
        value = model.decode_value(z, extracted)
        if not isinstance(value, List):
            raise IntegrityError(f"latent decode of {format_id(snapshot_id)} is not a list")
        metas = frame.entries["instance_meta"].items
        instances = tuple(
            EntityInstance(i, data, metas[i] if i < len(metas) else Map())
            for i, data in enumerate(value.items)
        )
        return EntitySnapshot(snapshot_id.timestamp, instances, tier=Tier.LTM_LATENT)

    def links_of(self, snapshot_id: MemoryID) -> list[tuple[MemoryID, MemoryID]]:
        with self.lock:
            segment = self.segments.get(snapshot_id.core_segment)
            entry = (
                segment.index.get(format_id(snapshot_id)) if segment is not None else None
            )
            if entry is None:
                return []
            frame = segment.read_frame(entry)
            return [
                (parse_id(item.entries["from"].value), parse_id(item.entries["to"].value))
                for item in frame.entries["sidecar"].entries["links"].items
            ]

    # --- offline encoding ---------------------------------------------------------

    def encode_entity(
        self,
        entity_id: MemoryID,
        variance_keep: float = 0.99,
        k_max: int = 64,
        k_override: int | None = None,
    ) -> LatentModel | None:
        """Train a latent model on the entity's online records and swap them to
        the latent tier; None when the history is too small or has no shared
        layout (the entity stays online)."""
        with self.lock:
            segment = self.segments.get(entity_id.core_segment)
            if segment is None:
                return None
            ids = [
                mid
                for mid in self.list_ids(prefix=entity_id)
                if segment.index[format_id(mid)].tier == "online"
            ]
            if len(ids) < 2:
                return None
            history = []
            frames = {}
            for mid in ids:
                snapshot = self.recall(mid)
                frames[format_id(mid)] = segment.read_frame(
                    segment.index[format_id(mid)]
                )
                history.append(
                    (mid.timestamp, List(tuple(inst.data for inst in snapshot.instances)))
                )
            try:
                encoded = train_latent_model(
                    entity_id,
                    history,
                    variance_keep=variance_keep,
                    k_max=k_max,
                    k_override=k_override,
                )
            except NoSharedLayout:
                logger.info("entity %s stays online: no shared layout", format_id(entity_id))
                return None
            segment.save_model(encoded.model)
            for mid, z, extras in zip(ids, encoded.latents, encoded.extras):
                old = frames[format_id(mid)]
                old_sidecar = old.entries["sidecar"]
                new_sidecar = dict(old_sidecar.entries)
                new_sidecar["extracted"] = List(
                    tuple(
                        Map({"path": _path_to_idf(path), "value": value})
                        for path, value in extras
                    )
                )
                new_sidecar["stored_size"] = Int64(z.nbytes)
                frame = Map(
                    {
                        "id": String(format_id(mid)),
                        "tier": String("latent"),
                        "latent": _f64_array(z),
                        "instance_meta": List(
                            tuple(
                                inst.entries["meta"]
                                for inst in old.entries["instances"].items
                            )
                        ),
                        "sidecar": Map(new_sidecar),
                    }
                )
                offset, length = segment.append_frame(frame)
                segment.index[format_id(mid)] = IndexEntry(offset, length, "latent")
            segment.write_index()
            return encoded.model

    def encode_all(self, prefix: MemoryID | None = None, **kwargs) -> int:
        """Offline-encode every entity with at least two online records."""
        with self.lock:
            entities = {mid.entity_id for mid in self.list_ids(prefix=prefix)}
            encoded = 0
            for entity_id in sorted(entities, key=lambda m: m.components):
                if self.encode_entity(entity_id, **kwargs) is not None:
                    encoded += 1
            return encoded

    def model_for(self, entity_id: MemoryID) -> LatentModel | None:
        with self.lock:
            segment = self.segments.get(entity_id.core_segment)
            if segment is None:
                return None
            return segment.load_model(entity_id)

    # --- forgetting -----------------------------------------------------------------

    def forget(
        self,
        prefix: MemoryID | None = None,
        begin: int | None = None,
        end: int | None = None,
        provider: str | None = None,
    ) -> int:
        """Remove matching records; compacts the log and rewrites the index.
        Latent models whose training range intersects removed snapshots are
        marked stale."""
        with self.lock:
            removed = 0
            for segment in self.segments.values():
                doomed = []
                for id_text in list(segment.index):
                    mid = parse_id(id_text)
                    if prefix is not None and not prefix.is_prefix_of(mid):
                        continue
                    if begin is not None and mid.timestamp < begin:
                        continue
                    if end is not None and mid.timestamp > end:
                        continue
                    if provider is not None and mid.provider_segment != provider:
                        continue
                    doomed.append(mid)
                if doomed:
                    self._mark_stale_models(segment, doomed)
                    self._compact(segment, {format_id(m) for m in doomed})
                    removed += len(doomed)
            return removed

    def _mark_stale_models(self, segment: _Segment, doomed: list[MemoryID]) -> None:
        for entity_id in {mid.entity_id for mid in doomed}:
            model = segment.load_model(entity_id)
            if model is None or model.stale:
                continue
            hits = [
                mid
                for mid in doomed
                if mid.entity_id == entity_id
                and model.trained_from <= mid.timestamp <= model.trained_to
            ]
            if hits:
                segment.save_model(replace(model, stale=True))

    def _compact(self, segment: _Segment, doomed: set[str]) -> None:
        kept = {
            id_text: entry for id_text, entry in segment.index.items() if id_text not in doomed
        }
        tmp_path = segment.log_path.with_suffix(".log.tmp")
        new_index: dict[str, IndexEntry] = {}
        with open(tmp_path, "wb") as out:
            out.write(struct.pack("<I", FORMAT_VERSION))
            for id_text in sorted(kept):
                entry = kept[id_text]
                frame = segment.read_frame(entry)
                payload = encode(frame)
                offset = out.tell()
                out.write(struct.pack("<I", len(payload)))
                out.write(payload)
                new_index[id_text] = IndexEntry(offset, len(payload) + 4, entry.tier)
            out.flush()
            os.fsync(out.fileno())
        segment._log.close()
        os.replace(tmp_path, segment.log_path)
        segment._log = open(segment.log_path, "a+b")
        segment.index = new_index
        segment.write_index()
