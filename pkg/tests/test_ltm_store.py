import random

import numpy as np
import pytest

from epimem import idf
from epimem.ltm import FilterPolicy, LtmStore, NotFound
from epimem.model import EntityInstance, EntitySnapshot, Tier, parse_id

from strategies import random_data_object


def snapshot_of(value, ts=1_000_000, n=1):
    instances = tuple(
        EntityInstance(i, value, idf.Map({"provider": idf.String("p")}))
        for i in range(n)
    )
    return EntitySnapshot(ts, instances)


def sid(entity="Mem/Core/p/e", ts=1_000_000):
    return parse_id(entity).with_snapshot(ts)


@pytest.fixture
def store(tmp_path):
    s = LtmStore(tmp_path, "Mem")
    yield s
    s.close()


def test_online_round_trip_identity(store):
    rng = random.Random(77)
    for i in range(50):
        value = random_data_object(rng)
        mid = sid(ts=1_000_000 + i)
        assert store.consolidate(mid, snapshot_of(value, mid.timestamp)) == "stored"
        recalled = store.recall(mid)
        assert recalled.tier == Tier.LTM_ONLINE
        assert idf.encode(recalled.instances[0].data) == idf.encode(idf.canonical(value))


def test_recall_unknown_id(store):
    with pytest.raises(NotFound):
        store.recall(sid(ts=42))


def test_exists_and_list_without_decodes(store):
    for i in range(10):
        mid = sid(ts=1_000_000 * (i + 1))
        store.consolidate(mid, snapshot_of(idf.Int64(i), mid.timestamp))
    store.blob_decodes = 0
    assert store.exists(sid(ts=1_000_000))
    assert not store.exists(sid(ts=999))
    ids = store.list_ids(prefix=parse_id("Mem/Core/p/e"))
    assert len(ids) == 10
    assert [m.timestamp for m in ids] == sorted(m.timestamp for m in ids)
    ranged = store.list_ids(
        prefix=parse_id("Mem/Core/p/e"), begin=2_000_000, end=5_000_000
    )
    assert [m.timestamp for m in ranged] == [2_000_000, 3_000_000, 4_000_000, 5_000_000]
    assert store.blob_decodes == 0


def test_index_survives_reopen(tmp_path):
    store = LtmStore(tmp_path, "Mem")
    value = idf.Map({"x": idf.Float64(0.25)})
    store.consolidate(sid(ts=5), snapshot_of(value, 5))
    store.close()
    reopened = LtmStore(tmp_path, "Mem")
    assert reopened.exists(sid(ts=5))
    assert reopened.recall(sid(ts=5)).instances[0].data == value
    reopened.close()


def test_tail_recovery_without_index(tmp_path):
    store = LtmStore(tmp_path, "Mem")
    store.consolidate(sid(ts=5), snapshot_of(idf.Int64(1), 5))
    store.flush_index()
    # a second record appended but the index file never rewritten
    store.consolidate(sid(ts=6), snapshot_of(idf.Int64(2), 6))
    store.segments["Core"]._log.flush()
    store.segments["Core"]._log.close()
    reopened = LtmStore(tmp_path, "Mem")
    assert reopened.exists(sid(ts=5))
    assert reopened.exists(sid(ts=6))
    reopened.close()


def test_image_blob_compression_ratio(store):
    # smooth synthetic gradients compress far below raw size
    h, w = 480, 640
    y = np.linspace(0, 180, h, dtype=np.float64)[:, None] + np.zeros((1, w))
    x = np.linspace(0, 60, w, dtype=np.float64)[None, :] + np.zeros((h, 1))
    frame = np.stack([y + x, y * 0.5 + 20, x + 40], axis=-1).astype(np.uint8)
    value = idf.Map({"image": idf.NDArray.from_numpy(frame)})
    annotation = idf.ObjectType({"image": idf.ObjectField(idf.ImageType(h, w, 3))})
    mid = sid(ts=1)
    store.consolidate(mid, snapshot_of(value, 1), annotation=annotation)
    from epimem.model import format_id

    segment = store.segments["Core"]
    frame_map = segment.read_frame(segment.index[format_id(mid)])
    stored = frame_map.entries["sidecar"].entries["stored_size"].value
    assert stored < 0.20 * (h * w * 3)
    recalled = store.recall(mid)
    assert recalled.instances[0].data == value


def test_all_zero_image_compresses_below_one_percent(store):
    value = idf.Map({"image": idf.NDArray("u8", (480, 640, 3), bytes(480 * 640 * 3))})
    annotation = idf.ObjectType({"image": idf.ObjectField(idf.ImageType(480, 640, 3))})
    mid = sid(ts=2)
    store.consolidate(mid, snapshot_of(value, 2), annotation=annotation)
    segment = store.segments["Core"]
    frame_map = segment.read_frame(segment.index[sorted(segment.index)[0]])
    stored = frame_map.entries["sidecar"].entries["stored_size"].value
    assert stored < 0.01 * 480 * 640 * 3
    assert store.recall(mid).instances[0].data == value


def test_filter_policy_drops_snapshots(tmp_path):
    store = LtmStore(tmp_path, "Mem", policy=FilterPolicy(max_hz=5))
    spacing = 50_000  # 20 Hz
    outcomes = [
        store.consolidate(sid(ts=i * spacing + 1), snapshot_of(idf.Int64(i), i * spacing + 1))
        for i in range(20)
    ]
    assert outcomes.count("stored") == 5
    assert outcomes[0] == "stored"
    store.close()


def test_offline_encoding_swaps_tier_and_preserves_data(store):
    rng = np.random.default_rng(11)
    basis, _ = np.linalg.qr(rng.standard_normal((20, 3)))
    entity = parse_id("Mem/Core/p/e")
    originals = {}
    for i in range(12):
        vec = (basis @ rng.standard_normal(3)).astype(np.float64)
        value = idf.Map(
            {"v": idf.NDArray.from_numpy(vec), "tag": idf.String(f"s{i}")}
        )
        mid = entity.with_snapshot(1_000_000 * (i + 1))
        originals[mid] = value
        store.consolidate(mid, snapshot_of(value, mid.timestamp))
    model = store.encode_entity(entity)
    assert model is not None
    assert model.latent_dim == 3
    for mid, value in originals.items():
        recalled = store.recall(mid)
        assert recalled.tier == Tier.LTM_LATENT
        got = recalled.instances[0].data
        assert got.entries["tag"] == value.entries["tag"]
        err = np.max(
            np.abs(got.entries["v"].to_numpy() - value.entries["v"].to_numpy())
        )
        assert err <= 1e-6


def test_encode_entity_without_shared_layout_stays_online(store):
    entity = parse_id("Mem/Core/p/odd")
    store.consolidate(entity.with_snapshot(1), snapshot_of(idf.Map({"a": idf.Float64(1)}), 1))
    store.consolidate(
        entity.with_snapshot(2),
        snapshot_of(idf.Map({"a": idf.Float64(1), "b": idf.Float64(2)}), 2),
    )
    assert store.encode_entity(entity) is None
    assert store.recall(entity.with_snapshot(1)).tier == Tier.LTM_ONLINE


def test_forget_by_range_and_provider(store):
    entity = parse_id("Mem/Core/p/e")
    for i in range(10):
        mid = entity.with_snapshot(i + 1)
        store.consolidate(mid, snapshot_of(idf.Int64(i), i + 1))
    assert store.forget(provider="nope") == 0
    removed = store.forget(prefix=parse_id("Mem/Core"), begin=1, end=5)
    assert removed == 5
    assert not store.exists(entity.with_snapshot(3))
    assert store.exists(entity.with_snapshot(6))
    assert len(store.list_ids()) == 5
    assert store.forget() == 5
    assert store.list_ids() == []
    with pytest.raises(NotFound):
        store.recall(entity.with_snapshot(7))


def test_forget_marks_models_stale(store):
    entity = parse_id("Mem/Core/p/e")
    for i in range(6):
        value = idf.Map({"v": idf.Float64(float(i))})
        store.consolidate(entity.with_snapshot(1_000_000 * (i + 1)), snapshot_of(value, 1_000_000 * (i + 1)))
    model = store.encode_entity(entity)
    assert model is not None and not model.stale
    store.forget(begin=1_000_000, end=2_000_000)
    assert store.model_for(entity).stale


def test_links_survive_consolidation(store):
    mid = sid(ts=9)
    target = parse_id("Vision/RGB/cam/frame/1")
    store.consolidate(mid, snapshot_of(idf.Int64(1), 9), links=((mid, target),))
    assert store.links_of(mid) == [(mid, target)]
