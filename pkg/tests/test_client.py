import threading
import time

import pytest

from epimem import idf
from epimem.client import (
    MemoryClient,
    NotFoundError,
    PipelineStage,
    ReconnectPolicy,
    run_stage,
)
from epimem.model import (
    AtTime,
    Commit,
    EntityUpdate,
    Latest,
    Query,
    format_id,
    parse_id,
)
from epimem.server import MemoryServer, MnsServer, ServerConfig


@pytest.fixture
def stack(tmp_path):
    mns = MnsServer().start()
    servers = {}
    for name in ("Vision", "Object"):
        server = MemoryServer(
            ServerConfig(
                memory_name=name,
                core_segments=[("RGB", None)] if name == "Vision" else [("Instance", None)],
                ltm_root=str(tmp_path / name),
                capacity_check_seconds=0.0,
            )
        ).start()
        mns.registry.register(name, *server.endpoint)
        servers[name] = server
    client = MemoryClient(mns.endpoint, reconnect=ReconnectPolicy(max_retries=1))
    yield mns, servers, client
    client.close()
    for server in servers.values():
        server.stop()
    mns.stop()


def test_connect_unregistered_is_not_found(stack):
    _, _, client = stack
    with pytest.raises(NotFoundError):
        client.connect("Ghost/X")


def test_connection_cache(stack):
    _, _, client = stack
    a = client.connect("Vision/RGB")
    b = client.connect("Vision/RGB/Cam/frame")
    assert a is b
    assert client.cache_hits == 1
    c = client.connect("Object/Instance")
    assert c is not a


def test_two_client_notify_cycle(stack):
    _, _, client = stack
    other = MemoryClient(stack[0].endpoint)
    consumer = client.connect("Vision/RGB")
    producer = other.connect("Vision/RGB")
    seen = []
    event = threading.Event()

    def handler(notification):
        seen.append(notification)
        event.set()

    consumer.subscribe("Vision/RGB", handler)
    producer.commit(
        [EntityUpdate(parse_id("Vision/RGB/Cam/frame"), 7, (idf.Int64(1),))]
    ).raise_on_error()
    assert event.wait(2)
    assert len(seen) == 1
    assert seen[0].ids[0].timestamp == 7
    other.close()


def test_handler_exception_does_not_kill_subscription(stack):
    _, _, client = stack
    handle = client.connect("Vision/RGB")
    calls = []
    event = threading.Event()

    def bad_handler(notification):
        calls.append(notification)
        if len(calls) == 1:
            raise RuntimeError("boom")
        event.set()

    sub = handle.subscribe("Vision/RGB", bad_handler)
    for t in (1, 2):
        handle.commit([EntityUpdate(parse_id("Vision/RGB/Cam/frame"), t, (idf.Int64(t),))])
    assert event.wait(2)
    assert len(calls) == 2
    assert sub.handler_errors == 1


def test_query_before_any_commit_is_empty(stack):
    _, _, client = stack
    handle = client.connect("Object/Instance")
    assert handle.query(Query.single(Latest())).is_empty()


def test_two_stage_pipeline_lineage(stack):
    _, _, client = stack
    vision = client.connect("Vision/RGB")

    def localize(result):
        updates = []
        for snapshot_id, snapshot in result.snapshots():
            total = sum(inst.data.value for inst in snapshot.instances)
            updates.append(
                EntityUpdate(
                    parse_id("Object/Instance/Localizer/cup"),
                    snapshot.timestamp,
                    (idf.Map({"sum": idf.Int64(total)}),),
                )
            )
        return updates

    stage = run_stage(
        client,
        PipelineStage(
            input_prefix="Vision/RGB",
            transform=localize,
            output_target="Object/Instance",
            coalesce=False,
        ),
    )
    vision.commit(
        [EntityUpdate(parse_id("Vision/RGB/Cam/frame"), 42, (idf.Int64(5), idf.Int64(6)))]
    ).raise_on_error()
    objects = client.connect("Object/Instance")
    deadline = time.monotonic() + 3
    result = None
    while time.monotonic() < deadline:
        result = objects.query(Query.single(AtTime(42), core="Instance", include_links=True))
        if not result.is_empty():
            break
        time.sleep(0.01)
    assert result is not None and not result.is_empty()
    snapshot = result.single()
    assert snapshot.instances[0].data == idf.Map({"sum": idf.Int64(11)})
    # association links trace back to the exact input snapshot
    entry = result.cores["Instance"]["Localizer"]["cup"]
    targets = {format_id(t) for s, t in entry.links}
    assert targets == {"Vision/RGB/Cam/frame/1970-01-01 00:00:00.000042"}
    stage.stop()


def test_pipeline_coalescing_burst(stack):
    _, _, client = stack
    vision = client.connect("Vision/RGB")
    processed_inputs = []
    gate = threading.Event()

    def transform(result):
        gate.wait(1.0)  # make processing slow so the burst piles up
        for snapshot_id, snapshot in result.snapshots():
            processed_inputs.append(snapshot.timestamp)
            return [
                EntityUpdate(
                    parse_id("Object/Instance/Localizer/out"),
                    snapshot.timestamp,
                    (idf.Int64(snapshot.timestamp),),
                )
            ]
        return []

    stage = run_stage(
        client,
        PipelineStage(
            input_prefix="Vision/RGB",
            transform=transform,
            output_target="Object/Instance",
            coalesce=True,
        ),
    )
    for t in range(1, 11):
        vision.commit([EntityUpdate(parse_id("Vision/RGB/Cam/frame"), t, (idf.Int64(t),))])
    gate.set()
    deadline = time.monotonic() + 3
    while time.monotonic() < deadline and (
        not processed_inputs or processed_inputs[-1] != 10
    ):
        time.sleep(0.01)
    stage.drain()
    assert processed_inputs, "no input processed"
    assert stage.outputs <= 10
    assert processed_inputs[-1] == 10  # final output derived from the last input
    stage.stop()


def test_pipeline_transform_error_keeps_stage_alive(stack):
    _, _, client = stack
    vision = client.connect("Vision/RGB")
    calls = []

    def failing(result):
        calls.append(1)
        if len(calls) == 1:
            raise ValueError("bad input")
        return [
            EntityUpdate(
                parse_id("Object/Instance/Localizer/out"), len(calls), (idf.Int64(1),)
            )
        ]

    stage = run_stage(
        client,
        PipelineStage(
            input_prefix="Vision/RGB",
            transform=failing,
            output_target="Object/Instance",
            coalesce=False,
        ),
    )
    vision.commit([EntityUpdate(parse_id("Vision/RGB/Cam/frame"), 1, (idf.Int64(1),))])
    deadline = time.monotonic() + 2
    while time.monotonic() < deadline and stage.errors == 0:
        time.sleep(0.01)
    assert stage.errors == 1
    assert stage.outputs == 0
    vision.commit([EntityUpdate(parse_id("Vision/RGB/Cam/frame"), 2, (idf.Int64(2),))])
    deadline = time.monotonic() + 2
    while time.monotonic() < deadline and stage.outputs == 0:
        time.sleep(0.01)
    assert stage.outputs == 1
    stage.stop()


def test_per_connection_fifo_ordering(stack):
    _, _, client = stack
    handle = client.connect("Vision/RGB")
    for t in range(1, 30):
        reply = handle.commit(
            [EntityUpdate(parse_id("Vision/RGB/Cam/frame"), t, (idf.Int64(t),))]
        )
        result = handle.query(Query.single(Latest(), core="RGB"))
        assert reply.statuses[0].ok
        assert result.single().timestamp == t
