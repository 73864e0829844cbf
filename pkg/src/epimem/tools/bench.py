"""Benchmark harness.

Reproduces the evaluation methodology: per-sample phase timings (conversion,
full round trip, server-side storage/lookup) over payload classes and batch
sizes, a data-age comparison of the memory path against peer-to-peer and
publish/subscribe reference channels on the identical wire layer, and the
compression pipeline throughput. Absolute times are hardware-bound; the
asserted properties are orderings, containments and rate floors.
"""

from __future__ import annotations

import csv
import statistics
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from ..client import MemoryClient, ServerHandle
from ..idf import Map, String, Time, encode
from ..idf.sizing import payload_size
from ..ltm.codecs import compress_value, stored_size
from ..ltm.filter import FilterPolicy, filter_snapshots
from ..ltm.latent import train_latent_model
from ..model.ids import parse_id
from ..model.query import LatestN, Query
from ..model.records import EntityUpdate
from ..model.store import now_us
from ..server import MemoryServer, MnsServer, ServerConfig
from .payloads import PayloadSpec, from_data_object, make_reading
from .refchannels import FrameSender, P2PReceiver, PubSubBroker, PubSubSubscriber
from .streams import RecordingSpec, generate_recording

BATCH_GRID = (1, 20, 50, 100)
DEFAULT_SAMPLES = 1000
PREPOPULATED_ENTRIES = 1000

CSV_COLUMNS = (
    "scenario",
    "payload",
    "batch",
    "samples",
    "phase",
    "mean_us",
    "var_us",
    "errors",
    "drops",
)


@dataclass
class PhaseStats:
    samples: list[float] = field(default_factory=list)

    def add(self, value_us: float) -> None:
        self.samples.append(value_us)

    @property
    def mean(self) -> float:
        return statistics.fmean(self.samples) if self.samples else 0.0

    @property
    def variance(self) -> float:
        return statistics.pvariance(self.samples) if len(self.samples) > 1 else 0.0


@dataclass
class BenchResult:
    scenario: str
    payload: str
    batch: int
    samples: int
    phases: dict[str, PhaseStats] = field(default_factory=dict)
    errors: int = 0
    drops: int = 0
    valid: bool = True

    def phase(self, name: str) -> PhaseStats:
        return self.phases.setdefault(name, PhaseStats())

    def rows(self) -> list[dict]:
        return [
            {
                "scenario": self.scenario,
                "payload": self.payload,
                "batch": self.batch,
                "samples": self.samples,
                "phase": name,
                "mean_us": f"{stats.mean:.3f}",
                "var_us": f"{stats.variance:.3f}",
                "errors": self.errors,
                "drops": self.drops,
            }
            for name, stats in self.phases.items()
        ]


def write_csv(path: str | Path, results: list[BenchResult]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for result in results:
            for row in result.rows():
                writer.writerow(row)


class BenchEnv:
    """A loopback name service + one memory server, torn down on close."""

    def __init__(self, memory_name: str = "Bench", wm_max_bytes: int = 2_000_000_000):
        self.mns = MnsServer(heartbeat_seconds=0.2).start()
        self.tmp = tempfile.TemporaryDirectory(prefix="epimem-bench-")
        self.server = MemoryServer(
            ServerConfig(
                memory_name=memory_name,
                core_segments=[("Data", None)],
                wm_max_bytes=wm_max_bytes,
                wm_max_snapshots_per_entity=100_000,
                ltm_root=self.tmp.name,
                capacity_check_seconds=0.0,
            )
        ).start()
        self.mns.registry.register(memory_name, *self.server.endpoint)
        self.client = MemoryClient(self.mns.endpoint)
        self.handle = self.client.connect(f"{memory_name}/Data")
        self.memory_name = memory_name

    def close(self) -> None:
        self.client.close()
        self.server.stop()
        self.mns.stop()
        self.tmp.cleanup()


def prepopulate(handle: ServerHandle, memory_name: str, entries: int = PREPOPULATED_ENTRIES) -> None:
    spec = PayloadSpec("simple", seed=123)
    base = parse_id(f"{memory_name}/Data/warm/entry")
    for start in range(0, entries, 100):
        updates = [
            EntityUpdate(
                base, 1_000_000 + i, (make_reading(spec, i).to_data_object(),)
            )
            for i in range(start, min(start + 100, entries))
        ]
        handle.commit(updates).raise_on_error()


def run_commit_bench(
    env: BenchEnv,
    spec: PayloadSpec,
    batch: int,
    samples: int = DEFAULT_SAMPLES,
    timestamp_window: int = 8,
) -> BenchResult:
    """Per sample: build business objects, convert, commit one batched update."""
    result = BenchResult("commit", spec.kind, batch, samples)
    entity = parse_id(f"{env.memory_name}/Data/bench/{spec.kind}-commit-{batch}")
    readings = [make_reading(spec, i) for i in range(batch)]
    try:
        for sample in range(samples):
            t0 = time.perf_counter_ns()
            instances = tuple(r.to_data_object() for r in readings)
            t1 = time.perf_counter_ns()
            update = EntityUpdate(
                entity, 1_000_000 + (sample % timestamp_window), instances
            )
            reply = env.handle.commit([update])
            t2 = time.perf_counter_ns()
            if not all(s.ok for s in reply.statuses):
                raise RuntimeError("commit rejected")
            result.phase("convert").add((t1 - t0) / 1_000)
            result.phase("full_commit").add((t2 - t1) / 1_000)
            result.phase("storage").add(reply.storage_us)
    except Exception:
        result.errors += 1
        result.valid = False
    return result


def run_query_bench(
    env: BenchEnv,
    spec: PayloadSpec,
    batch: int,
    samples: int = DEFAULT_SAMPLES,
) -> BenchResult:
    """Per sample: query the latest `batch` snapshots and convert them back."""
    result = BenchResult("query", spec.kind, batch, samples)
    entity = parse_id(f"{env.memory_name}/Data/bench/{spec.kind}-query")
    expected_sizes = []
    for i in range(max(BATCH_GRID)):
        data = make_reading(spec, i).to_data_object()
        expected_sizes.append(payload_size(data))
        env.handle.commit([EntityUpdate(entity, 1_000_000 + i, (data,))]).raise_on_error()
    query = Query.single(
        LatestN(batch), core="Data", provider="bench", entity=f"{spec.kind}-query"
    )
    try:
        for _ in range(samples):
            t0 = time.perf_counter_ns()
            res = env.handle.query(query)
            t1 = time.perf_counter_ns()
            snapshots = [s for _, s in res.snapshots()]
            if len(snapshots) != batch:
                raise RuntimeError(f"expected {batch} snapshots, got {len(snapshots)}")
            checks = 0
            t2 = time.perf_counter_ns()
            readings = [
                from_data_object(spec.kind, s.instances[0].data) for s in snapshots
            ]
            t3 = time.perf_counter_ns()
            for snapshot in snapshots:
                idx = snapshot.timestamp - 1_000_000
                if payload_size(snapshot.instances[0].data) != expected_sizes[idx]:
                    raise RuntimeError("payload checksum mismatch")
                checks += 1
            assert checks == batch and len(readings) == batch
            result.phase("full_query").add((t1 - t0) / 1_000)
            result.phase("lookup").add(res.lookup_us)
            result.phase("convert").add((t3 - t2) / 1_000)
    except Exception:
        result.errors += 1
        result.valid = False
    return result


# --- data age ------------------------------------------------------------------


def _age_stats(scenario_payload: str, transport: str, ages: list[float], samples: int) -> BenchResult:
    result = BenchResult("age-compare", scenario_payload, 1, samples)
    stats = result.phase(f"age_{transport}")
    for age in ages:
        stats.add(age)
    return result


def run_age_compare(
    spec: PayloadSpec, samples: int = DEFAULT_SAMPLES
) -> dict[str, BenchResult]:
    """Mean data age per transport; producer paces on consumer receipt."""
    payload_value = make_reading(spec, 0).to_data_object()

    # peer-to-peer: one hop
    p2p_ages: list[float] = []
    done = threading.Event()

    def p2p_sink(frame: Map) -> None:
        p2p_ages.append(now_us() - frame.entries["produced_at"].micros)
        done.set()

    receiver = P2PReceiver(p2p_sink)
    sender = FrameSender(receiver.endpoint)
    for _ in range(samples):
        done.clear()
        sender.send(
            Map({"topic": String("t"), "produced_at": Time(now_us()), "data": payload_value})
        )
        done.wait(5.0)
    sender.close()
    receiver.stop()

    # publish/subscribe: producer -> broker -> subscriber
    ps_ages: list[float] = []

    def ps_sink(frame: Map) -> None:
        ps_ages.append(now_us() - frame.entries["produced_at"].micros)
        done.set()

    broker = PubSubBroker()
    subscriber = PubSubSubscriber(broker.endpoint, "bench", ps_sink)
    publisher = FrameSender(broker.endpoint)
    for _ in range(samples):
        done.clear()
        publisher.send(
            Map({"topic": String("bench"), "produced_at": Time(now_us()), "data": payload_value})
        )
        done.wait(5.0)
    publisher.close()
    subscriber.close()
    broker.stop()

    # memory: commit -> notification -> query
    memory_ages: list[float] = []
    env = BenchEnv(memory_name="AgeBench")
    try:
        entity = parse_id(f"AgeBench/Data/bench/{spec.kind}-age")
        consumer_handle = MemoryClient(env.mns.endpoint).connect("AgeBench/Data")

        def on_notify(notification) -> None:
            res = consumer_handle.query(Query.for_ids(list(notification.ids)))
            for _, snapshot in res.snapshots():
                memory_ages.append(now_us() - snapshot.timestamp)
            done.set()

        sub = consumer_handle.subscribe("AgeBench/Data/bench", on_notify)
        for _ in range(samples):
            done.clear()
            produced = now_us()
            env.handle.commit(
                [EntityUpdate(entity, produced, (payload_value,), produced_at=produced)]
            )
            done.wait(5.0)
        sub.unsubscribe()
    finally:
        env.close()

    return {
        "p2p": _age_stats(spec.kind, "p2p", p2p_ages, samples),
        "ps": _age_stats(spec.kind, "ps", ps_ages, samples),
        "memory": _age_stats(spec.kind, "memory", memory_ages, samples),
    }


# --- compression ------------------------------------------------------------------


@dataclass
class CompressionRow:
    entity: str
    snapshots_in: int
    snapshots_kept: int
    raw_bytes: int
    online_bytes: int
    latent_bytes: int | None  # None when the entity is not latent-encoded

    @property
    def keep_ratio(self) -> float:
        return self.snapshots_kept / self.snapshots_in if self.snapshots_in else 0.0

    @property
    def online_reduction(self) -> float:
        return 1.0 - self.online_bytes / self.raw_bytes if self.raw_bytes else 0.0

    @property
    def latent_reduction(self) -> float | None:
        if self.latent_bytes is None or not self.online_bytes:
            return None
        return 1.0 - self.latent_bytes / self.online_bytes


@dataclass
class CompressionReport:
    spec: RecordingSpec
    rows: dict[str, CompressionRow]

    @property
    def total_raw(self) -> int:
        return sum(r.raw_bytes for r in self.rows.values())

    @property
    def total_online(self) -> int:
        return sum(r.online_bytes for r in self.rows.values())

    @property
    def overall_online_reduction(self) -> float:
        return 1.0 - self.total_online / self.total_raw

    def rates_mb_per_s(self) -> dict[str, float]:
        seconds = self.spec.duration_s
        return {
            "raw": self.total_raw / 1e6 / seconds,
            "online": self.total_online / 1e6 / seconds,
        }

    def bench_results(self) -> list[BenchResult]:
        results = []
        for name, row in self.rows.items():
            result = BenchResult("compression", name, 0, row.snapshots_in)
            result.phase("raw_bytes").add(row.raw_bytes)
            result.phase("online_bytes").add(row.online_bytes)
            result.phase("keep_ratio_ppm").add(row.keep_ratio * 1e6)
            result.phase("online_reduction_ppm").add(row.online_reduction * 1e6)
            if row.latent_bytes is not None:
                result.phase("latent_bytes").add(row.latent_bytes)
                result.phase("latent_reduction_ppm").add((row.latent_reduction or 0) * 1e6)
            results.append(result)
        return results


def run_compression_bench(
    spec: RecordingSpec | None = None,
    max_hz: float = 5.0,
    latent_entities: tuple[str, ...] = ("joints",),
) -> CompressionReport:
    """Raw -> filter(max_hz) -> online codecs; low-rank streams additionally
    through the latent encoder. Sizes are stored blob bytes."""
    spec = spec or RecordingSpec()
    rows: dict[str, CompressionRow] = {}
    for stream in generate_recording(spec):
        raw = sum(
            payload_size(value) for _, value in stream.snapshots
        )
        kept = filter_snapshots(stream.snapshots, FilterPolicy(max_hz=max_hz))
        online = sum(
            stored_size(compress_value(value, stream.annotation)) for _, value in kept
        )
        latent_bytes = None
        if stream.name in latent_entities and len(kept) >= 3:
            entity_id = parse_id(f"Recording/Data/gen/{stream.name}")
            encoded = train_latent_model(entity_id, kept)
            latent_bytes = sum(z.nbytes for z in encoded.latents)
            latent_bytes += sum(
                len(encode(value)) for extras in encoded.extras for _, value in extras
            )
        rows[stream.name] = CompressionRow(
            entity=stream.name,
            snapshots_in=len(stream.snapshots),
            snapshots_kept=len(kept),
            raw_bytes=raw,
            online_bytes=online,
            latent_bytes=latent_bytes,
        )
    return CompressionReport(spec, rows)
