"""Operator command line.

    epimem mns [--host H] [--port P]
    epimem serve <config>
    epimem tree <id-prefix>
    epimem show <id>
    epimem query "<id-prefix> [latest|latestN=<n>|at=<ts>|range=<ts>..<ts>|all] [regex=<pat>]"
    epimem watch <prefix>
    epimem record <prefix> <file> [--count N]
    epimem replay <file>
    epimem bench <commit|query|age-compare|compression> [--csv out.csv] ...
    epimem admin <resize|consolidate|stats|encode|forget> --memory <name> ...
    epimem golden <directory>

The name service endpoint comes from --mns, the EPIMEM_MNS environment
variable, or 127.0.0.1:7400, in that order.
"""

from __future__ import annotations

import argparse
import os
import signal
import socket
import struct
import sys
import threading
import time

from .. import idf
from ..client import ClientError, MemoryClient
from ..model.ids import format_id, format_timestamp, parse_id, parse_timestamp
from ..model.query import (
    AllSnapshots,
    AtTime,
    Latest,
    LatestN,
    NameRegex,
    Query,
    TimeRange,
)
from ..server import MemoryServer, MnsServer, ServerConfig
from ..wire import MSG_COMMIT, pack_frame, recv_frame, send_frame
from . import bench as bench_mod
from .golden import verify_corpus, write_corpus
from .payloads import PayloadSpec

DEFAULT_MNS = "127.0.0.1:7400"


def _mns_endpoint(args) -> str:
    return args.mns or os.environ.get("EPIMEM_MNS") or DEFAULT_MNS


def _client(args) -> MemoryClient:
    return MemoryClient(_mns_endpoint(args))


def _install_stop_handlers(stop: threading.Event) -> None:
    # signal handlers are only legal on the main thread (tests drive commands
    # from worker threads)
    try:
        for sig in (signal.SIGINT, signal.SIGTERM):
            signal.signal(sig, lambda *_: stop.set())
    except ValueError:
        pass


def _wait_forever() -> None:
    stop = threading.Event()
    _install_stop_handlers(stop)
    while not stop.is_set():
        stop.wait(0.5)


def cmd_mns(args) -> int:
    host, _, port = (args.bind or "127.0.0.1:7400").rpartition(":")
    server = MnsServer(host=host, port=int(port)).start()
    print(f"name service on {server.endpoint[0]}:{server.endpoint[1]}", flush=True)
    _wait_forever()
    server.stop()
    return 0


def cmd_serve(args) -> int:
    config = ServerConfig.load(args.config)
    if args.mns:
        from ..server.config import parse_endpoint

        config.mns = parse_endpoint(args.mns)
    server = MemoryServer(config).start()
    print(
        f"memory {config.memory_name!r} on {server.endpoint[0]}:{server.endpoint[1]}",
        flush=True,
    )
    _wait_forever()
    server.stop()
    return 0


def cmd_tree(args) -> int:
    client = _client(args)
    handle = client.connect(args.prefix)
    reply = handle.admin("tree", prefix=args.prefix)
    tree = reply.entries["tree"]
    memory = parse_id(args.prefix).memory_name
    print(memory)
    for core, providers in sorted(tree.entries.items()):
        print(f"  {core}")
        for provider, entities in sorted(providers.entries.items()):
            print(f"    {provider}")
            for name, info in sorted(entities.entries.items()):
                e = info.entries
                print(
                    f"      {name}  wm={e['wm_snapshots'].value} "
                    f"ltm={e['ltm_snapshots'].value} links={e['links'].value}"
                )
    client.close()
    return 0


def _render(value, indent=0) -> str:
    pad = "  " * indent
    if isinstance(value, idf.Map):
        lines = [f"{pad}{{"]
        for key in sorted(value.entries):
            lines.append(f"{pad}  {key}: {_render(value.entries[key], indent + 1).lstrip()}")
        lines.append(pad + "}")
        return "\n".join(lines)
    if isinstance(value, idf.List):
        return f"{pad}[" + ", ".join(_render(v).strip() for v in value.items) + "]"
    if isinstance(value, idf.NDArray):
        return f"{pad}ndarray({value.elem_kind}, dims={list(value.dims)}, {len(value.data)} bytes)"
    if isinstance(value, idf.Time):
        return f"{pad}time({format_timestamp(value.micros)})"
    if isinstance(value, idf.String):
        return f"{pad}{value.value!r}"
    if isinstance(value, idf.Null):
        return f"{pad}null"
    return f"{pad}{value.value}"


def cmd_show(args) -> int:
    client = _client(args)
    handle = client.connect(args.id)
    mid = parse_id(args.id)
    result = handle.query(Query.for_prefix(mid, include_links=True))
    if result.is_empty():
        print(f"nothing stored under {args.id}", file=sys.stderr)
        client.close()
        return 1
    for snapshot_id, snapshot in result.snapshots():
        print(f"{format_id(snapshot_id)}  tier={snapshot.tier.value}")
        for instance in snapshot.instances:
            print(f"  instance {instance.index}:")
            print(_render(instance.data, 2))
            if instance.metadata.entries:
                print(f"    meta: {_render(instance.metadata).strip()}")
    for _, providers in result.cores.items():
        for _, entities in providers.items():
            for _, entry in entities.items():
                for source, target in entry.links:
                    print(f"  link {format_id(source)} -> {format_id(target)}")
    client.close()
    return 0


def parse_selector_expression(expression: str) -> tuple[str, Query]:
    """`<id-prefix> [latest|latestN=<n>|at=<ts>|range=<ts>..<ts>|all] [regex=<pat>]`"""
    parts = expression.split()
    if not parts:
        raise ValueError("empty selector expression")
    prefix = parse_id(parts[0])
    snapshot = Latest()
    regex = None
    for token in parts[1:]:
        if token == "latest":
            snapshot = Latest()
        elif token == "all":
            snapshot = AllSnapshots()
        elif token.startswith("latestN="):
            snapshot = LatestN(int(token.split("=", 1)[1]))
        elif token.startswith("at="):
            snapshot = AtTime(parse_timestamp(token.split("=", 1)[1]))
        elif token.startswith("range="):
            begin, _, end = token.split("=", 1)[1].partition("..")
            snapshot = TimeRange(parse_timestamp(begin), parse_timestamp(end))
        elif token.startswith("regex="):
            regex = token.split("=", 1)[1]
        else:
            raise ValueError(f"unknown selector token {token!r}")
    entity_sel = NameRegex(regex) if regex else prefix.entity_name
    query = Query.single(
        snapshot,
        core=prefix.core_segment,
        provider=prefix.provider_segment,
        entity=entity_sel,
        include_links=False,
    )
    return parts[0], query


def cmd_query(args) -> int:
    prefix, query = parse_selector_expression(args.expression)
    client = _client(args)
    handle = client.connect(prefix)
    result = handle.query(query)
    for snapshot_id, snapshot in result.snapshots():
        sizes = sum(
            idf.payload_size(inst.data) for inst in snapshot.instances
        )
        print(
            f"{format_id(snapshot_id)}  instances={len(snapshot.instances)} "
            f"bytes={sizes} tier={snapshot.tier.value}"
            + ("  synthetic" if snapshot.synthetic else "")
        )
    for entity, status in sorted(result.entity_status.items()):
        print(f"{entity}  status: {status}", file=sys.stderr)
    client.close()
    return 0


def cmd_watch(args) -> int:
    client = _client(args)
    handle = client.connect(args.prefix)
    stop = threading.Event()

    def on_notify(notification):
        stamp = format_timestamp(time.time_ns() // 1_000)
        for mid in notification.ids:
            print(f"{stamp}  seq={notification.seq}  {format_id(mid)}", flush=True)

    handle.subscribe(args.prefix, on_notify)
    _install_stop_handlers(stop)
    while not stop.is_set():
        stop.wait(0.5)
    client.close()
    return 0


def cmd_record(args) -> int:
    client = _client(args)
    handle = client.connect(args.prefix)
    recorded = 0
    done = threading.Event()
    out = open(args.file, "wb")
    lock = threading.Lock()

    def on_notify(notification):
        nonlocal recorded
        from ..wire import MSG_NOTIFY, commit_to_payload, notify_to_payload
        from ..model.records import Commit, EntityUpdate

        result = handle.query(Query.for_ids(list(notification.ids)))
        updates = [
            EntityUpdate(
                entity_id=snapshot_id.entity_id,
                timestamp=snapshot.timestamp,
                instances=tuple(inst.data for inst in snapshot.instances),
            )
            for snapshot_id, snapshot in result.snapshots()
        ]
        notify_frame = pack_frame(MSG_NOTIFY, notify_to_payload(notification, 0))
        commit_frame = pack_frame(MSG_COMMIT, commit_to_payload(Commit(tuple(updates))))
        with lock:
            for frame in (notify_frame, commit_frame):
                out.write(struct.pack("<I", len(frame)))
                out.write(frame)
            out.flush()
            recorded += 1
            if args.count and recorded >= args.count:
                done.set()

    handle.subscribe(args.prefix, on_notify)
    _install_stop_handlers(done)
    done.wait(args.timeout if args.timeout else None)
    out.close()
    client.close()
    print(f"recorded {recorded} notification(s) to {args.file}")
    return 0


def cmd_replay(args) -> int:
    raw = open(args.file, "rb").read()
    pos = 0
    frames = []
    while pos < len(raw):
        (length,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        frames.append(raw[pos : pos + length])
        pos += length
    commits = [f for f in frames if f[4] == MSG_COMMIT]
    if not commits:
        print("no commit frames in recording", file=sys.stderr)
        return 1
    # target memory comes from the first update in the first commit
    from ..wire import commit_from_payload
    from ..idf import decode

    first = commit_from_payload(decode(commits[0][9:]))
    memory = first.updates[0].entity_id.memory_name
    client = _client(args)
    endpoint = client.resolve(memory)
    sock = socket.create_connection(endpoint)
    replayed = 0
    for frame in commits:
        sock.sendall(frame)  # bit-exact replay of the recorded commit
        recv_frame(sock)
        replayed += 1
    sock.close()
    client.close()
    print(f"replayed {replayed} commit(s) to {memory}")
    return 0


def cmd_bench(args) -> int:
    results = []
    samples = args.samples
    if args.scenario in ("commit", "query"):
        env = bench_mod.BenchEnv()
        try:
            bench_mod.prepopulate(env.handle, env.memory_name)
            run = (
                bench_mod.run_commit_bench
                if args.scenario == "commit"
                else bench_mod.run_query_bench
            )
            kinds = [args.payload] if args.payload else list(("simple", "moderate", "complex"))
            batches = [args.batch] if args.batch else list(bench_mod.BATCH_GRID)
            for kind in kinds:
                for batch in batches:
                    result = run(env, PayloadSpec(kind), batch, samples)
                    results.append(result)
                    print(
                        f"{args.scenario} {kind} batch={batch}: "
                        + " ".join(
                            f"{name}={stats.mean:.1f}us"
                            for name, stats in result.phases.items()
                        ),
                        flush=True,
                    )
        finally:
            env.close()
    elif args.scenario == "age-compare":
        kinds = [args.payload] if args.payload else list(("simple", "moderate", "complex"))
        for kind in kinds:
            per_transport = bench_mod.run_age_compare(PayloadSpec(kind), samples)
            for transport in ("p2p", "ps", "memory"):
                result = per_transport[transport]
                results.append(result)
                stats = result.phases[f"age_{transport}"]
                print(f"age {kind} {transport}: mean={stats.mean:.1f}us", flush=True)
    elif args.scenario == "compression":
        report = bench_mod.run_compression_bench()
        results.extend(report.bench_results())
        for name, row in report.rows.items():
            extra = ""
            if row.latent_reduction is not None:
                extra = f" latent_reduction={row.latent_reduction:.1%}"
            print(
                f"compression {name}: keep={row.keep_ratio:.2f} "
                f"online_reduction={row.online_reduction:.1%}{extra}",
                flush=True,
            )
        rates = report.rates_mb_per_s()
        print(
            f"total: raw={rates['raw']:.3f}MB/s online={rates['online']:.3f}MB/s "
            f"overall_reduction={report.overall_online_reduction:.1%}",
            flush=True,
        )
    else:
        print(f"unknown scenario {args.scenario}", file=sys.stderr)
        return 2
    if args.csv:
        bench_mod.write_csv(args.csv, results)
        print(f"wrote {args.csv}")
    return 0


def cmd_admin(args) -> int:
    client = _client(args)
    handle = client.connect(args.memory)
    kwargs = {}
    if args.command == "resize":
        kwargs["wm_max_bytes"] = args.bytes
    elif args.command == "consolidate" and args.all:
        kwargs["all"] = True
    elif args.command == "encode" and args.prefix:
        kwargs["prefix"] = args.prefix
    elif args.command == "forget":
        if args.prefix:
            kwargs["prefix"] = args.prefix
        if args.begin:
            kwargs["begin"] = idf.Time(parse_timestamp(args.begin))
        if args.end:
            kwargs["end"] = idf.Time(parse_timestamp(args.end))
        if args.provider:
            kwargs["provider"] = args.provider
    reply = handle.admin(args.command, **kwargs)
    for key in sorted(reply.entries):
        if key == "ok":
            continue
        print(f"{key} = {_render(reply.entries[key]).strip()}")
    client.close()
    return 0


def cmd_golden(args) -> int:
    if args.verify:
        count = verify_corpus(args.directory)
        print(f"verified {count} golden vectors")
    else:
        count = write_corpus(args.directory)
        print(f"wrote {count} golden vectors to {args.directory}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epimem", description=__doc__.split("\n")[0])
    parser.add_argument("--mns", help="name service endpoint host:port")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("mns", help="run the name service")
    p.add_argument("--bind", help="host:port to listen on", default=None)
    p.set_defaults(func=cmd_mns)

    p = sub.add_parser("serve", help="run a memory server from a config file")
    p.add_argument("config")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("tree", help="list the hierarchy under an ID prefix")
    p.add_argument("prefix")
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("show", help="pretty-print data, metadata and links of an ID")
    p.add_argument("id")
    p.set_defaults(func=cmd_show)

    p = sub.add_parser("query", help="run a selector expression")
    p.add_argument("expression")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("watch", help="print update notifications for a prefix")
    p.add_argument("prefix")
    p.set_defaults(func=cmd_watch)

    p = sub.add_parser("record", help="record notified snapshots to a file")
    p.add_argument("prefix")
    p.add_argument("file")
    p.add_argument("--count", type=int, default=0, help="stop after N notifications")
    p.add_argument("--timeout", type=float, default=0, help="stop after seconds")
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("replay", help="replay a recording bit-exactly")
    p.add_argument("file")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("bench", help="run a benchmark scenario")
    p.add_argument("scenario", choices=["commit", "query", "age-compare", "compression"])
    p.add_argument("--samples", type=int, default=bench_mod.DEFAULT_SAMPLES)
    p.add_argument("--payload", choices=["simple", "moderate", "complex"])
    p.add_argument("--batch", type=int)
    p.add_argument("--csv", help="write results to a CSV file")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("admin", help="administrative commands")
    p.add_argument("command", choices=["resize", "consolidate", "stats", "encode", "forget"])
    p.add_argument("--memory", required=True, help="memory name")
    p.add_argument("--bytes", type=int, help="new working-memory budget (resize)")
    p.add_argument("--all", action="store_true", help="consolidate everything")
    p.add_argument("--prefix", help="ID prefix filter")
    p.add_argument("--begin", help="timestamp lower bound")
    p.add_argument("--end", help="timestamp upper bound")
    p.add_argument("--provider", help="provider filter (forget)")
    p.set_defaults(func=cmd_admin)

    p = sub.add_parser("golden", help="write or verify the golden-vector corpus")
    p.add_argument("directory")
    p.add_argument("--verify", action="store_true")
    p.set_defaults(func=cmd_golden)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ClientError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
