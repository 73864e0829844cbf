/** Full commit -> notify -> query interop against the primary memory server.
 *
 * Spawns the primary's name service and one memory server as subprocesses,
 * then drives the cycle through this client. One scenario also lets the
 * primary's own client SDK commit, proving cross-implementation payload
 * identity in both directions.
 */

import { type ChildProcess, spawn } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import {
  type Notification,
  MemoryClient,
  NotFoundError,
  canonical,
  encode,
  equal,
  float64,
  int64,
  map,
  string,
} from "../src/index.js";

const PYTHON = process.env.EPIMEM_PYTHON ?? "python3";
const REPO_ROOT = path.resolve(__dirname, "../..");

let mnsProc: ChildProcess;
let serverProc: ChildProcess;
let mnsEndpoint: { host: string; port: number };
let tmpDir: string;

function waitForLine(proc: ChildProcess, pattern: RegExp, timeoutMs = 15000): Promise<RegExpMatchArray> {
  return new Promise((resolve, reject) => {
    let buffer = "";
    const timer = setTimeout(
      () => reject(new Error(`timeout waiting for ${pattern}; got: ${buffer}`)),
      timeoutMs,
    );
    proc.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = buffer.match(pattern);
      if (match) {
        clearTimeout(timer);
        resolve(match);
      }
    });
    proc.stderr!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
    });
    proc.once("exit", (code) =>
      reject(new Error(`process exited with ${code}: ${buffer}`)),
    );
  });
}

function runPython(code: string, env: Record<string, string> = {}): Promise<string> {
  return new Promise((resolve, reject) => {
    const proc = spawn(PYTHON, ["-c", code], {
      cwd: REPO_ROOT,
      env: { ...process.env, ...env },
    });
    let out = "";
    let err = "";
    proc.stdout.on("data", (c: Buffer) => (out += c.toString()));
    proc.stderr.on("data", (c: Buffer) => (err += c.toString()));
    proc.once("exit", (cod) =>
      cod === 0 ? resolve(out) : reject(new Error(`python failed (${cod}): ${err}`)),
    );
  });
}

beforeAll(async () => {
  tmpDir = fs.mkdtempSync(path.join(os.tmpdir(), "epimem-interop-"));
  mnsProc = spawn(PYTHON, ["-m", "epimem.tools.cli", "mns", "--bind", "127.0.0.1:0"], {
    cwd: REPO_ROOT,
  });
  const mnsMatch = await waitForLine(mnsProc, /name service on ([\d.]+):(\d+)/);
  mnsEndpoint = { host: mnsMatch[1], port: Number(mnsMatch[2]) };

  const config = [
    "memory_name = Object",
    "host = 127.0.0.1",
    "port = 0",
    "core_segment = Instance",
    `ltm_root = ${tmpDir}`,
    `mns = ${mnsEndpoint.host}:${mnsEndpoint.port}`,
    "heartbeat_seconds = 0.2",
  ].join("\n");
  const configPath = path.join(tmpDir, "object.conf");
  fs.writeFileSync(configPath, config);
  serverProc = spawn(PYTHON, ["-m", "epimem.tools.cli", "serve", configPath], {
    cwd: REPO_ROOT,
  });
  await waitForLine(serverProc, /memory 'Object' on ([\d.]+):(\d+)/);
  // give the heartbeat a moment to register with the name service
  await new Promise((r) => setTimeout(r, 600));
}, 30000);

afterAll(() => {
  serverProc?.kill();
  mnsProc?.kill();
  fs.rmSync(tmpDir, { recursive: true, force: true });
});

describe("interop with the primary server", () => {
  it("resolves through the name service and rejects unknown names", async () => {
    const client = new MemoryClient(mnsEndpoint);
    const endpoint = await client.resolve("Object/Instance");
    expect(endpoint.port).toBeGreaterThan(0);
    await expect(client.resolve("Ghost/X")).rejects.toBeInstanceOf(NotFoundError);
    client.close();
  });

  it("query of an empty store returns an empty result", async () => {
    const client = new MemoryClient(mnsEndpoint);
    const connection = await client.connect("Object/Instance");
    const result = await connection.query({
      core: "Instance",
      entity: "nothing-here",
      snapshot: { kind: "latest" },
    });
    expect(result.ids).toEqual([]);
    expect(result.snapshots).toEqual([]);
    client.close();
  });

  it("completes the commit -> notify -> query cycle with identical payloads", async () => {
    const client = new MemoryClient(mnsEndpoint);
    const connection = await client.connect("Object/Instance");

    const notifications: Notification[] = [];
    let notified: (n: Notification) => void;
    const firstNotification = new Promise<Notification>((r) => (notified = r));
    const subscription = await connection.subscribe("Object/Instance", (n) => {
      notifications.push(n);
      notified(n);
    });

    const payload = map({
      pose: map({ x: float64(0.25), y: float64(-1.5) }),
      label: string("blue-cup"),
      count: int64(3),
    });
    const reply = await connection.commit([
      {
        entityId: "Object/Instance/TsClient/blue-cup",
        timestamp: 1645189616492182n,
        instances: [payload],
        producedAt: 1645189616492000n,
      },
    ]);
    expect(reply.statuses).toHaveLength(1);
    expect(reply.statuses[0].ok).toBe(true);
    expect(reply.statuses[0].id).toBe(
      "Object/Instance/TsClient/blue-cup/2022-02-18 13:06:56.492182",
    );

    const notification = await firstNotification;
    expect(notification.ids).toEqual([
      "Object/Instance/TsClient/blue-cup/2022-02-18 13:06:56.492182",
    ]);

    const result = await connection.query({
      core: "Instance",
      provider: "TsClient",
      entity: "blue-cup",
      snapshot: { kind: "at", t: 1645189616492182n },
    });
    expect(result.snapshots).toHaveLength(1);
    const returned = result.snapshots[0].instances[0];
    expect(equal(returned, canonical(payload))).toBe(true);
    expect(encode(returned)).toEqual(encode(canonical(payload)));

    await subscription.unsubscribe();
    expect(notifications).toHaveLength(1);
    client.close();
  });

  it("receives exactly one notification when the primary's own client commits", async () => {
    const client = new MemoryClient(mnsEndpoint);
    const connection = await client.connect("Object/Instance");
    const received: Notification[] = [];
    let notified: (n: Notification) => void;
    const first = new Promise<Notification>((r) => (notified = r));
    await connection.subscribe("Object/Instance/PyClient", (n) => {
      received.push(n);
      notified(n);
    });

    await runPython(
      `
import sys
sys.path.insert(0, "src")
from epimem import idf
from epimem.client import MemoryClient
from epimem.model import EntityUpdate, parse_id
client = MemoryClient(("${mnsEndpoint.host}", ${mnsEndpoint.port}))
handle = client.connect("Object/Instance")
reply = handle.commit([
    EntityUpdate(
        parse_id("Object/Instance/PyClient/bottle"),
        7_000_000,
        (idf.Map({"label": idf.String("bottle"), "count": idf.Int64(7)}),),
    )
])
assert all(s.ok for s in reply.statuses)
client.close()
print("committed")
`,
    );

    const notification = await first;
    expect(notification.ids).toHaveLength(1);

    const result = await connection.query({
      core: "Instance",
      provider: "PyClient",
      entity: "bottle",
      snapshot: { kind: "latest" },
    });
    const expected = map({ label: string("bottle"), count: int64(7) });
    expect(encode(result.snapshots[0].instances[0])).toEqual(
      encode(canonical(expected)),
    );
    expect(received).toHaveLength(1);
    client.close();
  });

  it("round-trips every golden vector as a committed payload", async () => {
    // the full corpus travels through the live server inside one map payload
    const goldenDir = path.join(REPO_ROOT, "golden");
    const manifest = JSON.parse(
      fs.readFileSync(path.join(goldenDir, "manifest.json"), "utf-8"),
    ) as { vectors: Array<{ file: string; name: string }> };
    const client = new MemoryClient(mnsEndpoint);
    const connection = await client.connect("Object/Instance");
    // sample a spread of vectors to keep the payload moderate
    const picked = manifest.vectors.filter((_, i) => i % 5 === 0);
    const entries = new Map(
      picked.map((entry) => {
        const raw = new Uint8Array(
          fs.readFileSync(path.join(goldenDir, "vectors", entry.file)),
        );
        return [entry.name, { raw, value: decodeVector(raw) }] as const;
      }),
    );
    const bundle = map(
      new Map([...entries].map(([name, item]) => [name, item.value])),
    );
    await connection.commit([
      {
        entityId: "Object/Instance/TsClient/golden",
        timestamp: 99n,
        instances: [bundle],
      },
    ]);
    const result = await connection.query({
      core: "Instance",
      provider: "TsClient",
      entity: "golden",
      snapshot: { kind: "at", t: 99n },
    });
    const returned = result.snapshots[0].instances[0];
    if (returned.kind !== "map") throw new Error("bundle came back wrong");
    for (const [name, item] of entries) {
      const back = returned.entries.get(name)!;
      expect(encode(back), name).toEqual(encode(canonical(item.value)));
    }
    client.close();
  });
});

import { decode as decodeVector } from "../src/index.js";
