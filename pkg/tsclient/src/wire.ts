/**
 * Frame layout and payload builders for the memory protocol.
 *
 * Frame: magic "MEM1", u8 message type, u32 payload length, payload = one
 * encoded map with message-specific keys.
 */

import { decode, encode, MalformedInput } from "./codec.js";
import {
  type DataObject,
  expectList,
  expectMap,
  expectString,
  int64,
  list,
  map,
  string,
  time,
} from "./values.js";

export const MAGIC = new Uint8Array([0x4d, 0x45, 0x4d, 0x31]); // "MEM1"

export const MSG_COMMIT = 1;
export const MSG_COMMIT_STATUS = 2;
export const MSG_QUERY = 3;
export const MSG_QUERY_RESULT = 4;
export const MSG_SUBSCRIBE = 5;
export const MSG_NOTIFY = 6;
export const MSG_UNSUBSCRIBE = 7;
export const MSG_MNS_REGISTER = 8;
export const MSG_MNS_RESOLVE = 9;
export const MSG_MNS_RESULT = 10;
export const MSG_ADMIN = 11;
export const MSG_ERROR = 255;

export interface Frame {
  msgType: number;
  payload: DataObject;
}

export function packFrame(msgType: number, payload: DataObject): Uint8Array {
  const body = encode(payload);
  const out = new Uint8Array(9 + body.length);
  out.set(MAGIC, 0);
  out[4] = msgType;
  new DataView(out.buffer).setUint32(5, body.length, true);
  out.set(body, 9);
  return out;
}

/** Incremental frame parser over a growing byte stream. */
export class FrameParser {
  private buffer = new Uint8Array(0);

  push(chunk: Uint8Array): Frame[] {
    const merged = new Uint8Array(this.buffer.length + chunk.length);
    merged.set(this.buffer, 0);
    merged.set(chunk, this.buffer.length);
    this.buffer = merged;
    const frames: Frame[] = [];
    for (;;) {
      if (this.buffer.length < 9) break;
      for (let i = 0; i < 4; i++) {
        if (this.buffer[i] !== MAGIC[i]) {
          throw new MalformedInput(i, "frame magic MEM1");
        }
      }
      const view = new DataView(
        this.buffer.buffer,
        this.buffer.byteOffset,
        this.buffer.byteLength,
      );
      const length = view.getUint32(5, true);
      if (this.buffer.length < 9 + length) break;
      const payload = decode(this.buffer.subarray(9, 9 + length));
      frames.push({ msgType: this.buffer[4], payload });
      this.buffer = this.buffer.subarray(9 + length);
    }
    return frames;
  }
}

// --- payload builders ------------------------------------------------------------

export interface EntityUpdate {
  entityId: string;
  timestamp: bigint | number;
  instances: DataObject[];
  producedAt?: bigint | number;
  links?: string[];
}

export function commitPayload(updates: EntityUpdate[]): DataObject {
  return map({
    updates: list(
      updates.map((update) => {
        const entries: Record<string, DataObject> = {
          entity_id: string(update.entityId),
          timestamp: time(update.timestamp),
          instances: list(update.instances),
        };
        if (update.producedAt !== undefined) {
          entries.produced_at = time(update.producedAt);
        }
        if (update.links && update.links.length) {
          entries.links = list(update.links.map(string));
        }
        return map(entries);
      }),
    ),
  });
}

export interface UpdateStatus {
  ok: boolean;
  id?: string;
  code?: string;
  message?: string;
}

export interface CommitReply {
  statuses: UpdateStatus[];
  seq: bigint;
  storageUs: bigint;
}

export function parseCommitReply(payload: DataObject): CommitReply {
  const entries = expectMap(payload);
  const statuses = expectList(entries.get("statuses")!).map((row) => {
    const fields = expectMap(row);
    const status: UpdateStatus = {
      ok: fields.get("ok")!.kind === "bool" && (fields.get("ok") as any).value,
    };
    const id = fields.get("id");
    if (id) status.id = expectString(id);
    const code = fields.get("code");
    if (code) status.code = expectString(code);
    const message = fields.get("message");
    if (message) status.message = expectString(message);
    return status;
  });
  return {
    statuses,
    seq: (entries.get("seq") as any)?.value ?? 0n,
    storageUs: (entries.get("storage_us") as any)?.value ?? 0n,
  };
}

export type NameSelector =
  | { kind: "all" }
  | { kind: "exact"; name: string }
  | { kind: "regex"; pattern: string };

export type SnapshotSelector =
  | { kind: "latest" }
  | { kind: "latestN"; n: number }
  | { kind: "at"; t: bigint | number }
  | { kind: "beforeOrAt"; t: bigint | number }
  | { kind: "range"; begin: bigint | number; end: bigint | number }
  | { kind: "all" };

export interface SimpleQuery {
  core?: string | NameSelector;
  provider?: string | NameSelector;
  entity?: string | NameSelector;
  snapshot: SnapshotSelector;
  instance?: number;
  includeLinks?: boolean;
}

function nameSelectorMap(selector: string | NameSelector | undefined): DataObject {
  if (selector === undefined) return map({ kind: string("all") });
  if (typeof selector === "string") {
    return map({ kind: string("exact"), name: string(selector) });
  }
  if (selector.kind === "all") return map({ kind: string("all") });
  if (selector.kind === "exact") {
    return map({ kind: string("exact"), name: string(selector.name) });
  }
  return map({ kind: string("regex"), pattern: string(selector.pattern) });
}

function snapshotSelectorMap(selector: SnapshotSelector, instance?: number): DataObject {
  const entries: Record<string, DataObject> = { kind: string(selector.kind) };
  switch (selector.kind) {
    case "latestN":
      entries.n = int64(selector.n);
      break;
    case "at":
    case "beforeOrAt":
      entries.t = time(selector.t);
      break;
    case "range":
      entries.begin = time(selector.begin);
      entries.end = time(selector.end);
      break;
  }
  if (instance !== undefined) entries.instance = int64(instance);
  return map(entries);
}

export function queryPayload(query: SimpleQuery): DataObject {
  return map({
    cores: list([
      map({
        sel: nameSelectorMap(query.core),
        providers: list([
          map({
            sel: nameSelectorMap(query.provider),
            entities: list([
              map({
                sel: nameSelectorMap(query.entity),
                snapshots: list([
                  snapshotSelectorMap(query.snapshot, query.instance),
                ]),
              }),
            ]),
          }),
        ]),
      }),
    ]),
    include_links: { kind: "bool", value: query.includeLinks ?? false },
  });
}

export interface ResultSnapshot {
  core: string;
  provider: string;
  entity: string;
  timestamp: bigint;
  tier: string;
  synthetic: boolean;
  instances: DataObject[];
  links: Array<{ from: string; to: string }>;
}

export interface QueryReply {
  ids: string[];
  lookupUs: bigint;
  entityStatus: Record<string, string>;
  snapshots: ResultSnapshot[];
}

/** Render a timestamp the way IDs do: `YYYY-MM-DD HH:MM:SS.ffffff` UTC. */
export function formatTimestamp(micros: bigint): string {
  let seconds = micros / 1_000_000n;
  let frac = micros % 1_000_000n;
  if (frac < 0n) {
    frac += 1_000_000n;
    seconds -= 1n;
  }
  const date = new Date(Number(seconds) * 1000);
  const pad = (n: number, width: number) => String(n).padStart(width, "0");
  return (
    `${pad(date.getUTCFullYear(), 4)}-${pad(date.getUTCMonth() + 1, 2)}-` +
    `${pad(date.getUTCDate(), 2)} ${pad(date.getUTCHours(), 2)}:` +
    `${pad(date.getUTCMinutes(), 2)}:${pad(date.getUTCSeconds(), 2)}.` +
    `${pad(Number(frac), 6)}`
  );
}

export function parseQueryReply(payload: DataObject): QueryReply {
  const entries = expectMap(payload);
  const memory = expectString(entries.get("memory")!);
  const entityStatus: Record<string, string> = {};
  for (const [key, value] of expectMap(entries.get("entity_status")!)) {
    entityStatus[key] = expectString(value);
  }
  // snapshot IDs are implied by tree coordinates rather than re-sent
  const ids: string[] = [];
  const snapshots: ResultSnapshot[] = [];
  for (const [core, providers] of expectMap(entries.get("tree")!)) {
    for (const [provider, entities] of expectMap(providers)) {
      for (const [entity, node] of expectMap(entities)) {
        const fields = expectMap(node);
        const links: Array<{ from: string; to: string }> = [];
        const rawLinks = fields.get("links");
        if (rawLinks) {
          for (const pair of expectList(rawLinks)) {
            const pairMap = expectMap(pair);
            links.push({
              from: expectString(pairMap.get("from")!),
              to: expectString(pairMap.get("to")!),
            });
          }
        }
        for (const snapshot of expectList(fields.get("snapshots")!)) {
          const snapMap = expectMap(snapshot);
          const timestamp = (snapMap.get("t") as any).micros as bigint;
          const tier = snapMap.get("tier");
          snapshots.push({
            core,
            provider,
            entity,
            timestamp,
            tier: tier ? expectString(tier) : "wm",
            synthetic: (snapMap.get("synthetic") as any)?.value ?? false,
            instances: expectList(snapMap.get("instances")!).map(
              (inst) => expectMap(inst).get("data")!,
            ),
            links,
          });
          ids.push(
            `${memory}/${core}/${provider}/${entity}/${formatTimestamp(timestamp)}`,
          );
        }
      }
    }
  }
  ids.sort();
  return {
    ids,
    lookupUs: (entries.get("lookup_us") as any)?.value ?? 0n,
    entityStatus,
    snapshots,
  };
}

export interface Notification {
  seq: bigint;
  ids: string[];
  sub: bigint;
}

export function parseNotification(payload: DataObject): Notification {
  const entries = expectMap(payload);
  return {
    seq: (entries.get("seq") as any).value,
    ids: expectList(entries.get("ids")!).map(expectString),
    sub: (entries.get("sub") as any)?.value ?? 0n,
  };
}
