/**
 * The variant value model: one tagged union mirroring the primary
 * implementation's payload representation. Int64 and Time use bigint,
 * Float32 values are always f32-exact, maps preserve insertion order but
 * compare and encode canonically.
 */

export type ElemKind = "u8" | "i32" | "i64" | "f32" | "f64";

export const ELEM_KIND_CODES: Record<ElemKind, number> = {
  u8: 0,
  i32: 1,
  i64: 2,
  f32: 3,
  f64: 4,
};

export const ELEM_KIND_WIDTHS: Record<ElemKind, number> = {
  u8: 1,
  i32: 4,
  i64: 8,
  f32: 4,
  f64: 8,
};

export const CODE_TO_ELEM_KIND: ElemKind[] = ["u8", "i32", "i64", "f32", "f64"];

export type DataObject =
  | { kind: "null" }
  | { kind: "bool"; value: boolean }
  | { kind: "int32"; value: number }
  | { kind: "int64"; value: bigint }
  | { kind: "float32"; value: number }
  | { kind: "float64"; value: number }
  | { kind: "string"; value: string }
  | { kind: "time"; micros: bigint }
  | { kind: "ndarray"; elemKind: ElemKind; dims: number[]; data: Uint8Array }
  | { kind: "list"; items: DataObject[] }
  | { kind: "map"; entries: Map<string, DataObject> };

export const INT32_MIN = -2147483648;
export const INT32_MAX = 2147483647;
export const INT64_MIN = -(2n ** 63n);
export const INT64_MAX = 2n ** 63n - 1n;

export const nullValue = (): DataObject => ({ kind: "null" });

export const bool = (value: boolean): DataObject => ({ kind: "bool", value });

export function int32(value: number): DataObject {
  if (!Number.isInteger(value) || value < INT32_MIN || value > INT32_MAX) {
    throw new RangeError(`int32 out of range: ${value}`);
  }
  return { kind: "int32", value };
}

export function int64(value: bigint | number): DataObject {
  const big = typeof value === "number" ? BigInt(value) : value;
  if (big < INT64_MIN || big > INT64_MAX) {
    throw new RangeError(`int64 out of range: ${big}`);
  }
  return { kind: "int64", value: big };
}

export const float32 = (value: number): DataObject => ({
  kind: "float32",
  value: Math.fround(value),
});

export const float64 = (value: number): DataObject => ({ kind: "float64", value });

export const string = (value: string): DataObject => ({ kind: "string", value });

export function time(micros: bigint | number): DataObject {
  const big = typeof micros === "number" ? BigInt(micros) : micros;
  if (big < INT64_MIN || big > INT64_MAX) {
    throw new RangeError(`time out of range: ${big}`);
  }
  return { kind: "time", micros: big };
}

export function ndarray(
  elemKind: ElemKind,
  dims: number[],
  data: Uint8Array,
): DataObject {
  const count = dims.reduce((a, b) => a * b, 1);
  if (dims.some((d) => d < 0 || !Number.isInteger(d))) {
    throw new RangeError(`bad dims: ${dims}`);
  }
  if (data.length !== count * ELEM_KIND_WIDTHS[elemKind]) {
    throw new RangeError(
      `ndarray buffer is ${data.length} bytes, expected ${count * ELEM_KIND_WIDTHS[elemKind]}`,
    );
  }
  return { kind: "ndarray", elemKind, dims: [...dims], data };
}

export const list = (items: DataObject[]): DataObject => ({ kind: "list", items });

export function map(
  entries: Map<string, DataObject> | Record<string, DataObject>,
): DataObject {
  if (entries instanceof Map) {
    return { kind: "map", entries: new Map(entries) };
  }
  return { kind: "map", entries: new Map(Object.entries(entries)) };
}

const utf8 = new TextEncoder();

/** Byte-wise comparison of UTF-8 encodings: the canonical map key order. */
export function compareKeys(a: string, b: string): number {
  const ba = utf8.encode(a);
  const bb = utf8.encode(b);
  const n = Math.min(ba.length, bb.length);
  for (let i = 0; i < n; i++) {
    if (ba[i] !== bb[i]) return ba[i] - bb[i];
  }
  return ba.length - bb.length;
}

export function sortedKeys(entries: Map<string, DataObject>): string[] {
  return [...entries.keys()].sort(compareKeys);
}

/** Canonical form: map entries in ascending key order, recursively. */
export function canonical(value: DataObject): DataObject {
  switch (value.kind) {
    case "list":
      return { kind: "list", items: value.items.map(canonical) };
    case "map": {
      const sorted = new Map<string, DataObject>();
      for (const key of sortedKeys(value.entries)) {
        sorted.set(key, canonical(value.entries.get(key)!));
      }
      return { kind: "map", entries: sorted };
    }
    default:
      return value;
  }
}

/** Structural equality; map comparison is key-order-insensitive. */
export function equal(a: DataObject, b: DataObject): boolean {
  if (a.kind !== b.kind) return false;
  switch (a.kind) {
    case "null":
      return true;
    case "bool":
    case "int32":
    case "float32":
    case "float64":
    case "string":
      return a.value === (b as typeof a).value;
    case "int64":
      return a.value === (b as typeof a).value;
    case "time":
      return a.micros === (b as typeof a).micros;
    case "ndarray": {
      const other = b as typeof a;
      return (
        a.elemKind === other.elemKind &&
        a.dims.length === other.dims.length &&
        a.dims.every((d, i) => d === other.dims[i]) &&
        a.data.length === other.data.length &&
        a.data.every((byte, i) => byte === other.data[i])
      );
    }
    case "list": {
      const other = b as typeof a;
      return (
        a.items.length === other.items.length &&
        a.items.every((item, i) => equal(item, other.items[i]))
      );
    }
    case "map": {
      const other = b as typeof a;
      if (a.entries.size !== other.entries.size) return false;
      for (const [key, item] of a.entries) {
        const peer = other.entries.get(key);
        if (peer === undefined || !equal(item, peer)) return false;
      }
      return true;
    }
  }
}

export function expectMap(value: DataObject): Map<string, DataObject> {
  if (value.kind !== "map") throw new TypeError(`expected map, got ${value.kind}`);
  return value.entries;
}

export function expectList(value: DataObject): DataObject[] {
  if (value.kind !== "list") throw new TypeError(`expected list, got ${value.kind}`);
  return value.items;
}

export function expectString(value: DataObject): string {
  if (value.kind !== "string") throw new TypeError(`expected string, got ${value.kind}`);
  return value.value;
}

export function expectInt64(value: DataObject): bigint {
  if (value.kind !== "int64") throw new TypeError(`expected int64, got ${value.kind}`);
  return value.value;
}

export function expectTime(value: DataObject): bigint {
  if (value.kind !== "time") throw new TypeError(`expected time, got ${value.kind}`);
  return value.micros;
}

export function expectBool(value: DataObject): boolean {
  if (value.kind !== "bool") throw new TypeError(`expected bool, got ${value.kind}`);
  return value.value;
}
