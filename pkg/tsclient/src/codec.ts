/**
 * Canonical binary codec, bit-exact with the primary implementation.
 *
 * Little-endian; one tag byte then the payload. 0x00 null, 0x01 bool,
 * 0x02 int32, 0x03 int64, 0x04 float32, 0x05 float64, 0x06 string
 * (u32 length + UTF-8), 0x07 time (i64 microseconds), 0x08 ndarray
 * (u8 kind code, u8 ndim, ndim x u32 dims, raw buffer), 0x09 list
 * (u32 count + elements), 0x0A map (u32 count + per entry: u32 key length +
 * UTF-8 key + value). Map entries encode in ascending key byte order.
 */

import {
  CODE_TO_ELEM_KIND,
  type DataObject,
  ELEM_KIND_CODES,
  ELEM_KIND_WIDTHS,
  sortedKeys,
} from "./values.js";

export const TAG_NULL = 0x00;
export const TAG_BOOL = 0x01;
export const TAG_INT32 = 0x02;
export const TAG_INT64 = 0x03;
export const TAG_FLOAT32 = 0x04;
export const TAG_FLOAT64 = 0x05;
export const TAG_STRING = 0x06;
export const TAG_TIME = 0x07;
export const TAG_NDARRAY = 0x08;
export const TAG_LIST = 0x09;
export const TAG_MAP = 0x0a;

export class MalformedInput extends Error {
  constructor(
    public readonly offset: number,
    public readonly expected: string,
  ) {
    super(`malformed input at offset ${offset}: expected ${expected}`);
    this.name = "MalformedInput";
  }
}

const utf8Encoder = new TextEncoder();
const utf8Decoder = new TextDecoder("utf-8", { fatal: true });

class Writer {
  private chunks: Uint8Array[] = [];
  private scratch = new DataView(new ArrayBuffer(8));

  push(bytes: Uint8Array): void {
    this.chunks.push(bytes);
  }

  byte(value: number): void {
    this.chunks.push(Uint8Array.of(value));
  }

  u32(value: number): void {
    this.scratch.setUint32(0, value, true);
    this.chunks.push(new Uint8Array(this.scratch.buffer.slice(0, 4)));
  }

  i32(value: number): void {
    this.scratch.setInt32(0, value, true);
    this.chunks.push(new Uint8Array(this.scratch.buffer.slice(0, 4)));
  }

  i64(value: bigint): void {
    this.scratch.setBigInt64(0, value, true);
    this.chunks.push(new Uint8Array(this.scratch.buffer.slice(0, 8)));
  }

  f32(value: number): void {
    this.scratch.setFloat32(0, value, true);
    this.chunks.push(new Uint8Array(this.scratch.buffer.slice(0, 4)));
  }

  f64(value: number): void {
    this.scratch.setFloat64(0, value, true);
    this.chunks.push(new Uint8Array(this.scratch.buffer.slice(0, 8)));
  }

  concat(): Uint8Array {
    const total = this.chunks.reduce((n, c) => n + c.length, 0);
    const out = new Uint8Array(total);
    let pos = 0;
    for (const chunk of this.chunks) {
      out.set(chunk, pos);
      pos += chunk.length;
    }
    return out;
  }
}

export function encode(value: DataObject): Uint8Array {
  const writer = new Writer();
  encodeInto(value, writer);
  return writer.concat();
}

function encodeInto(value: DataObject, out: Writer): void {
  switch (value.kind) {
    case "null":
      out.byte(TAG_NULL);
      return;
    case "bool":
      out.byte(TAG_BOOL);
      out.byte(value.value ? 1 : 0);
      return;
    case "int32":
      out.byte(TAG_INT32);
      out.i32(value.value);
      return;
    case "int64":
      out.byte(TAG_INT64);
      out.i64(value.value);
      return;
    case "float32":
      out.byte(TAG_FLOAT32);
      out.f32(value.value);
      return;
    case "float64":
      out.byte(TAG_FLOAT64);
      out.f64(value.value);
      return;
    case "string": {
      const raw = utf8Encoder.encode(value.value);
      out.byte(TAG_STRING);
      out.u32(raw.length);
      out.push(raw);
      return;
    }
    case "time":
      out.byte(TAG_TIME);
      out.i64(value.micros);
      return;
    case "ndarray":
      out.byte(TAG_NDARRAY);
      out.byte(ELEM_KIND_CODES[value.elemKind]);
      out.byte(value.dims.length);
      for (const dim of value.dims) out.u32(dim);
      out.push(value.data);
      return;
    case "list":
      out.byte(TAG_LIST);
      out.u32(value.items.length);
      for (const item of value.items) encodeInto(item, out);
      return;
    case "map": {
      out.byte(TAG_MAP);
      out.u32(value.entries.size);
      for (const key of sortedKeys(value.entries)) {
        const raw = utf8Encoder.encode(key);
        out.u32(raw.length);
        out.push(raw);
        encodeInto(value.entries.get(key)!, out);
      }
      return;
    }
  }
}

class Reader {
  private view: DataView;
  public offset = 0;

  constructor(private data: Uint8Array) {
    this.view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  }

  get length(): number {
    return this.data.length;
  }

  take(n: number, expected: string): Uint8Array {
    if (this.offset + n > this.data.length) {
      throw new MalformedInput(this.offset, expected);
    }
    const slice = this.data.subarray(this.offset, this.offset + n);
    this.offset += n;
    return slice;
  }

  byte(expected: string): number {
    if (this.offset >= this.data.length) {
      throw new MalformedInput(this.offset, expected);
    }
    return this.data[this.offset++];
  }

  u32(expected: string): number {
    if (this.offset + 4 > this.data.length) {
      throw new MalformedInput(this.offset, expected);
    }
    const value = this.view.getUint32(this.offset, true);
    this.offset += 4;
    return value;
  }

  i32(expected: string): number {
    if (this.offset + 4 > this.data.length) {
      throw new MalformedInput(this.offset, expected);
    }
    const value = this.view.getInt32(this.offset, true);
    this.offset += 4;
    return value;
  }

  i64(expected: string): bigint {
    if (this.offset + 8 > this.data.length) {
      throw new MalformedInput(this.offset, expected);
    }
    const value = this.view.getBigInt64(this.offset, true);
    this.offset += 8;
    return value;
  }

  f32(expected: string): number {
    if (this.offset + 4 > this.data.length) {
      throw new MalformedInput(this.offset, expected);
    }
    const value = this.view.getFloat32(this.offset, true);
    this.offset += 4;
    return value;
  }

  f64(expected: string): number {
    if (this.offset + 8 > this.data.length) {
      throw new MalformedInput(this.offset, expected);
    }
    const value = this.view.getFloat64(this.offset, true);
    this.offset += 8;
    return value;
  }

  text(): string {
    const length = this.u32("string length");
    const start = this.offset;
    const raw = this.take(length, `${length} bytes of UTF-8 text`);
    try {
      return utf8Decoder.decode(raw);
    } catch {
      throw new MalformedInput(start, "valid UTF-8");
    }
  }
}

export function decode(data: Uint8Array): DataObject {
  const reader = new Reader(data);
  const value = decodeNext(reader);
  if (reader.offset !== data.length) {
    throw new MalformedInput(reader.offset, "end of input");
  }
  return value;
}

/** Decode one value from `data` starting at `offset`; returns the value and
 * the offset just past it. */
export function decodeFrom(
  data: Uint8Array,
  offset: number,
): [DataObject, number] {
  const reader = new Reader(data);
  reader.offset = offset;
  const value = decodeNext(reader);
  return [value, reader.offset];
}

function decodeNext(r: Reader): DataObject {
  const tag = r.byte("tag byte");
  switch (tag) {
    case TAG_NULL:
      return { kind: "null" };
    case TAG_BOOL: {
      const at = r.offset;
      const raw = r.byte("bool byte");
      if (raw !== 0 && raw !== 1) {
        throw new MalformedInput(at, "bool byte 0 or 1");
      }
      return { kind: "bool", value: raw === 1 };
    }
    case TAG_INT32:
      return { kind: "int32", value: r.i32("int32 payload") };
    case TAG_INT64:
      return { kind: "int64", value: r.i64("int64 payload") };
    case TAG_FLOAT32:
      return { kind: "float32", value: r.f32("float32 payload") };
    case TAG_FLOAT64:
      return { kind: "float64", value: r.f64("float64 payload") };
    case TAG_STRING:
      return { kind: "string", value: r.text() };
    case TAG_TIME:
      return { kind: "time", micros: r.i64("time payload") };
    case TAG_NDARRAY: {
      const kindAt = r.offset;
      const code = r.byte("element kind code");
      const elemKind = CODE_TO_ELEM_KIND[code];
      if (elemKind === undefined) {
        throw new MalformedInput(kindAt, `element kind code, got ${code}`);
      }
      const ndim = r.byte("ndim");
      const dims: number[] = [];
      for (let i = 0; i < ndim; i++) dims.push(r.u32("dimension extent"));
      const count = dims.reduce((a, b) => a * b, 1);
      const nbytes = count * ELEM_KIND_WIDTHS[elemKind];
      const data = new Uint8Array(r.take(nbytes, `${nbytes}-byte array buffer`));
      return { kind: "ndarray", elemKind, dims, data };
    }
    case TAG_LIST: {
      const count = r.u32("list count");
      const items: DataObject[] = [];
      for (let i = 0; i < count; i++) items.push(decodeNext(r));
      return { kind: "list", items };
    }
    case TAG_MAP: {
      const count = r.u32("map count");
      const entries = new Map<string, DataObject>();
      for (let i = 0; i < count; i++) {
        const keyAt = r.offset;
        const key = r.text();
        if (entries.has(key)) {
          throw new MalformedInput(keyAt, `unique map key, got duplicate ${JSON.stringify(key)}`);
        }
        entries.set(key, decodeNext(r));
      }
      return { kind: "map", entries };
    }
    default:
      throw new MalformedInput(
        r.offset - 1,
        `known tag, got 0x${tag.toString(16).toUpperCase().padStart(2, "0")}`,
      );
  }
}
