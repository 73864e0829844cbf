"""Canonical binary encoding of data objects.

Layout (little-endian throughout): one tag byte, then the payload.

    0x00 Null                (no payload)
    0x01 Bool                1 byte, 0 or 1
    0x02 Int32               4 bytes
    0x03 Int64               8 bytes
    0x04 Float32             4 bytes
    0x05 Float64             8 bytes
    0x06 String              u32 byte length + UTF-8 bytes
    0x07 Time                i64 microseconds
    0x08 NDArray             u8 elem-kind code, u8 ndim, ndim x u32 dims, raw buffer
    0x09 List                u32 count + encoded elements
    0x0A Map                 u32 count + per entry: u32 key length + UTF-8 key,
                             then the encoded value

Encoding is canonical: Map entries are emitted in ascending lexicographic key
order, so equal values always produce identical bytes. The per-variant
dispatch tables keep this hot path cheap; the codec sits under every wire
frame and storage record.
"""

from __future__ import annotations

import struct

from .values import (
    ELEM_CODE_TO_KIND,
    ELEM_KINDS,
    _unchecked_map,
    _unchecked_string,
    Bool,
    DataObject,
    Float32,
    Float64,
    Int32,
    Int64,
    List,
    Map,
    NDArray,
    Null,
    String,
    Time,
)

TAG_NULL = 0x00
TAG_BOOL = 0x01
TAG_INT32 = 0x02
TAG_INT64 = 0x03
TAG_FLOAT32 = 0x04
TAG_FLOAT64 = 0x05
TAG_STRING = 0x06
TAG_TIME = 0x07
TAG_NDARRAY = 0x08
TAG_LIST = 0x09
TAG_MAP = 0x0A

MAX_LENGTH = 2**32 - 1

_pack_i32 = struct.Struct("<i").pack
_pack_i64 = struct.Struct("<q").pack
_pack_f32 = struct.Struct("<f").pack
_pack_f64 = struct.Struct("<d").pack
_pack_u32 = struct.Struct("<I").pack
_unpack_i32 = struct.Struct("<i").unpack_from
_unpack_i64 = struct.Struct("<q").unpack_from
_unpack_f32 = struct.Struct("<f").unpack_from
_unpack_f64 = struct.Struct("<d").unpack_from
_unpack_u32 = struct.Struct("<I").unpack_from


class MalformedInput(ValueError):
    """Raised when a byte sequence is not a valid encoding.

    Carries the byte offset of the failure and the construct that was
    expected there.
    """

    def __init__(self, offset: int, expected: str):
        self.offset = offset
        self.expected = expected
        super().__init__(f"malformed input at offset {offset}: expected {expected}")


def encode(value: DataObject) -> bytes:
    out = bytearray()
    _encode_into(value, out)
    return bytes(out)


def _enc_null(value: Null, out: bytearray) -> None:
    out.append(TAG_NULL)


def _enc_bool(value: Bool, out: bytearray) -> None:
    out.append(TAG_BOOL)
    out.append(1 if value.value else 0)


def _enc_int32(value: Int32, out: bytearray) -> None:
    out.append(TAG_INT32)
    out += _pack_i32(value.value)


def _enc_int64(value: Int64, out: bytearray) -> None:
    out.append(TAG_INT64)
    out += _pack_i64(value.value)


def _enc_float32(value: Float32, out: bytearray) -> None:
    out.append(TAG_FLOAT32)
    out += _pack_f32(value.value)


def _enc_float64(value: Float64, out: bytearray) -> None:
    out.append(TAG_FLOAT64)
    out += _pack_f64(value.value)


def _enc_string(value: String, out: bytearray) -> None:
    raw = value.value.encode("utf-8")
    out.append(TAG_STRING)
    out += _pack_u32(len(raw))
    out += raw


def _enc_time(value: Time, out: bytearray) -> None:
    out.append(TAG_TIME)
    out += _pack_i64(value.micros)


def _enc_ndarray(value: NDArray, out: bytearray) -> None:
    out.append(TAG_NDARRAY)
    out.append(ELEM_KINDS[value.elem_kind][0])
    out.append(len(value.dims))
    for d in value.dims:
        out += _pack_u32(d)
    out += value.data


def _enc_list(value: List, out: bytearray) -> None:
    out.append(TAG_LIST)
    out += _pack_u32(len(value.items))
    encoders = _ENCODERS
    for item in value.items:
        encoders[type(item)](item, out)


def _enc_map(value: Map, out: bytearray) -> None:
    out.append(TAG_MAP)
    entries = value.entries
    out += _pack_u32(len(entries))
    encoders = _ENCODERS
    for key in sorted(entries):
        raw = key.encode("utf-8")
        out += _pack_u32(len(raw))
        out += raw
        item = entries[key]
        encoders[type(item)](item, out)


_ENCODERS = {
    Null: _enc_null,
    Bool: _enc_bool,
    Int32: _enc_int32,
    Int64: _enc_int64,
    Float32: _enc_float32,
    Float64: _enc_float64,
    String: _enc_string,
    Time: _enc_time,
    NDArray: _enc_ndarray,
    List: _enc_list,
    Map: _enc_map,
}


def _encode_into(value: DataObject, out: bytearray) -> None:
    encoder = _ENCODERS.get(type(value))
    if encoder is None:
        raise TypeError(f"not a DataObject: {type(value).__name__}")
    encoder(value, out)


def decode(data: bytes) -> DataObject:
    """Decode one value; trailing bytes are rejected."""
    value, offset = decode_from(data, 0)
    if offset != len(data):
        raise MalformedInput(offset, "end of input")
    return value


def decode_from(data: bytes, offset: int) -> tuple[DataObject, int]:
    """Decode one value starting at `offset`; returns (value, next offset)."""
    end = len(data)
    if offset >= end:
        raise MalformedInput(offset, "tag byte")
    tag = data[offset]
    offset += 1
    if tag == TAG_MAP:
        if offset + 4 > end:
            raise MalformedInput(offset, "map count")
        (count,) = _unpack_u32(data, offset)
        offset += 4
        entries: dict[str, DataObject] = {}
        for _ in range(count):
            key_offset = offset
            key, offset = _decode_text(data, offset)
            if key in entries:
                raise MalformedInput(key_offset, f"unique map key, got duplicate {key!r}")
            entries[key], offset = decode_from(data, offset)
        return _unchecked_map(entries), offset
    if tag == TAG_LIST:
        if offset + 4 > end:
            raise MalformedInput(offset, "list count")
        (count,) = _unpack_u32(data, offset)
        offset += 4
        items = []
        for _ in range(count):
            item, offset = decode_from(data, offset)
            items.append(item)
        return List(tuple(items)), offset
    if tag == TAG_STRING:
        text, offset = _decode_text(data, offset)
        return _unchecked_string(text), offset
    if tag == TAG_INT64:
        if offset + 8 > end:
            raise MalformedInput(offset, "int64 payload")
        return Int64(_unpack_i64(data, offset)[0]), offset + 8
    if tag == TAG_FLOAT64:
        if offset + 8 > end:
            raise MalformedInput(offset, "float64 payload")
        return Float64(_unpack_f64(data, offset)[0]), offset + 8
    if tag == TAG_TIME:
        if offset + 8 > end:
            raise MalformedInput(offset, "time payload")
        return Time(_unpack_i64(data, offset)[0]), offset + 8
    if tag == TAG_NULL:
        return _NULL, offset
    if tag == TAG_BOOL:
        if offset + 1 > end:
            raise MalformedInput(offset, "bool byte")
        raw = data[offset]
        if raw > 1:
            raise MalformedInput(offset, "bool byte 0 or 1")
        return (_TRUE if raw else _FALSE), offset + 1
    if tag == TAG_INT32:
        if offset + 4 > end:
            raise MalformedInput(offset, "int32 payload")
        return Int32(_unpack_i32(data, offset)[0]), offset + 4
    if tag == TAG_FLOAT32:
        if offset + 4 > end:
            raise MalformedInput(offset, "float32 payload")
        return Float32(_unpack_f32(data, offset)[0]), offset + 4
    if tag == TAG_NDARRAY:
        if offset >= end:
            raise MalformedInput(offset, "element kind code")
        kind = ELEM_CODE_TO_KIND.get(data[offset])
        if kind is None:
            raise MalformedInput(offset, f"element kind code, got {data[offset]}")
        offset += 1
        if offset >= end:
            raise MalformedInput(offset, "ndim")
        ndim = data[offset]
        offset += 1
        dims = []
        for _ in range(ndim):
            if offset + 4 > end:
                raise MalformedInput(offset, "dimension extent")
            dims.append(_unpack_u32(data, offset)[0])
            offset += 4
        count = 1
        for d in dims:
            count *= d
        nbytes = count * ELEM_KINDS[kind][1]
        if offset + nbytes > end:
            raise MalformedInput(offset, f"{nbytes}-byte array buffer")
        return NDArray(kind, tuple(dims), bytes(data[offset : offset + nbytes])), offset + nbytes
    raise MalformedInput(offset - 1, f"known tag, got 0x{tag:02X}")


_NULL = Null()
_TRUE = Bool(True)
_FALSE = Bool(False)


def _decode_text(data: bytes, offset: int) -> tuple[str, int]:
    if offset + 4 > len(data):
        raise MalformedInput(offset, "string length")
    (length,) = _unpack_u32(data, offset)
    offset += 4
    if offset + length > len(data):
        raise MalformedInput(offset, f"{length} bytes of UTF-8 text")
    try:
        text = data[offset : offset + length].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedInput(offset + exc.start, "valid UTF-8") from None
    return text, offset + length
