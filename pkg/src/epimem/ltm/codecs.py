"""Lossless blob codecs for the online tier.

Image-annotated NDArrays go through a raster codec (PNG); everything else is
DEFLATE over the canonical encoding. Codec failures fall back to storing the
bytes uncompressed under codec id "raw".
"""

from __future__ import annotations

import io
import logging
import zlib

import numpy as np
from PIL import Image

from ..idf import (
    DataObject,
    ImageType,
    Map,
    NDArray,
    ObjectType,
    TypeObject,
    decode,
    encode,
)
from ..idf.values import Null

logger = logging.getLogger(__name__)

_PNG_MODES = {1: "L", 3: "RGB", 4: "RGBA"}


def deflate(data: bytes) -> tuple[str, bytes]:
    try:
        return "deflate", zlib.compress(data, level=6)
    except Exception:  # pragma: no cover - zlib does not fail on bytes
        logger.exception("deflate failed, storing raw")
        return "raw", data


def inflate(codec: str, data: bytes) -> bytes:
    if codec == "raw":
        return data
    if codec == "deflate":
        return zlib.decompress(data)
    raise ValueError(f"unknown blob codec {codec!r}")


def png_compress(array: NDArray) -> tuple[str, bytes] | None:
    """PNG-encode an u8 [h, w, c] array; None when the shape does not fit."""
    if array.elem_kind != "u8" or len(array.dims) != 3:
        return None
    height, width, channels = array.dims
    mode = _PNG_MODES.get(channels)
    if mode is None or height == 0 or width == 0:
        return None
    try:
        pixels = array.to_numpy()
        if channels == 1:
            pixels = pixels[:, :, 0]
        image = Image.fromarray(pixels, mode=mode)
        buf = io.BytesIO()
        image.save(buf, format="PNG", optimize=False)
        return "png", buf.getvalue()
    except Exception:
        logger.exception("png compression failed, falling back")
        return None


def png_decompress(data: bytes, dims: tuple[int, ...]) -> NDArray:
    pixels = np.asarray(Image.open(io.BytesIO(data)), dtype=np.uint8)
    return NDArray.from_numpy(pixels.reshape(dims))


def image_paths(value: DataObject, annotation: TypeObject | None) -> list[tuple]:
    """Paths of NDArray leaves annotated as images by the segment type."""
    if annotation is None:
        return []
    found: list[tuple] = []

    def visit(node: DataObject, ty: TypeObject | None, path: tuple) -> None:
        if ty is None:
            return
        if isinstance(ty, ImageType) and isinstance(node, NDArray):
            found.append(path)
            return
        if isinstance(ty, ObjectType) and isinstance(node, Map):
            for name, fld in ty.fields.items():
                member = node.entries.get(name)
                if member is not None:
                    visit(member, fld.type, path + (name,))

    visit(value, annotation, ())
    return found


def compress_value(
    value: DataObject, annotation: TypeObject | None = None
) -> list[dict]:
    """Split a value into blobs: one main blob plus one per annotated image.

    Blob dicts: {codec, path, dims, data}; the main blob has path ().
    """
    from ..idf.values import get_at, set_at

    blobs: list[dict] = []
    stripped = value
    for path in image_paths(value, annotation):
        leaf = get_at(value, path)
        assert isinstance(leaf, NDArray)
        png = png_compress(leaf)
        if png is None:
            continue
        codec, data = png
        blobs.append({"codec": codec, "path": path, "dims": leaf.dims, "data": data})
        stripped = set_at(stripped, path, Null())
    codec, data = deflate(encode(stripped))
    blobs.insert(0, {"codec": codec, "path": (), "dims": (), "data": data})
    return blobs


def decompress_value(blobs: list[dict]) -> DataObject:
    from ..idf.values import set_at

    main = blobs[0]
    value = decode(inflate(main["codec"], main["data"]))
    for blob in blobs[1:]:
        if blob["codec"] == "png":
            array = png_decompress(blob["data"], tuple(blob["dims"]))
        else:
            array = decode(inflate(blob["codec"], blob["data"]))  # pragma: no cover
        value = set_at(value, tuple(blob["path"]), array)
    return value


def stored_size(blobs: list[dict]) -> int:
    return sum(len(blob["data"]) for blob in blobs)
