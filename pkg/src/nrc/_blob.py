"""Small versioned container for numpy arrays plus a JSON header.

Layout (all integers little-endian)::

    magic      4 bytes
    version    uint16
    hdr_len    uint32
    header     hdr_len bytes of UTF-8 JSON (sorted keys)
    payload    arrays back to back, in the order listed in header["arrays"],
               each as raw little-endian bytes in C order

``header["arrays"]`` is a list of ``{"name", "dtype", "shape"}`` records.
"""

import json
import struct

import numpy as np

from nrc.errors import FormatError

_PREFIX = struct.Struct("<4sHI")
_DTYPES = {"f8": np.dtype("<f8"), "i8": np.dtype("<i8")}


def write_blob(path, magic, version, header, arrays):
    header = dict(header)
    specs, chunks = [], []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        code = "f8" if arr.dtype.kind == "f" else "i8"
        arr = np.ascontiguousarray(arr, dtype=_DTYPES[code])
        specs.append({"name": name, "dtype": code, "shape": list(arr.shape)})
        chunks.append(arr.tobytes(order="C"))
    header["arrays"] = specs
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(magic, version, len(raw)))
        fh.write(raw)
        for chunk in chunks:
            fh.write(chunk)


def read_blob(path, magic, supported_versions):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _PREFIX.size:
        raise FormatError(f"{path}: file too short")
    got_magic, version, hdr_len = _PREFIX.unpack_from(data)
    if got_magic != magic:
        raise FormatError(f"{path}: bad magic {got_magic!r}, expected {magic!r}")
    if version not in supported_versions:
        raise FormatError(f"{path}: unsupported format version {version}")
    pos = _PREFIX.size
    try:
        header = json.loads(data[pos:pos + hdr_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header ({exc})") from None
    pos += hdr_len
    arrays = {}
    for spec in header.get("arrays", []):
        dt = _DTYPES[spec["dtype"]]
        shape = tuple(spec["shape"])
        nbytes = dt.itemsize * int(np.prod(shape, dtype=np.int64))
        if pos + nbytes > len(data):
            raise FormatError(f"{path}: truncated payload for array {spec['name']!r}")
        arrays[spec["name"]] = np.frombuffer(data, dtype=dt, count=nbytes // dt.itemsize,
                                             offset=pos).reshape(shape).astype(dt.newbyteorder("="))
        pos += nbytes
    if pos != len(data):
        raise FormatError(f"{path}: {len(data) - pos} trailing bytes")
    return header, arrays
