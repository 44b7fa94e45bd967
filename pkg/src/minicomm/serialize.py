"""Explicit serialization for heap-structured values.

Plain-data traffic goes through fixed-width codecs; anything with pointers
(strings, mappings, nested lists, registered user classes) must be wrapped
with :func:`as_serialized` by the caller.  Serialization never happens
implicitly.

Two archive formats are supported:

* ``binary`` (default): a tag byte per value followed by a length-prefixed
  little-endian layout, documented in the README.
* ``json``: UTF-8 JSON, intended for debugging.  Tuples decode as lists.
"""

import json
import struct

from .codecs import Codec, VARIABLE
from .errors import SerializationError

_T_NONE = 0x00
_T_FALSE = 0x01
_T_TRUE = 0x02
_T_INT = 0x03
_T_FLOAT = 0x04
_T_STR = 0x05
_T_BYTES = 0x06
_T_LIST = 0x07
_T_TUPLE = 0x08
_T_DICT = 0x09
_T_CUSTOM = 0x0A

# class -> (name, to_portable, from_portable); name -> class entry
_registry_by_class = {}
_registry_by_name = {}


def register(cls, name=None, to_portable=None, from_portable=None):
    """Register a user class so instances can be serialized.

    ``to_portable`` maps an instance to built-in values; ``from_portable``
    reconstructs an instance.  Defaults use ``vars()`` and keyword
    construction, which fits plain attribute-bag classes.
    """
    name = name or cls.__name__
    to_portable = to_portable or (lambda obj: dict(vars(obj)))
    from_portable = from_portable or (lambda data: cls(**data))
    entry = (name, to_portable, from_portable)
    _registry_by_class[cls] = entry
    _registry_by_name[name] = (cls, to_portable, from_portable)


def _pack_str(s):
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _encode_binary(value, out):
    if value is None:
        out.append(bytes([_T_NONE]))
    elif value is True:
        out.append(bytes([_T_TRUE]))
    elif value is False:
        out.append(bytes([_T_FALSE]))
    elif isinstance(value, int):
        raw = value.to_bytes((value.bit_length() + 8) // 8, "little", signed=True)
        if len(raw) > 255:
            raise SerializationError("integer too large to serialize")
        out.append(bytes([_T_INT, len(raw)]) + raw)
    elif isinstance(value, float):
        out.append(bytes([_T_FLOAT]) + struct.pack("<d", value))
    elif isinstance(value, str):
        out.append(bytes([_T_STR]) + _pack_str(value))
    elif isinstance(value, (bytes, bytearray)):
        out.append(bytes([_T_BYTES]) + struct.pack("<I", len(value)) + bytes(value))
    elif isinstance(value, (list, tuple)):
        tag = _T_LIST if isinstance(value, list) else _T_TUPLE
        out.append(bytes([tag]) + struct.pack("<I", len(value)))
        for item in value:
            _encode_binary(item, out)
    elif isinstance(value, dict):
        out.append(bytes([_T_DICT]) + struct.pack("<I", len(value)))
        for k, v in value.items():
            _encode_binary(k, out)
            _encode_binary(v, out)
    elif type(value) in _registry_by_class:
        name, to_portable, _ = _registry_by_class[type(value)]
        out.append(bytes([_T_CUSTOM]) + _pack_str(name))
        _encode_binary(to_portable(value), out)
    else:
        raise SerializationError(
            "type %r is not serializable; register it first" % type(value).__name__
        )


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise SerializationError("truncated serialized payload")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]


def _decode_binary(r):
    tag = r.take(1)[0]
    if tag == _T_NONE:
        return None
    if tag == _T_TRUE:
        return True
    if tag == _T_FALSE:
        return False
    if tag == _T_INT:
        n = r.take(1)[0]
        return int.from_bytes(r.take(n), "little", signed=True)
    if tag == _T_FLOAT:
        return struct.unpack("<d", r.take(8))[0]
    if tag == _T_STR:
        return r.take(r.u32()).decode("utf-8")
    if tag == _T_BYTES:
        return bytes(r.take(r.u32()))
    if tag in (_T_LIST, _T_TUPLE):
        items = [_decode_binary(r) for _ in range(r.u32())]
        return items if tag == _T_LIST else tuple(items)
    if tag == _T_DICT:
        n = r.u32()
        result = {}
        for _ in range(n):
            key = _decode_binary(r)
            result[key] = _decode_binary(r)
        return result
    if tag == _T_CUSTOM:
        name = r.take(r.u32()).decode("utf-8")
        if name not in _registry_by_name:
            raise SerializationError("unregistered serialized kind %r" % name)
        cls, _, from_portable = _registry_by_name[name]
        return from_portable(_decode_binary(r))
    raise SerializationError("unknown format tag 0x%02x" % tag)


def encode_value(value, fmt="binary"):
    """Serialize one value to bytes in the given archive format."""
    if fmt == "binary":
        out = []
        _encode_binary(value, out)
        return b"".join(out)
    if fmt == "json":
        try:
            return json.dumps(value).encode("utf-8")
        except (TypeError, ValueError) as exc:
            raise SerializationError("json serialization failed: %s" % exc) from exc
    raise SerializationError("unknown serialization format %r" % fmt)


def decode_value(data, fmt="binary"):
    """Inverse of :func:`encode_value`."""
    if fmt == "binary":
        r = _Reader(data)
        value = _decode_binary(r)
        if r.pos != len(data):
            raise SerializationError("trailing bytes after serialized value")
        return value
    if fmt == "json":
        try:
            return json.loads(data.decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            raise SerializationError("json deserialization failed: %s" % exc) from exc
    raise SerializationError("unknown serialization format %r" % fmt)


class SerializedValue:
    """Marks a value as explicitly serialized; accepted by buffer parameters."""

    def __init__(self, wrapped, fmt="binary"):
        if fmt not in ("binary", "json"):
            raise SerializationError("unknown serialization format %r" % fmt)
        self.wrapped = wrapped
        self.format = fmt


class DeserializeAdapter:
    """Receive-side marker: decode the payload, optionally checking the kind."""

    def __init__(self, kind=None, fmt="binary"):
        self.kind = kind
        self.format = fmt

    def check(self, value):
        if self.kind is not None and not isinstance(value, self.kind):
            raise SerializationError(
                "deserialized %r where %r was expected"
                % (type(value).__name__, self.kind.__name__)
            )
        return value


def as_serialized(value, fmt="binary"):
    """Wrap ``value`` for sending through any buffer parameter."""
    return SerializedValue(value, fmt)


def as_deserializable(kind=None, fmt="binary"):
    """Receive-side adapter for a serialized payload of the given kind."""
    return DeserializeAdapter(kind, fmt)


class SerialCodec(Codec):
    """Variable-width codec: each element is one serialized value.

    Elements are concatenated as ``[u32 length][archive bytes]`` so that a
    payload can carry any number of heap-structured values.
    """

    element_width = VARIABLE

    def __init__(self, fmt="binary"):
        self.format = fmt
        self.name = "serialized(%s)" % fmt

    def encode(self, values):
        out = []
        for v in values:
            blob = encode_value(v, self.format)
            out.append(struct.pack("<I", len(blob)) + blob)
        return b"".join(out)

    def decode(self, data):
        r = _Reader(data)
        values = []
        while r.pos < len(data):
            values.append(decode_value(r.take(r.u32()), self.format))
        return values


serial_binary = SerialCodec("binary")
serial_json = SerialCodec("json")
