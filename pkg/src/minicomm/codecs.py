"""Codecs mapping element sequences to little-endian payload bytes.

Fixed-width codecs cover plain scalar data and packed records; every codec
satisfies ``decode(encode(xs)) == xs`` and, for fixed widths,
``len(encode(xs)) == element_width * len(xs)``.
"""

import struct

from .errors import DecodeError

#: element_width value for codecs without a fixed per-element size.
VARIABLE = None


class Codec:
    """Interface: ``element_width``, ``encode(values)``, ``decode(data)``."""

    element_width = VARIABLE

    def encode(self, values):
        raise NotImplementedError

    def decode(self, data):
        raise NotImplementedError


class FixedCodec(Codec):
    """Scalar codec backed by a single ``struct`` format character."""

    def __init__(self, fmt_char, name):
        self._ch = fmt_char
        self.name = name
        self.element_width = struct.calcsize("<" + fmt_char)

    def __repr__(self):
        return "<codec %s>" % self.name

    def encode(self, values):
        values = list(values)
        return struct.pack("<%d%s" % (len(values), self._ch), *values)

    def decode(self, data):
        w = self.element_width
        if len(data) % w:
            raise DecodeError(
                "payload of %d bytes is not a multiple of element width %d (%s)"
                % (len(data), w, self.name)
            )
        return list(struct.unpack("<%d%s" % (len(data) // w, self._ch), data))

    def zero(self):
        return struct.unpack("<" + self._ch, b"\x00" * self.element_width)[0]


class BytesCodec(Codec):
    """Identity codec for raw byte strings (one element per byte)."""

    element_width = 1
    name = "bytes"

    def encode(self, values):
        return bytes(values)

    def decode(self, data):
        return bytes(data)

    def zero(self):
        return 0


class RecordCodec(Codec):
    """Packed plain-record codec: fields are encoded back to back, no padding.

    ``fields`` is a sequence of scalar codecs or ``(codec, count)`` pairs;
    a count > 1 maps to a tuple-valued field.  Elements are tuples with one
    entry per field.
    """

    def __init__(self, *fields):
        self._fields = []
        fmt = "<"
        for f in fields:
            codec, count = f if isinstance(f, tuple) else (f, 1)
            if not isinstance(codec, FixedCodec):
                raise TypeError("record fields must be fixed scalar codecs")
            self._fields.append((codec, count))
            fmt += "%d%s" % (count, codec._ch)
        self._fmt = fmt
        self.element_width = struct.calcsize(fmt)
        self.name = "record(%s)" % ",".join(
            c.name if n == 1 else "%s[%d]" % (c.name, n) for c, n in self._fields
        )

    def __repr__(self):
        return "<codec %s>" % self.name

    def _flatten(self, element):
        if len(element) != len(self._fields):
            raise DecodeError(
                "record element has %d fields, codec expects %d"
                % (len(element), len(self._fields))
            )
        flat = []
        for (codec, count), value in zip(self._fields, element):
            if count == 1:
                flat.append(value)
            else:
                flat.extend(value)
        return flat

    def encode(self, values):
        out = []
        for element in values:
            out.append(struct.pack(self._fmt, *self._flatten(element)))
        return b"".join(out)

    def decode(self, data):
        w = self.element_width
        if len(data) % w:
            raise DecodeError(
                "payload of %d bytes is not a multiple of record width %d"
                % (len(data), w)
            )
        values = []
        for off in range(0, len(data), w):
            flat = struct.unpack_from(self._fmt, data, off)
            element, i = [], 0
            for codec, count in self._fields:
                if count == 1:
                    element.append(flat[i])
                else:
                    element.append(tuple(flat[i : i + count]))
                i += count
            values.append(tuple(element))
        return values

    def zero(self):
        return tuple(
            c.zero() if n == 1 else (c.zero(),) * n for c, n in self._fields
        )


u8 = FixedCodec("B", "u8")
i32 = FixedCodec("i", "i32")
u32 = FixedCodec("I", "u32")
i64 = FixedCodec("q", "i64")
u64 = FixedCodec("Q", "u64")
f32 = FixedCodec("f", "f32")
f64 = FixedCodec("d", "f64")
boolean = FixedCodec("?", "bool")
raw = BytesCodec()


def record(*fields):
    """Build a packed record codec, e.g. ``record(i32, f64, (u8, 3))``."""
    return RecordCodec(*fields)
