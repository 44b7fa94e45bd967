"""Core collectives: bcast, (all)gather(v), alltoall(v), reduce, flatten.

Every operation accepts parameter descriptors in any order, infers omitted
counts/displacements with the minimum extra communication, and returns the
receive payload first.  Baseline algorithms and their envelope costs (all
contributions non-empty, ``p`` ranks):

====================  =============================  =================
operation             algorithm                      envelopes (total)
====================  =============================  =================
bcast                 binomial tree                  p - 1
gatherv               direct sends to root           p - 1
allgather/allgatherv  gather to rank 0 + bcast       2 (p - 1)
alltoall/alltoallv    direct, one send per peer      p (p - 1)
reduce (root 0)       binomial fold, rank order      p - 1
allreduce             reduce to 0 + bcast            2 (p - 1)
barrier               dissemination rounds           p * ceil(log2 p)
====================  =============================  =================

Zero-length segments send no envelope, so variable collectives subtract
empty segments from the figures above.  Inferring receive counts costs one
allgather of sizes (allgatherv) or one alltoall of the counts vector
(alltoallv); nothing is exchanged when the caller passes them explicitly.
"""

import operator
from dataclasses import dataclass

from . import _itags as itags
from .errors import AssertionViolation, UsageError
from .codecs import i64
from .params import (
    AssertLevel,
    ResizePolicy,
    ResultBundle,
    ValidationReport,
    apply_resize,
    collect_params,
    exclusive_prefix_sum,
    validate_counts,
)
from .serialize import DeserializeAdapter, SerialCodec, SerializedValue


@dataclass
class ReduceOp:
    """Binary reduction operation; associativity is the caller's promise."""

    fn: object
    commutative: bool = False
    name: str = "user"


op_sum = ReduceOp(operator.add, True, "sum")
op_min = ReduceOp(min, True, "min")
op_max = ReduceOp(max, True, "max")
op_logical_and = ReduceOp(lambda a, b: bool(a and b), True, "logical_and")
op_logical_or = ReduceOp(lambda a, b: bool(a or b), True, "logical_or")


def _as_reduce_op(op):
    if isinstance(op, ReduceOp):
        return op
    if callable(op):
        return ReduceOp(op, False, getattr(op, "__name__", "user"))
    raise UsageError("op must be a ReduceOp or a binary callable")


def resolve_send(data, codec, op="collective"):
    """Turn a buffer argument into (values, codec).

    Serialization happens only when the caller wrapped the value with
    ``as_serialized``; a bare value without a codec is an error, never a
    silent serialization.
    """
    if isinstance(data, SerializedValue):
        return [data.wrapped], SerialCodec(data.format)
    if isinstance(data, DeserializeAdapter):
        raise UsageError("%s: as_deserializable() is receive-side only" % op)
    if codec is None:
        raise UsageError(
            "%s: no codec given and the value is not wrapped with as_serialized(); "
            "implicit serialization is never performed" % op
        )
    return list(data), codec


def with_flattened(dest_msg_map, size):
    """Flatten destination -> message-sequence pairs into a packed buffer.

    Returns ``(buffer, send_counts)`` with messages concatenated by ascending
    destination and a zero count for every absent destination.
    """
    counts = [0] * size
    buffer = []
    for dst in sorted(dest_msg_map):
        if not isinstance(dst, int) or not 0 <= dst < size:
            raise UsageError("destination %r out of range 0..%d" % (dst, size - 1))
        msgs = list(dest_msg_map[dst])
        counts[dst] = len(msgs)
        buffer.extend(msgs)
    return buffer, counts


class CollectiveOps:
    """Mixin providing the collective operations of a communicator."""

    # -- low-level byte legs ------------------------------------------------

    def _bcast_bytes(self, payload, root):
        """Binomial-tree broadcast of raw bytes; p-1 envelopes."""
        p = self.size
        if p == 1:
            return payload
        rr = (self.rank - root) % p
        if rr == 0:
            data = payload
            next_round = 0
        else:
            recv_round = rr.bit_length() - 1
            src = (rr - (1 << recv_round) + root) % p
            _, data = self._internal_recv(src, itags.BCAST)
            next_round = recv_round + 1
        total_rounds = (p - 1).bit_length()
        for k in range(next_round, total_rounds):
            dst_rr = rr + (1 << k)
            if dst_rr < p:
                self._internal_send((dst_rr + root) % p, itags.BCAST, data)
        return data

    def _gatherv_bytes(self, payload, root, has_data):
        """Direct gather of byte blocks; ranks with nothing send nothing."""
        if self.rank != root:
            if payload:
                self._internal_send(root, itags.GATHER, payload)
            return []
        blocks = [b""] * self.size
        blocks[self.rank] = payload
        for s in range(self.size):
            if s != self.rank and has_data[s]:
                _, blocks[s] = self._internal_recv(s, itags.GATHER)
        return blocks

    def _allgather_i64(self, values):
        """All ranks contribute the same number of i64s; 2(p-1) envelopes."""
        payload = i64.encode(values)
        blocks = self._gatherv_bytes(payload, 0, [True] * self.size)
        joined = b"".join(blocks) if self.rank == 0 else None
        return i64.decode(self._bcast_bytes(joined, 0))

    def _exchange_counts(self, counts):
        """Transpose a per-rank counts vector; one i64 envelope per peer."""
        incoming = [0] * self.size
        incoming[self.rank] = counts[self.rank]
        for d in range(self.size):
            if d != self.rank:
                self._internal_send(d, itags.COUNTS, i64.encode([counts[d]]))
        for s in range(self.size):
            if s != self.rank:
                _, raw = self._internal_recv(s, itags.COUNTS)
                incoming[s] = i64.decode(raw)[0]
        return incoming

    # -- bundle assembly ----------------------------------------------------

    def _place_segments(self, segments, counts, displs, codec, recv_buf_param):
        """Lay out per-source segments at their displacements."""
        packed = displs == exclusive_prefix_sum(counts)
        if packed:
            values = []
            for seg in segments:
                values.extend(seg)
        else:
            needed = max(
                (d + c for d, c in zip(displs, counts)), default=0
            )
            zero = codec.zero() if hasattr(codec, "zero") else None
            values = [zero] * needed
            for seg, d in zip(segments, displs):
                values[d : d + len(seg)] = seg
        if recv_buf_param is not None:
            container = recv_buf_param.container
            apply_resize(container, recv_buf_param.policy, len(values), "recv_buf")
            container[0 : len(values)] = values
            return container
        return values

    def _emit(self, payload, outs, computed):
        extras = []
        for o in outs:
            if o.which not in computed:
                raise UsageError("out-parameter %r is unavailable here" % o.which)
            value = list(computed[o.which])
            if o.target is not None:
                apply_resize(o.target, o.effective_policy(), len(value), o.which + "_out")
                o.target[0 : len(value)] = value
                extras.append((o.which, o.target))
            else:
                extras.append((o.which, value))
        return ResultBundle(payload, extras)

    def _check_root(self, root):
        if not isinstance(root, int) or not 0 <= root < self.size:
            raise UsageError("root %r out of range for size %d" % (root, self.size))

    # -- public collectives --------------------------------------------------

    def bcast(self, *args, root=0, codec=None):
        """Broadcast the root's value to every rank; binomial tree, p-1 envelopes."""
        params = collect_params("bcast", args, ("send_recv_buf",), ())
        self._check_root(root)
        data = params["send_recv_buf"].data
        serial = isinstance(data, (SerializedValue, DeserializeAdapter))
        if self.rank == root:
            values, use_codec = resolve_send(data, codec, "bcast")
            payload = use_codec.encode(values)
        else:
            payload = None
        raw = self._bcast_bytes(payload, root)
        if serial:
            fmt = data.format
            decoded = SerialCodec(fmt).decode(raw)
            if len(decoded) != 1:
                raise UsageError("bcast of a serialized value expects one value")
            value = decoded[0]
            if isinstance(data, DeserializeAdapter):
                value = data.check(value)
            return value
        if codec is None:
            raise UsageError("bcast: codec required for plain-data buffers")
        return codec.decode(raw)

    def allgather(self, *args, codec=None):
        """Rank-ordered concatenation of equal-size contributions at all ranks.

        ``send_recv_buf`` selects the in-place form: rank r's contribution is
        read from slot r of the full-size buffer, which is filled and returned.
        Cost: gather to rank 0 and a broadcast, 2(p-1) envelopes.
        """
        params = collect_params("allgather", args, (), ("send_buf", "send_recv_buf"))
        in_place = "send_recv_buf" in params
        if in_place == ("send_buf" in params):
            raise UsageError("allgather needs exactly one of send_buf / send_recv_buf")
        p = self.size
        if in_place:
            buf = params["send_recv_buf"].data
            if isinstance(buf, (SerializedValue, DeserializeAdapter)):
                raise UsageError("in-place allgather works on plain element buffers")
            if codec is None:
                raise UsageError("allgather: codec required")
            if len(buf) % p:
                raise UsageError(
                    "in-place buffer length %d is not a multiple of %d" % (len(buf), p)
                )
            k = len(buf) // p
            contribution = list(buf[self.rank * k : (self.rank + 1) * k])
            use_codec = codec
        else:
            contribution, use_codec = resolve_send(
                params["send_buf"].data, codec, "allgather"
            )
            k = len(contribution)
        if self.assert_level is AssertLevel.heavy:
            sizes = self._allgather_i64([k])
            if any(s != k for s in sizes):
                raise AssertionViolation(
                    ValidationReport(False, ["unequal allgather contribution sizes %r" % sizes])
                )
        payload = use_codec.encode(contribution)
        blocks = self._gatherv_bytes(payload, 0, [k > 0] * p)
        joined = b"".join(blocks) if self.rank == 0 else None
        if k > 0:
            raw = self._bcast_bytes(joined, 0)
        else:
            raw = b""
        values = use_codec.decode(raw)
        if in_place:
            if len(values) != len(buf):
                raise AssertionViolation(
                    ValidationReport(
                        False,
                        ["in-place allgather received %d elements for a buffer of %d"
                         % (len(values), len(buf))],
                    )
                )
            buf[:] = values
            return buf
        return values

    def allgatherv(self, *args, codec=None):
        """Concatenate varying-size contributions in rank order on every rank.

        Omitted receive counts are obtained by one allgather of the local
        sizes; displacements are always derivable as the exclusive prefix sum.
        """
        params = collect_params(
            "allgatherv",
            args,
            ("send_buf",),
            ("recv_buf", "recv_counts", "recv_displs", "recv_counts", "recv_displs"),
        )
        values, use_codec = resolve_send(params["send_buf"].data, codec, "allgatherv")
        p = self.size
        counts_param = params.get("recv_counts")
        if counts_param is not None:
            counts = list(counts_param.values)
            validate_counts(self, counts, _cap_light(self.assert_level),
                            param="recv_counts").raise_if_failed()
            if self.assert_level is AssertLevel.heavy:
                actual = self._allgather_i64([len(values)])
                if actual != counts:
                    raise AssertionViolation(ValidationReport(
                        False,
                        ["provided recv_counts %r do not match actual sizes %r"
                         % (counts, actual)],
                    ))
        else:
            counts = self._allgather_i64([len(values)])
        payload = use_codec.encode(values)
        blocks = self._gatherv_bytes(payload, 0, [c > 0 for c in counts])
        total = sum(counts)
        if total > 0:
            joined = b"".join(blocks) if self.rank == 0 else None
            raw = self._bcast_bytes(joined, 0)
        else:
            raw = b""
        all_values = use_codec.decode(raw)
        if len(all_values) != total and self.assert_level is not AssertLevel.none:
            raise AssertionViolation(ValidationReport(
                False,
                ["allgatherv received %d elements, counts promise %d"
                 % (len(all_values), total)],
            ))
        displs_param = params.get("recv_displs")
        displs = list(displs_param.values) if displs_param else exclusive_prefix_sum(counts)
        segments = _split_by_counts(all_values, counts)
        payload_out = self._place_segments(
            segments, counts, displs, use_codec, params.get("recv_buf")
        )
        return self._emit(payload_out, params["out"],
                          {"recv_counts": counts, "recv_displs": displs})

    def gatherv(self, *args, root=0, codec=None):
        """Rank-ordered concatenation at the root; empty payload elsewhere.

        Direct implementation: each rank sends its block straight to the
        root (p-1 envelopes), never an all-to-all.
        """
        params = collect_params(
            "gatherv", args,
            ("send_buf",),
            ("recv_buf", "recv_counts", "recv_displs"),
        )
        self._check_root(root)
        values, use_codec = resolve_send(params["send_buf"].data, codec, "gatherv")
        p = self.size
        counts_param = params.get("recv_counts")
        if counts_param is not None:
            counts = list(counts_param.values)
            if self.rank == root:
                validate_counts(self, counts, _cap_light(self.assert_level),
                                param="recv_counts").raise_if_failed()
        else:
            gathered = self._gatherv_bytes(i64.encode([len(values)]), root, [True] * p)
            counts = [i64.decode(b)[0] for b in gathered] if self.rank == root else []
        payload = use_codec.encode(values)
        has_data = [c > 0 for c in counts] if self.rank == root else []
        if self.rank != root:
            if payload:
                self._internal_send(root, itags.GATHER, payload)
            return self._emit([], params["out"], {"recv_counts": [], "recv_displs": []})
        blocks = [b""] * p
        blocks[root] = payload
        for s in range(p):
            if s != root and has_data[s]:
                _, blocks[s] = self._internal_recv(s, itags.GATHER)
        segments = [use_codec.decode(b) for b in blocks]
        if self.assert_level is not AssertLevel.none:
            for s, (seg, c) in enumerate(zip(segments, counts)):
                if len(seg) != c:
                    raise AssertionViolation(ValidationReport(
                        False,
                        ["gatherv: rank %d sent %d elements, counts promise %d"
                         % (s, len(seg), c)],
                    ))
        displs_param = params.get("recv_displs")
        displs = list(displs_param.values) if displs_param else exclusive_prefix_sum(counts)
        payload_out = self._place_segments(
            segments, counts, displs, use_codec, params.get("recv_buf")
        )
        return self._emit(payload_out, params["out"],
                          {"recv_counts": counts, "recv_displs": displs})

    def alltoall(self, *args, codec=None):
        """Regular transpose: output block i holds rank i's block for me."""
        params = collect_params("alltoall", args, ("send_buf",), ())
        values, use_codec = resolve_send(params["send_buf"].data, codec, "alltoall")
        p = self.size
        if len(values) % p:
            raise UsageError(
                "alltoall buffer length %d is not divisible by %d" % (len(values), p)
            )
        k = len(values) // p
        out = [None] * (k * p)
        out[self.rank * k : (self.rank + 1) * k] = values[
            self.rank * k : (self.rank + 1) * k
        ]
        if k == 0:
            return []
        for d in range(p):
            if d != self.rank:
                self._internal_send(
                    d, itags.ALLTOALL, use_codec.encode(values[d * k : (d + 1) * k])
                )
        for s in range(p):
            if s != self.rank:
                _, raw = self._internal_recv(s, itags.ALLTOALL)
                seg = use_codec.decode(raw)
                out[s * k : (s + 1) * k] = seg
        return out

    def alltoallv(self, *args, codec=None):
        """Personalized exchange of per-destination segments.

        Rank r receives segment r of every sender, assembled in source-rank
        order.  Omitted receive counts cost one alltoall of the send counts;
        omitted send displacements default to the packed layout.  One
        envelope per non-empty segment to a peer.
        """
        params = collect_params(
            "alltoallv", args,
            ("send_buf", "send_counts"),
            ("send_displs", "recv_buf", "recv_counts", "recv_displs"),
        )
        values, use_codec = resolve_send(params["send_buf"].data, codec, "alltoallv")
        p = self.size
        scounts = list(params["send_counts"].values)
        validate_counts(self, scounts, _cap_light(self.assert_level),
                        param="send_counts").raise_if_failed()
        sdispls_param = params.get("send_displs")
        sdispls = list(sdispls_param.values) if sdispls_param else exclusive_prefix_sum(scounts)
        if self.assert_level is not AssertLevel.none:
            if len(sdispls) != p:
                raise UsageError("send_displs must have one entry per rank")
            for d, c, off in zip(range(p), scounts, sdispls):
                if off < 0 or off + c > len(values):
                    raise UsageError(
                        "segment for rank %d ([%d:%d]) exceeds send_buf of %d elements"
                        % (d, off, off + c, len(values))
                    )
        rcounts_param = params.get("recv_counts")
        if rcounts_param is not None:
            rcounts = list(rcounts_param.values)
            validate_counts(self, rcounts, _cap_light(self.assert_level),
                            param="recv_counts").raise_if_failed()
            if self.assert_level is AssertLevel.heavy:
                validate_counts(self, scounts, AssertLevel.heavy,
                                recv_counts=rcounts).raise_if_failed()
        else:
            rcounts = self._exchange_counts(scounts)
        segments = [[] for _ in range(p)]
        segments[self.rank] = values[
            sdispls[self.rank] : sdispls[self.rank] + scounts[self.rank]
        ]
        for d in range(p):
            if d != self.rank and scounts[d] > 0:
                seg = values[sdispls[d] : sdispls[d] + scounts[d]]
                self._internal_send(d, itags.ALLTOALL, use_codec.encode(seg))
        for s in range(p):
            if s != self.rank and rcounts[s] > 0:
                _, raw = self._internal_recv(s, itags.ALLTOALL)
                seg = use_codec.decode(raw)
                if len(seg) != rcounts[s] and self.assert_level is not AssertLevel.none:
                    raise AssertionViolation(ValidationReport(
                        False,
                        ["alltoallv: rank %d sent %d elements to rank %d, "
                         "recv_counts promise %d" % (s, len(seg), self.rank, rcounts[s])],
                        [(s, self.rank)],
                    ))
                segments[s] = seg
        rdispls_param = params.get("recv_displs")
        rdispls = list(rdispls_param.values) if rdispls_param else exclusive_prefix_sum(rcounts)
        payload_out = self._place_segments(
            segments, rcounts, rdispls, use_codec, params.get("recv_buf")
        )
        return self._emit(payload_out, params["out"], {
            "recv_counts": rcounts,
            "recv_displs": rdispls,
            "send_displs": sdispls,
        })

    def reduce(self, *args, op, root=0, codec=None):
        """Elementwise fold over ranks 0..p-1; the root gets the result.

        Binomial tree with interval operand order: the left operand always
        covers lower ranks, so non-commutative operations see a fixed,
        deterministic order for a given p.
        """
        params = collect_params("reduce", args, ("send_buf",), ())
        self._check_root(root)
        red = _as_reduce_op(op)
        values, use_codec = resolve_send(params["send_buf"].data, codec, "reduce")
        if self.assert_level is AssertLevel.heavy:
            sizes = self._allgather_i64([len(values)])
            if len(set(sizes)) > 1:
                raise AssertionViolation(ValidationReport(
                    False, ["reduce contributions differ in length: %r" % sizes]
                ))
        acc = list(values)
        p = self.size
        step = 1
        while step < p:
            if self.rank & step:
                self._internal_send(self.rank - step, itags.REDUCE, use_codec.encode(acc))
                acc = None
                break
            src = self.rank + step
            if src < p:
                _, raw = self._internal_recv(src, itags.REDUCE)
                rv = use_codec.decode(raw)
                if len(rv) != len(acc):
                    raise UsageError(
                        "reduce contributions have unequal lengths (%d vs %d)"
                        % (len(acc), len(rv))
                    )
                acc = [red.fn(a, b) for a, b in zip(acc, rv)]
            step <<= 1
        if root == 0:
            return acc if self.rank == 0 else None
        if self.rank == 0:
            self._internal_send(root, itags.REDUCE, use_codec.encode(acc))
            return None
        if self.rank == root:
            _, raw = self._internal_recv(0, itags.REDUCE)
            return use_codec.decode(raw)
        return None

    def allreduce(self, *args, op, codec=None):
        """Reduce to rank 0 followed by a broadcast; 2(p-1) envelopes."""
        result = self.reduce(*args, op=op, root=0, codec=codec)
        use_codec = codec
        for a in args:
            if getattr(a, "kind", None) == "send_buf" and isinstance(
                a.data, SerializedValue
            ):
                use_codec = SerialCodec(a.data.format)
        payload = use_codec.encode(result) if self.rank == 0 else None
        return use_codec.decode(self._bcast_bytes(payload, 0))


def _split_by_counts(values, counts):
    segments, off = [], 0
    for c in counts:
        segments.append(values[off : off + c])
        off += c
    return segments


def _cap_light(level):
    return AssertLevel.light if level is AssertLevel.heavy else level
