"""A rank's handle to its group: identity, splitting, barriers, typed p2p.

Wire tags are partitioned: bits 17+ carry the context id that isolates the
collective traffic of nested communicators, bit 16 separates internal
protocol traffic from user messages, and the low 16 bits are user tags.
"""

import struct

from . import _itags as itags
from .codecs import i64
from .collectives import CollectiveOps, resolve_send
from .errors import AssertionViolation, UsageError
from .nonblocking import NonBlockingOps, Request
from .params import AssertLevel, ValidationReport
from .serialize import DeserializeAdapter, SerialCodec
from .transport.base import ANY

USER_TAG_MAX = 0xFFFF
_CTX_SLOTS = 32767  # split contexts live in 1..32767; the root group is 0


def _derive_context(parent_ctx, split_seq, color_idx, ancestry):
    """Deterministic fresh context id, distinct from every ancestor's.

    All members of the new group share the parent's ancestry, so they bump
    identically and agree on the result without extra communication.
    """
    h = 2166136261
    for b in struct.pack("<qqq", parent_ctx, split_seq, color_idx):
        h = ((h ^ b) * 16777619) & 0xFFFFFFFF
    ctx = 1 + (h % _CTX_SLOTS)
    while ctx in ancestry:
        ctx = 1 + (ctx % _CTX_SLOTS)
    return ctx


class _IbarrierRequest(Request):
    """Dissemination barrier driven by test/wait; completes only after
    every member has entered."""

    def __init__(self, comm):
        super().__init__()
        self._comm = comm
        self._step = 1
        self._round = 0
        if comm.size > 1:
            comm._internal_send((comm.rank + 1) % comm.size, itags.BARRIER_BASE, b"")

    def _poll(self, block):
        comm = self._comm
        p = comm.size
        while self._step < p:
            src = (comm.rank - self._step) % p
            tag = itags.BARRIER_BASE + self._round
            if block:
                comm._internal_recv(src, tag)
                block = False  # at most one blocking step per poll
            elif comm._internal_try_recv(src, tag) is None:
                return False
            self._step <<= 1
            self._round += 1
            if self._step < p:
                comm._internal_send(
                    (comm.rank + self._step) % p, itags.BARRIER_BASE + self._round, b""
                )
        return True


class Communicator(CollectiveOps, NonBlockingOps):
    """One rank's view of a group; owns a transport endpoint exclusively."""

    def __init__(self, endpoint, group_ranks=None, context_id=0, assert_level=None,
                 ancestry=None, drop_policy="complete"):
        self.endpoint = endpoint
        if group_ranks is None:
            group_ranks = range(endpoint.size)
        self.group_ranks = list(group_ranks)
        self._local_of = {g: l for l, g in enumerate(self.group_ranks)}
        if endpoint.rank not in self._local_of:
            raise UsageError("endpoint rank %d is not a member" % endpoint.rank)
        self.rank = self._local_of[endpoint.rank]
        self.size = len(self.group_ranks)
        self.context_id = context_id
        self.assert_level = (
            assert_level if assert_level is not None else AssertLevel.from_env()
        )
        self._ancestry = tuple(ancestry) if ancestry is not None else (context_id,)
        self._split_seq = 0
        self.drop_policy = drop_policy

    def __repr__(self):
        return "<Communicator rank %d/%d ctx %d>" % (self.rank, self.size, self.context_id)

    def rank_and_size(self):
        return self.rank, self.size

    # -- tag plumbing -------------------------------------------------------

    def _wire(self, tag, internal=False):
        return (self.context_id << 17) | ((1 << 16) if internal else 0) | tag

    def _tag_filter(self, tag, internal=False):
        if tag is ANY:
            want = (self.context_id << 17) | ((1 << 16) if internal else 0)
            return lambda t: (t & ~USER_TAG_MAX) == want
        return self._wire(tag, internal)

    def _check_tag(self, tag):
        if not isinstance(tag, int) or not 0 <= tag <= USER_TAG_MAX:
            raise UsageError("user tags must be integers in 0..%d" % USER_TAG_MAX)

    # -- protocol surface (collectives and plugins) ---------------------------

    def _internal_send(self, dst, itag, payload):
        self.endpoint.send(self.group_ranks[dst], self._wire(itag, True), payload)

    def _internal_ssend(self, dst, itag, payload):
        return self.endpoint.ssend_async(
            self.group_ranks[dst], self._wire(itag, True), payload
        )

    def _internal_recv(self, src, itag):
        g = ANY if src is ANY else self.group_ranks[src]
        env = self.endpoint.recv(g, self._tag_filter(itag, True))
        return self._local_of[env.src], env.payload

    def _internal_try_recv(self, src, itag):
        g = ANY if src is ANY else self.group_ranks[src]
        env = self.endpoint.try_recv(g, self._tag_filter(itag, True))
        if env is None:
            return None
        return self._local_of[env.src], env.payload

    def _internal_probe(self, src, itag):
        g = ANY if src is ANY else self.group_ranks[src]
        m = self.endpoint.probe(g, self._tag_filter(itag, True))
        if m is None:
            return None
        gsrc, _, nbytes = m
        return self._local_of[gsrc], nbytes

    def wait_for_activity(self, timeout=0.05):
        self.endpoint.wait_for_activity(timeout)

    # -- typed point-to-point -------------------------------------------------

    def _user_send(self, dst, values, codec, tag):
        self._check_tag(tag)
        if not 0 <= dst < self.size:
            raise UsageError("destination %r out of range" % (dst,))
        vals, use_codec = resolve_send(values, codec, "send")
        self.endpoint.send(
            self.group_ranks[dst], self._wire(tag, False), use_codec.encode(vals)
        )

    def send(self, dst, values, codec=None, tag=0):
        """Typed buffered send; the receive side must use a matching codec."""
        self._user_send(dst, values, codec, tag)

    def _take_user(self, src, tag, block):
        if tag is not ANY:
            self._check_tag(tag)
        g = ANY if src is ANY else self.group_ranks[src]
        filt = self._tag_filter(tag, False)
        if block:
            return self.endpoint.recv(g, filt)
        return self.endpoint.try_recv(g, filt)

    def _decode_user(self, env, codec):
        if isinstance(codec, DeserializeAdapter):
            decoded = SerialCodec(codec.format).decode(env.payload)
            if len(decoded) != 1:
                raise UsageError("expected exactly one serialized value")
            return codec.check(decoded[0])
        if codec is None:
            raise UsageError("recv: a codec (or as_deserializable) is required")
        return codec.decode(env.payload)

    def recv(self, src=ANY, tag=ANY, codec=None):
        """Blocking typed receive; returns the decoded element sequence."""
        env = self._take_user(src, tag, block=True)
        return self._decode_user(env, codec)

    def probe(self, src=ANY, tag=ANY):
        """(source, user tag, payload bytes) of the first matching pending
        user message, or None."""
        if tag is not ANY:
            self._check_tag(tag)
        g = ANY if src is ANY else self.group_ranks[src]
        m = self.endpoint.probe(g, self._tag_filter(tag, False))
        if m is None:
            return None
        gsrc, wtag, nbytes = m
        return self._local_of[gsrc], wtag & USER_TAG_MAX, nbytes

    # -- synchronization --------------------------------------------------------

    def barrier(self):
        """Dissemination barrier: ceil(log2 p) rounds, one envelope each."""
        p = self.size
        step, k = 1, 0
        while step < p:
            self._internal_send((self.rank + step) % p, itags.BARRIER_BASE + k, b"")
            self._internal_recv((self.rank - step) % p, itags.BARRIER_BASE + k)
            step <<= 1
            k += 1

    def ibarrier(self):
        """Non-blocking barrier; progress happens inside test/wait only."""
        return _IbarrierRequest(self)

    # -- splitting ---------------------------------------------------------------

    def split(self, color, key=None):
        """Partition the group by color; ranks follow ascending (key, rank).

        Collective over the whole group.  The child's context id is derived
        deterministically, so members agree without extra traffic.
        """
        if key is None:
            key = self.rank
        if not isinstance(color, int) or not isinstance(key, int):
            raise UsageError("split color and key must be integers")
        flat = self._allgather_i64([color, key])
        colors = flat[0::2]
        keys = flat[1::2]
        members = sorted(
            (r for r in range(self.size) if colors[r] == color),
            key=lambda r: (keys[r], r),
        )
        color_idx = sorted(set(colors)).index(color)
        ctx = _derive_context(self.context_id, self._split_seq, color_idx, self._ancestry)
        self._split_seq += 1
        child = Communicator(
            self.endpoint,
            [self.group_ranks[r] for r in members],
            ctx,
            self.assert_level,
            self._ancestry + (ctx,),
            self.drop_policy,
        )
        if self.assert_level is AssertLevel.heavy:
            agreed = child._allgather_i64([ctx, child.size])
            if any(agreed[2 * i] != ctx or agreed[2 * i + 1] != child.size
                   for i in range(child.size)):
                raise AssertionViolation(ValidationReport(
                    False, ["split members disagree on the sub-group"]
                ))
        return child
