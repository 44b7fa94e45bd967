"""Transport-neutral pieces: envelopes, stats, mailboxes, endpoint contract.

An endpoint belongs to exactly one rank worker.  Mailboxes accept concurrent
enqueues from any thread and are drained only by the owner; matching is
strictly FIFO within the (source, tag) filter.
"""

import threading
from dataclasses import dataclass, field

from ..errors import GroupShutDown, TransportError, UsageError


class _Any:
    def __repr__(self):
        return "ANY"


#: wildcard for source and tag filters
ANY = _Any()


@dataclass
class Envelope:
    """One point-to-point message unit."""

    src: int
    dst: int
    tag: int
    payload: bytes
    _on_consume: object = field(default=None, repr=False, compare=False)


@dataclass
class TransportStats:
    """Per-rank send counters for one measurement window.

    ``messages_sent`` counts every envelope; ``payload_messages`` those with
    a non-empty payload and ``protocol_messages`` the empty coordination
    envelopes.  ``distinct_destinations`` excludes self-sends.
    """

    messages_sent: int = 0
    payload_messages: int = 0
    protocol_messages: int = 0
    bytes_sent: int = 0
    distinct_destinations: int = 0


class SendHandle:
    """Completion handle for an acknowledged send."""

    def __init__(self):
        self._event = threading.Event()

    def _complete(self):
        self._event.set()

    def is_complete(self):
        return self._event.is_set()

    def wait(self, timeout=None):
        return self._event.wait(timeout)


class Mailbox:
    """FIFO store of pending envelopes with filtered probe/take."""

    def __init__(self):
        self._cond = threading.Condition()
        self._items = []
        self._closed = False

    def deliver(self, env):
        with self._cond:
            if self._closed:
                return
            self._items.append(env)
            self._cond.notify_all()

    def poke(self):
        """Wake waiters without delivering (used for ack completions)."""
        with self._cond:
            self._cond.notify_all()

    def close(self):
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    @staticmethod
    def _matches(env, src, tag):
        """Filters are exact values, ANY, or predicates over the wire tag."""
        if src is not ANY and env.src != src:
            return False
        if tag is ANY:
            return True
        if callable(tag):
            return tag(env.tag)
        return env.tag == tag

    def probe(self, src=ANY, tag=ANY):
        """Metadata of the first matching pending envelope, or None."""
        with self._cond:
            for env in self._items:
                if self._matches(env, src, tag):
                    return (env.src, env.tag, len(env.payload))
            return None

    def take(self, src=ANY, tag=ANY, block=True, timeout=None):
        """Remove and return the first matching envelope.

        Non-blocking calls return None when nothing matches; blocking calls
        raise :class:`GroupShutDown` if the mailbox closes while waiting.
        """
        with self._cond:
            while True:
                for i, env in enumerate(self._items):
                    if self._matches(env, src, tag):
                        del self._items[i]
                        return env
                if not block:
                    return None
                if self._closed:
                    raise GroupShutDown("group shut down while receiving")
                if not self._cond.wait(timeout):
                    return None

    def wait_activity(self, timeout):
        """Block until something arrives, the box closes, or it is poked."""
        with self._cond:
            if self._items or self._closed:
                return
            self._cond.wait(timeout)


class Endpoint:
    """Base endpoint: mailbox-backed receive side plus send statistics.

    Subclasses implement :meth:`_transmit` to move an envelope toward its
    destination.
    """

    def __init__(self, rank, size):
        self.rank = rank
        self.size = size
        self.mailbox = Mailbox()
        self._stats_lock = threading.Lock()
        self._stats = TransportStats()
        self._dests = set()
        self._closed = False

    # -- sending ----------------------------------------------------------

    def _check_dst(self, dst):
        if not isinstance(dst, int) or not 0 <= dst < self.size:
            raise UsageError(
                "destination %r out of range for group of size %d" % (dst, self.size)
            )
        if self._closed:
            raise GroupShutDown("endpoint is closed")

    def _record_send(self, dst, payload):
        with self._stats_lock:
            self._stats.messages_sent += 1
            if payload:
                self._stats.payload_messages += 1
            else:
                self._stats.protocol_messages += 1
            self._stats.bytes_sent += len(payload)
            if dst != self.rank:
                self._dests.add(dst)
                self._stats.distinct_destinations = len(self._dests)

    def send(self, dst, tag, payload):
        """Buffered send: returns once the payload is copied out."""
        self._check_dst(dst)
        payload = bytes(payload)
        self._record_send(dst, payload)
        self._transmit(Envelope(self.rank, dst, tag, payload))

    def ssend_async(self, dst, tag, payload):
        """Send whose handle completes only after a matching receive consumed it."""
        self._check_dst(dst)
        payload = bytes(payload)
        handle = SendHandle()
        self._record_send(dst, payload)
        self._transmit_acked(Envelope(self.rank, dst, tag, payload), handle)
        return handle

    def _transmit(self, env):
        raise NotImplementedError

    def _transmit_acked(self, env, handle):
        raise NotImplementedError

    # -- receiving --------------------------------------------------------

    def probe(self, src=ANY, tag=ANY):
        return self.mailbox.probe(src, tag)

    def recv(self, src=ANY, tag=ANY):
        """Blocking receive of the first matching envelope (FIFO per filter)."""
        env = self.mailbox.take(src, tag, block=True)
        if env._on_consume is not None:
            env._on_consume()
        return env

    def try_recv(self, src=ANY, tag=ANY):
        env = self.mailbox.take(src, tag, block=False)
        if env is not None and env._on_consume is not None:
            env._on_consume()
        return env

    def wait_for_activity(self, timeout=0.05):
        self.mailbox.wait_activity(timeout)

    # -- stats ------------------------------------------------------------

    def stats(self):
        with self._stats_lock:
            return TransportStats(
                self._stats.messages_sent,
                self._stats.payload_messages,
                self._stats.protocol_messages,
                self._stats.bytes_sent,
                self._stats.distinct_destinations,
            )

    def reset_stats(self):
        with self._stats_lock:
            self._stats = TransportStats()
            self._dests = set()

    def close(self):
        self._closed = True
        self.mailbox.close()


class Group:
    """Handle over a set of endpoints living in this process."""

    def __init__(self, endpoints):
        self._endpoints = endpoints

    @property
    def size(self):
        return len(self._endpoints)

    def endpoint(self, rank):
        return self._endpoints[rank]

    @property
    def endpoints(self):
        return list(self._endpoints)

    def stats(self):
        return [ep.stats() for ep in self._endpoints]

    def reset_stats(self):
        for ep in self._endpoints:
            ep.reset_stats()

    def shutdown(self):
        for ep in self._endpoints:
            ep.close()


def spawn_group(p, kind="inproc", **config):
    """Create a rank group of size ``p`` on the chosen transport."""
    if p < 1:
        raise UsageError("group size must be >= 1")
    if kind == "inproc":
        from .inproc import InprocGroup

        return InprocGroup(p)
    if kind == "tcp":
        from .tcp import TcpGroup

        return TcpGroup(p, **config)
    raise TransportError("unknown transport kind %r" % kind)
