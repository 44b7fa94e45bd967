"""TCP transport: length-prefixed frames over a full socket mesh.

Wire format, little-endian::

    [u32 frame_len][u32 src][u32 dst][u32 tag][u8 flags][payload]

``frame_len`` counts everything after itself (13 + payload bytes).  Flag
bit 0 marks an envelope that requires an acknowledgement; bit 1 marks the
acknowledgement itself (empty payload, tag echoing the sender-chosen
sequence number).  Acks are transport-internal frames: they complete
acknowledged-send handles and never appear in stats or mailboxes.

Endpoints can live in one process (``TcpGroup``, handy for tests) or in
separate OS processes rendezvousing on a port range
(:func:`establish_endpoint`).
"""

import socket
import struct
import threading
import time

from ..errors import TransportError
from .base import Endpoint, Group

FLAG_REQUIRES_ACK = 0x01
FLAG_IS_ACK = 0x02

_HEADER = struct.Struct("<IIIB")  # src, dst, tag, flags (after the length word)


def _recv_exact(sock, n):
    chunks = []
    while n:
        chunk = sock.recv(n)
        if not chunk:
            raise ConnectionError("peer closed")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def _pack_frame(src, dst, tag, flags, payload):
    return (
        struct.pack("<I", _HEADER.size + len(payload))
        + _HEADER.pack(src, dst, tag, flags)
        + payload
    )


class TcpEndpoint(Endpoint):
    def __init__(self, rank, size, listener=None):
        super().__init__(rank, size)
        self._listener = listener
        self._peers = {}  # rank -> socket
        self._write_locks = {}
        self._readers = []
        self._seq = 0
        self._pending_acks = {}
        self._ack_lock = threading.Lock()

    # -- mesh wiring -------------------------------------------------------

    def _register_peer(self, peer_rank, sock):
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._peers[peer_rank] = sock
        self._write_locks[peer_rank] = threading.Lock()
        t = threading.Thread(
            target=self._read_loop,
            args=(peer_rank, sock),
            name="tcp-read-%d-from-%d" % (self.rank, peer_rank),
            daemon=True,
        )
        self._readers.append(t)
        t.start()

    def _read_loop(self, peer_rank, sock):
        try:
            while True:
                (frame_len,) = struct.unpack("<I", _recv_exact(sock, 4))
                body = _recv_exact(sock, frame_len)
                src, dst, tag, flags = _HEADER.unpack_from(body)
                payload = body[_HEADER.size :]
                if flags & FLAG_IS_ACK:
                    with self._ack_lock:
                        handle = self._pending_acks.pop(tag, None)
                    if handle is not None:
                        handle._complete()
                        self.mailbox.poke()
                    continue
                env = _incoming_envelope(self, src, dst, tag, flags, payload)
                self.mailbox.deliver(env)
        except (ConnectionError, OSError):
            if not self._closed:
                # a peer vanished mid-run: unblock any waiting receive
                self.mailbox.close()

    # -- frame output ------------------------------------------------------

    def _write_frame(self, dst, frame):
        sock = self._peers[dst]
        with self._write_locks[dst]:
            sock.sendall(frame)

    def _send_ack(self, dst, seq):
        if dst == self.rank:
            return
        try:
            self._write_frame(dst, _pack_frame(self.rank, dst, seq, FLAG_IS_ACK, b""))
        except OSError:
            pass  # sender is gone; its handle no longer matters

    def _transmit(self, env):
        if env.dst == self.rank:
            self.mailbox.deliver(env)
            return
        self._write_frame(env.dst, _pack_frame(env.src, env.dst, env.tag, 0, env.payload))

    def _transmit_acked(self, env, handle):
        if env.dst == self.rank:
            sender_box = self.mailbox

            def on_consume():
                handle._complete()
                sender_box.poke()

            env._on_consume = on_consume
            self.mailbox.deliver(env)
            return
        with self._ack_lock:
            self._seq = (self._seq + 1) & 0xFFFFFFFF
            seq = self._seq
            self._pending_acks[seq] = handle
        # requires-ack frames carry the sequence number as a 4-byte payload
        # prefix; the destination echoes it in the ack frame's tag field
        self._write_frame(
            env.dst,
            _pack_frame(
                env.src,
                env.dst,
                env.tag,
                FLAG_REQUIRES_ACK,
                struct.pack("<I", seq) + env.payload,
            ),
        )

    def close(self):
        super().close()
        for sock in self._peers.values():
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()
        if self._listener is not None:
            self._listener.close()
        for t in self._readers:
            t.join(timeout=1.0)


def _incoming_envelope(endpoint, src, dst, tag, flags, payload):
    from .base import Envelope

    if dst != endpoint.rank:
        raise TransportError(
            "misrouted frame: dst %d arrived at rank %d" % (dst, endpoint.rank)
        )
    if flags & FLAG_REQUIRES_ACK:
        (seq,) = struct.unpack("<I", payload[:4])
        env = Envelope(src, dst, tag, payload[4:])
        env._on_consume = lambda: endpoint._send_ack(src, seq)
        return env
    return Envelope(src, dst, tag, payload)


def _bind_listener(host, port):
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((host, port))
    except OSError as exc:
        sock.close()
        raise TransportError("cannot bind %s:%d: %s" % (host, port, exc)) from exc
    sock.listen(64)
    return sock


class TcpGroup(Group):
    """All endpoints in one process, connected over localhost sockets.

    With ``port_base=None`` every listener binds an ephemeral port, so
    concurrent groups never collide.
    """

    def __init__(self, size, host="127.0.0.1", port_base=None):
        listeners, ports = [], []
        for r in range(size):
            want = 0 if port_base is None else port_base + r
            sock = _bind_listener(host, want)
            listeners.append(sock)
            ports.append(sock.getsockname()[1])
        endpoints = [TcpEndpoint(r, size, listeners[r]) for r in range(size)]
        super().__init__(endpoints)
        # lower rank accepts, higher rank connects
        for j in range(size):
            for i in range(j):
                client = socket.create_connection((host, ports[i]), timeout=10.0)
                client.sendall(struct.pack("<I", j))
                endpoints[j]._register_peer(i, client)
        for i in range(size):
            for _ in range(size - 1 - i):
                conn, _ = listeners[i].accept()
                (j,) = struct.unpack("<I", _recv_exact(conn, 4))
                endpoints[i]._register_peer(j, conn)


def establish_endpoint(rank, size, port_base, host="127.0.0.1", timeout=30.0):
    """Build one endpoint of a cross-process mesh.

    Every participant binds ``port_base + rank``, accepts connections from
    higher ranks and dials lower ranks, retrying until the peer's listener
    is up.
    """
    listener = _bind_listener(host, port_base + rank)
    ep = TcpEndpoint(rank, size, listener)
    expected = size - 1 - rank
    accept_err = []

    def accept_all():
        try:
            for _ in range(expected):
                conn, _ = listener.accept()
                (j,) = struct.unpack("<I", _recv_exact(conn, 4))
                ep._register_peer(j, conn)
        except OSError as exc:
            accept_err.append(exc)

    acceptor = threading.Thread(target=accept_all, daemon=True)
    acceptor.start()
    deadline = time.monotonic() + timeout
    for k in range(rank):
        while True:
            try:
                client = socket.create_connection((host, port_base + k), timeout=2.0)
                break
            except OSError:
                if time.monotonic() > deadline:
                    raise TransportError(
                        "rank %d could not connect to rank %d" % (rank, k)
                    )
                time.sleep(0.02)
        client.sendall(struct.pack("<I", rank))
        ep._register_peer(k, client)
    acceptor.join(timeout=max(0.0, deadline - time.monotonic()))
    if acceptor.is_alive() or accept_err:
        ep.close()
        raise TransportError("rank %d mesh setup failed" % rank)
    return ep
