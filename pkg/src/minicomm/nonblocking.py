"""Completion-gated non-blocking operations.

A :class:`NonBlockingResult` pairs a request with buffers taken into
exclusive possession at initiation.  There is deliberately no accessor for
the data while the request is pending; values come back exactly once,
through ``wait()`` or a successful ``test()``.  Progress happens only inside
``test``/``wait``/pool calls — no background progress is assumed.
"""

import warnings

from .errors import UsageError
from .params import AssertLevel
from .serialize import SerializedValue
from .transport.base import ANY


class Request:
    """Opaque progress handle; transitions pending -> complete exactly once."""

    def __init__(self):
        self._done = False

    @property
    def state(self):
        return "complete" if self._done else "pending"

    def test(self):
        """Drive one progress step; never blocks.  True when complete."""
        if not self._done:
            self._done = bool(self._poll(block=False))
        return self._done

    def wait(self):
        """Drive progress, blocking as needed, until complete."""
        while not self._done:
            self._done = bool(self._poll(block=True))

    def _poll(self, block):
        raise NotImplementedError


class CompletedRequest(Request):
    """Request that was already satisfied at initiation (buffered sends)."""

    def __init__(self):
        super().__init__()
        self._done = True


class RecvRequest(Request):
    """Pending typed receive; completes when a matching envelope is consumed."""

    def __init__(self, comm, src, tag, codec, recv_count):
        super().__init__()
        self._comm = comm
        self._src = src
        self._tag = tag
        self._codec = codec
        self._recv_count = recv_count
        self.values = None

    def _poll(self, block):
        env = self._comm._take_user(self._src, self._tag, block=block)
        if env is None:
            return False
        values = self._comm._decode_user(env, self._codec)
        if (
            self._recv_count is not None
            and self._comm.assert_level is not AssertLevel.none
            and len(values) != self._recv_count
        ):
            raise UsageError(
                "irecv expected %d elements but the sender sent %d"
                % (self._recv_count, len(values))
            )
        self.values = values
        return True


class NonBlockingResult:
    """Request plus buffers held in exclusive possession until completion."""

    def __init__(self, request, produce, drop_policy="complete"):
        self._request = request
        self._produce = produce
        self._drop_policy = drop_policy
        self._consumed = False

    @property
    def request(self):
        return self._request

    def test(self):
        """One progress step; the values exactly once when complete, else None."""
        if self._consumed:
            raise UsageError("non-blocking result already consumed")
        if self._request.test():
            self._consumed = True
            return self._produce()
        return None

    def wait(self):
        """Block until completion and hand the held values back to the caller."""
        if self._consumed:
            raise UsageError("non-blocking result already consumed")
        self._request.wait()
        self._consumed = True
        return self._produce()

    def __del__(self):
        if getattr(self, "_consumed", True):
            return
        if self._drop_policy == "abort":
            raise UsageError("non-blocking result dropped while pending")
        try:
            self._request.test()
        except Exception:
            pass
        if not self._request._done:
            warnings.warn(
                "a pending non-blocking result was dropped without completion",
                ResourceWarning,
                stacklevel=1,
            )
        self._consumed = True


class RequestPool:
    """Collects submitted results and completes them together."""

    def __init__(self):
        self._submitted = []
        self._values = None

    def submit(self, result):
        if self._values is not None:
            raise UsageError("pool already completed; create a new one")
        self._submitted.append(result)
        return len(self._submitted) - 1

    def __len__(self):
        return len(self._submitted)

    def wait_all(self):
        """Complete every submitted request; values in submission order.

        Calling it again is a no-op returning the same values.
        """
        if self._values is None:
            self._values = [r.wait() for r in self._submitted]
        return self._values


class NonBlockingOps:
    """Mixin adding isend/irecv to the communicator."""

    def isend(self, dst, values, codec=None, tag=0):
        """Initiate a send, taking possession of ``values`` until completion.

        Buffered semantics complete the transfer at initiation; ``wait()``
        returns the original buffer object untouched.
        """
        original = values
        if isinstance(values, SerializedValue):
            original = values.wrapped
        self._user_send(dst, values, codec, tag)
        return NonBlockingResult(
            CompletedRequest(), lambda: original, self.drop_policy
        )

    def irecv(self, codec=None, src=ANY, tag=ANY, recv_count=None):
        """Post a receive; the result yields the element sequence on completion."""
        request = RecvRequest(self, src, tag, codec, recv_count)
        return NonBlockingResult(request, lambda: request.values, self.drop_policy)
