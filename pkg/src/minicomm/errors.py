"""Exception hierarchy shared across the library."""


class MiniCommError(Exception):
    """Base class for all errors raised by this library."""


class TransportError(MiniCommError):
    """Failure at the message-transport layer (bind, connect, broken peer)."""


class GroupShutDown(TransportError):
    """The rank group was shut down while an operation was in flight."""


class UsageError(MiniCommError):
    """The caller violated an API contract."""


class MissingParametersError(UsageError):
    """One aggregated diagnostic naming every missing required parameter."""

    def __init__(self, op, names):
        self.op = op
        self.names = tuple(names)
        super().__init__(
            "%s missing required parameter(s): %s" % (op, ", ".join(self.names))
        )


class CapacityError(UsageError):
    """A buffer under the no-resize policy is too small for the result."""

    def __init__(self, param, have, need):
        self.param = param
        self.have = have
        self.need = need
        super().__init__(
            "parameter %r has length %d but %d elements are required "
            "(no_resize policy)" % (param, have, need)
        )


class DecodeError(MiniCommError):
    """Payload bytes do not match the codec's layout."""


class SerializationError(MiniCommError):
    """A value could not be serialized or deserialized."""


class AssertionViolation(MiniCommError):
    """A runtime assertion (light or heavy level) found an inconsistency."""

    def __init__(self, report):
        self.report = report
        super().__init__(str(report))


class GroupRunError(MiniCommError):
    """One or more rank workers failed; carries per-rank failures."""

    def __init__(self, failures):
        self.failures = failures  # dict rank -> exception
        lines = ", ".join("rank %d: %r" % (r, e) for r, e in sorted(failures.items()))
        super().__init__("worker failure(s): " + lines)
