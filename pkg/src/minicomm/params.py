"""Named-parameter descriptors, resize policies, result bundles, assertions.

Collective entry points accept descriptor values in any order.  Factory
functions (``send_buf``, ``recv_counts_out``, ...) build the descriptors;
presence is checked before execution and every missing required parameter
is reported in a single diagnostic.
"""

import os
from dataclasses import dataclass, field
from enum import Enum

from .errors import AssertionViolation, CapacityError, MissingParametersError, UsageError


class ResizePolicy(Enum):
    """How a caller-supplied container reacts to the required result size."""

    no_resize = "no_resize"
    grow_only = "grow_only"
    resize_to_fit = "resize_to_fit"


no_resize = ResizePolicy.no_resize
grow_only = ResizePolicy.grow_only
resize_to_fit = ResizePolicy.resize_to_fit


class AssertLevel(Enum):
    """Runtime assertion levels; heavy includes every light check."""

    none = 0
    light = 1
    heavy = 2

    @classmethod
    def from_env(cls, default=None):
        name = os.environ.get("ASSERT_LEVEL", "").strip().lower()
        if name in cls.__members__:
            return cls[name]
        return default if default is not None else cls.light


def apply_resize(container, policy, required, param="recv_buf", filler=None):
    """Grow or shrink ``container`` (a list) to hold ``required`` elements.

    * ``resize_to_fit``: length becomes exactly ``required``.
    * ``grow_only``: grown when too short, otherwise untouched.
    * ``no_resize``: untouched; too-short containers raise
      :class:`CapacityError` naming the parameter.
    """
    if required < 0:
        raise UsageError("required length must be >= 0")
    have = len(container)
    if policy is ResizePolicy.no_resize:
        if have < required:
            raise CapacityError(param, have, required)
    elif policy is ResizePolicy.grow_only:
        if have < required:
            container.extend([filler] * (required - have))
    elif policy is ResizePolicy.resize_to_fit:
        if have < required:
            container.extend([filler] * (required - have))
        elif have > required:
            del container[required:]
    else:
        raise UsageError("unknown resize policy %r" % (policy,))
    return container


# ---------------------------------------------------------------------------
# parameter descriptors


@dataclass
class SendBuf:
    kind = "send_buf"
    data: object


@dataclass
class SendRecvBuf:
    kind = "send_recv_buf"
    data: object


@dataclass
class RecvBuf:
    kind = "recv_buf"
    container: list
    policy: ResizePolicy = ResizePolicy.no_resize


@dataclass
class InParam:
    kind: str
    values: list


@dataclass
class OutRequest:
    """Request that the collective return a parameter it computed.

    With a caller-supplied target container the default policy is
    ``no_resize`` (like any buffer parameter); without one a fresh,
    exactly-sized list is returned.
    """

    which: str
    target: list = None
    policy: ResizePolicy = None

    def effective_policy(self):
        if self.policy is not None:
            return self.policy
        return ResizePolicy.no_resize if self.target is not None else ResizePolicy.resize_to_fit


OUT_KINDS = ("recv_counts", "recv_displs", "send_displs", "send_counts")


def send_buf(data):
    return SendBuf(data)


def send_recv_buf(data):
    return SendRecvBuf(data)


def recv_buf(container, policy=ResizePolicy.no_resize):
    return RecvBuf(container, policy)


def send_counts(values):
    return InParam("send_counts", list(values))


def recv_counts(values):
    return InParam("recv_counts", list(values))


def send_displs(values):
    return InParam("send_displs", list(values))


def recv_displs(values):
    return InParam("recv_displs", list(values))


def recv_counts_out(target=None, policy=None):
    return OutRequest("recv_counts", target, policy)


def recv_displs_out(target=None, policy=None):
    return OutRequest("recv_displs", target, policy)


def send_displs_out(target=None, policy=None):
    return OutRequest("send_displs", target, policy)


def send_counts_out(target=None, policy=None):
    return OutRequest("send_counts", target, policy)


def collect_params(op, args, required, optional):
    """Sort descriptor values into a dict keyed by parameter kind.

    ``required``/``optional`` are iterables of kind names; out-requests are
    stored under ``"out"`` in request order.  Raises one aggregated
    :class:`MissingParametersError` listing all absent required kinds.
    """
    allowed = set(required) | set(optional)
    seen = {}
    outs = []
    for a in args:
        if isinstance(a, OutRequest):
            if a.which not in allowed and "out:" + a.which not in allowed:
                raise UsageError(
                    "%s does not compute %r; cannot request it" % (op, a.which)
                )
            if any(o.which == a.which for o in outs):
                raise UsageError("duplicate out-request %r in %s" % (a.which, op))
            outs.append(a)
            continue
        kind = getattr(a, "kind", None)
        if kind is None:
            raise UsageError("%s got a non-parameter argument %r" % (op, a))
        if kind not in allowed:
            raise UsageError("%s does not accept parameter %r" % (op, kind))
        if kind in seen:
            raise UsageError("duplicate parameter %r in %s" % (kind, op))
        seen[kind] = a
    missing = [k for k in required if k not in seen]
    if missing:
        raise MissingParametersError(op, missing)
    seen["out"] = outs
    return seen


class ResultBundle:
    """Receive payload plus the out-parameters requested by the caller.

    The payload is always present; extras appear in request order.  Tuple
    unpacking (``payload, counts = bundle``) extracts everything in order;
    :meth:`extract` pulls a single extra and may be called once per kind.
    """

    def __init__(self, payload, extras=()):
        self._payload = payload
        self._extras = list(extras)  # (which, value)
        self._taken = set()

    @property
    def payload(self):
        return self._payload

    def extract(self, which):
        for name, value in self._extras:
            if name == which:
                if which in self._taken:
                    raise UsageError("out-parameter %r already extracted" % which)
                self._taken.add(which)
                return value
        raise UsageError("out-parameter %r was not requested" % which)

    def extract_recv_counts(self):
        return self.extract("recv_counts")

    def extract_recv_displs(self):
        return self.extract("recv_displs")

    def extract_send_displs(self):
        return self.extract("send_displs")

    def __iter__(self):
        yield self._payload
        for name, value in self._extras:
            self._taken.add(name)
            yield value

    def __repr__(self):
        extras = ", ".join(name for name, _ in self._extras)
        return "<ResultBundle payload[%d]%s>" % (
            len(self._payload) if hasattr(self._payload, "__len__") else -1,
            " + " + extras if extras else "",
        )


def exclusive_prefix_sum(counts):
    out, acc = [], 0
    for c in counts:
        out.append(acc)
        acc += c
    return out


@dataclass
class ValidationReport:
    """Outcome of a counts check; ``violations`` are human-readable strings."""

    ok: bool
    violations: list = field(default_factory=list)
    mismatched_pairs: list = field(default_factory=list)  # (sender, receiver)

    def __str__(self):
        if self.ok:
            return "counts ok"
        return "; ".join(self.violations)

    def raise_if_failed(self):
        if not self.ok:
            raise AssertionViolation(self)


# counts and displacements must fit a signed 64-bit slot on the wire
_COUNT_LIMIT = 2**63 - 1


def validate_counts(comm, counts, level, recv_counts=None, param="send_counts"):
    """Check a per-rank counts vector at the given assertion level.

    Light: local shape and range checks.  Heavy: additionally performs a
    transposition exchange and, when ``recv_counts`` is supplied, verifies
    that every sender's claim matches what this rank was told to receive,
    naming each mismatched (sender, receiver) pair.
    """
    report = ValidationReport(True)
    if level is AssertLevel.none:
        return report
    counts = list(counts)
    if len(counts) != comm.size:
        report.ok = False
        report.violations.append(
            "%s has %d entries for %d ranks" % (param, len(counts), comm.size)
        )
        return report
    total = 0
    for r, c in enumerate(counts):
        if not isinstance(c, int) or c < 0:
            report.ok = False
            report.violations.append("%s[%d] = %r is negative" % (param, r, c))
        else:
            total += c
    if total > _COUNT_LIMIT:
        report.ok = False
        report.violations.append("%s displacements overflow 64-bit range" % param)
    if not report.ok or level is not AssertLevel.heavy:
        return report

    incoming = comm._exchange_counts(counts)  # one alltoall of the counts
    if recv_counts is not None:
        for s, (claimed, told) in enumerate(zip(incoming, recv_counts)):
            if claimed != told:
                report.ok = False
                report.mismatched_pairs.append((s, comm.rank))
                report.violations.append(
                    "rank %d will send %d elements to rank %d, which expects %d"
                    % (s, claimed, comm.rank, told)
                )
    return report
