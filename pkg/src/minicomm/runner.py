"""Drive a worker callable on every rank of a freshly spawned group.

The harness runs one thread per rank over an in-process or TCP transport,
propagates worker failures, and tears the group down so blocked receivers
never hang a test run.
"""

import threading
import time

from .communicator import Communicator
from .errors import GroupRunError, GroupShutDown
from .transport.base import spawn_group


def run_group(p, worker, transport="inproc", assert_level=None, timeout=60.0,
              drop_policy="complete", **config):
    """Run ``worker(comm)`` on ranks 0..p-1; return the per-rank results.

    Any worker exception shuts the group down (unblocking the others) and is
    re-raised wrapped in :class:`GroupRunError`.  ``timeout`` bounds the whole
    run as a deadlock guard.
    """
    group = spawn_group(p, transport, **config)
    results = [None] * p
    failures = {}

    def entry(r):
        try:
            comm = Communicator(
                group.endpoint(r), assert_level=assert_level, drop_policy=drop_policy
            )
            results[r] = worker(comm)
        except BaseException as exc:  # noqa: BLE001 - reported to the caller
            failures[r] = exc
            group.shutdown()

    threads = [
        threading.Thread(target=entry, args=(r,), name="rank-%d" % r, daemon=True)
        for r in range(p)
    ]
    try:
        for t in threads:
            t.start()
        deadline = time.monotonic() + timeout
        for r, t in enumerate(threads):
            t.join(max(0.0, deadline - time.monotonic()))
            if t.is_alive():
                failures.setdefault(r, TimeoutError("rank %d still running" % r))
        if any(isinstance(e, TimeoutError) for e in failures.values()):
            group.shutdown()
            for t in threads:
                t.join(1.0)
    finally:
        group.shutdown()
    if failures:
        primary = {
            r: e for r, e in failures.items() if not isinstance(e, GroupShutDown)
        }
        raise GroupRunError(primary or failures)
    return results
