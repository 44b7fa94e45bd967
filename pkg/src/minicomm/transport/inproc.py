"""In-process transport: one mailbox per rank, senders enqueue directly.

Acknowledged sends complete when the destination's receive consumes the
envelope; the completion also pokes the sender's mailbox so pollers wake up.
"""

from .base import Endpoint, Group


class InprocEndpoint(Endpoint):
    def __init__(self, rank, size, group):
        super().__init__(rank, size)
        self._group = group

    def _transmit(self, env):
        self._group._endpoints[env.dst].mailbox.deliver(env)

    def _transmit_acked(self, env, handle):
        sender_box = self.mailbox

        def on_consume():
            handle._complete()
            sender_box.poke()

        env._on_consume = on_consume
        self._group._endpoints[env.dst].mailbox.deliver(env)


class InprocGroup(Group):
    def __init__(self, size):
        endpoints = []
        super().__init__(endpoints)
        for r in range(size):
            endpoints.append(InprocEndpoint(r, size, self))
