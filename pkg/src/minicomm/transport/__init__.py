from .base import ANY, Endpoint, Envelope, Group, Mailbox, SendHandle, TransportStats, spawn_group
from .inproc import InprocGroup
from .tcp import TcpGroup, establish_endpoint
