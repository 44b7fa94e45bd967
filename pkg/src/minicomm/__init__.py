"""Message-passing collectives with parameter inference, explicit memory
policies, completion-gated non-blocking results, and pluggable exchange
algorithms over in-process and TCP transports."""

from . import codecs
from .codecs import boolean, f32, f64, i32, i64, raw, record, u8, u32, u64
from .collectives import (
    ReduceOp,
    op_logical_and,
    op_logical_or,
    op_max,
    op_min,
    op_sum,
    with_flattened,
)
from .communicator import Communicator
from .errors import (
    AssertionViolation,
    CapacityError,
    DecodeError,
    GroupRunError,
    GroupShutDown,
    MiniCommError,
    MissingParametersError,
    SerializationError,
    TransportError,
    UsageError,
)
from .nonblocking import NonBlockingResult, Request, RequestPool
from .params import (
    AssertLevel,
    ResizePolicy,
    ResultBundle,
    apply_resize,
    exclusive_prefix_sum,
    grow_only,
    no_resize,
    recv_buf,
    recv_counts,
    recv_counts_out,
    recv_displs,
    recv_displs_out,
    resize_to_fit,
    send_buf,
    send_counts,
    send_counts_out,
    send_displs,
    send_displs_out,
    send_recv_buf,
    validate_counts,
)
from .runner import run_group
from .serialize import (
    SerializedValue,
    as_deserializable,
    as_serialized,
    serial_binary,
    serial_json,
)
from .transport.base import ANY, Envelope, TransportStats, spawn_group

__version__ = "0.1.0"
