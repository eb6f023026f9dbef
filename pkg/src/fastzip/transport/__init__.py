"""Wire format, channels and loopback pairing."""

from .channel import MemoryChannel, StreamChannel, connect, listen, memory_pair
from .loopback import LoopbackResult, ManualClock, loopback_pair
from .wire import (
    ABORT_REASONS,
    MAX_FRAME,
    AbortCode,
    Hello,
    Message,
    MsgType,
    combined_nonce,
    decode_frame,
    encode_frame,
    negotiate,
)
