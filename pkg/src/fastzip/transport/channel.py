"""Duplex message channels: an in-memory pair and a TCP stream adapter."""

import queue
import socket
import time

from ..errors import FrameError
from .wire import encode_frame, parse_header, decode_body


class MemoryChannel:
    """One end of an ordered, reliable in-memory pipe.

    ``drop`` is an optional predicate; messages for which it returns true are
    silently discarded on send (used to simulate lossy or hostile links).
    """

    def __init__(self, inbox, outbox, drop=None):
        self._inbox = inbox
        self._outbox = outbox
        self.drop = drop
        self.sent = []

    def send(self, msg):
        self.sent.append(msg)
        if self.drop is not None and self.drop(msg):
            return
        # round-trip through the codec so tests exercise the real bytes
        self._outbox.put(encode_frame(msg))

    def recv(self, timeout=None):
        try:
            frame = self._inbox.get(timeout=timeout) if timeout != 0 else self._inbox.get_nowait()
        except queue.Empty:
            return None
        return decode_body(frame[4:])

    def pending(self):
        return self._inbox.qsize()


def memory_pair(drop_a=None, drop_b=None):
    """Two connected channel ends ``(a, b)``."""
    ab, ba = queue.Queue(), queue.Queue()
    return MemoryChannel(ba, ab, drop_a), MemoryChannel(ab, ba, drop_b)


class StreamChannel:
    """Framed messages over a connected stream socket."""

    def __init__(self, sock):
        self.sock = sock
        self._buf = b""
        self.closed = False

    def send(self, msg):
        self.sock.sendall(encode_frame(msg))

    def _fill(self, need, deadline):
        while len(self._buf) < need:
            remaining = None if deadline is None else deadline - time.monotonic()
            if remaining is not None and remaining <= 0:
                return False
            self.sock.settimeout(remaining)
            try:
                chunk = self.sock.recv(65536)
            except socket.timeout:
                return False
            if not chunk:
                self.closed = True
                return False
            self._buf += chunk
        return True

    def recv(self, timeout=None):
        """Next message, or ``None`` on timeout or end of stream."""
        if self.closed:
            if timeout:
                time.sleep(timeout)
            return None
        deadline = None if timeout is None else time.monotonic() + timeout
        if not self._fill(4, deadline):
            return None
        length = parse_header(self._buf)
        if not self._fill(4 + length, deadline):
            return None
        body, self._buf = self._buf[4:4 + length], self._buf[4 + length:]
        return decode_body(body)

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


def parse_address(text):
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def listen(address, timeout=None):
    """Accept one connection on ``host:port`` and wrap it."""
    host, port = parse_address(address) if isinstance(address, str) else address
    srv = socket.create_server((host, port), reuse_port=False)
    srv.settimeout(timeout)
    try:
        conn, _ = srv.accept()
    finally:
        srv.close()
    conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return StreamChannel(conn)


def connect(address, timeout=10.0, retry_interval=0.05):
    """Connect to ``host:port``, retrying until ``timeout`` while the peer starts up."""
    host, port = parse_address(address) if isinstance(address, str) else address
    deadline = time.monotonic() + timeout
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
            break
        except OSError:
            if time.monotonic() >= deadline:
                raise
            time.sleep(retry_interval)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return StreamChannel(sock)


__all__ = ["MemoryChannel", "StreamChannel", "memory_pair", "listen", "connect",
           "parse_address", "FrameError"]
