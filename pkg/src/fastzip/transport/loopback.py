"""Run both roles of a pairing in one process, in memory or over local TCP."""

import socket
import threading
import time
from dataclasses import dataclass

from .channel import StreamChannel, memory_pair


class ManualClock:
    """Monotonic clock that only moves when told to."""

    def __init__(self, start=0.0):
        self.now = start

    def __call__(self):
        return self.now

    def advance(self, dt):
        self.now += max(0.0, dt)


@dataclass
class LoopbackResult:
    initiator: object
    responder: object
    timing: dict

    @property
    def agreed(self):
        a, b = self.initiator, self.responder
        return a.ok and b.ok and a.key == b.key


def _timing(sa, sb, wall):
    t = sa.timings()
    report = {k: t.get(k, 0.0) for k in ("amplification", "commitment", "confirmation")}
    report["total"] = t.get("total", wall)
    report["compute_initiator"] = sa.compute_time
    report["compute_responder"] = sb.compute_time
    report["channel"] = max(0.0, report["total"] - sa.compute_time - sb.compute_time)
    report["wall"] = wall
    return report


def pump(sa, sb, ca, cb, clock):
    """Deliver messages between two sessions until both finish."""
    for m in sa.start():
        ca.send(m)
    for m in sb.start():
        cb.send(m)
    while not (sa.finished and sb.finished):
        moved = False
        for s, ch in ((sb, cb), (sa, ca)):
            msg = ch.recv(timeout=0)
            if msg is not None:
                moved = True
                for out in s.receive(msg):
                    ch.send(out)
        if moved:
            continue
        # nothing in flight: let time pass until the next deadline
        live = [s for s in (sa, sb) if not s.finished and s.deadline is not None]
        if not live:
            break
        wait = min(s.deadline for s in live) - clock()
        if wait > 0:
            if hasattr(clock, "advance"):
                clock.advance(wait)
            else:
                time.sleep(wait)
        for s, ch in ((sa, ca), (sb, cb)):
            for out in s.tick():
                ch.send(out)


def loopback_pair(bits_a, bits_b, cfg, *, mode="memory", clock=None, drop=None):
    """Pair two fingerprints end to end.

    ``drop(sender_role, msg)`` may discard messages in memory mode.
    """
    from ..fpake.session import Role, Session

    if mode == "memory":
        clock = clock or time.monotonic
        da = (lambda m: drop("initiator", m)) if drop else None
        db = (lambda m: drop("responder", m)) if drop else None
        ca, cb = memory_pair(da, db)
        sa = Session(Role.INITIATOR, bits_a, cfg, clock=clock)
        sb = Session(Role.RESPONDER, bits_b, cfg, clock=clock)
        t0 = time.perf_counter()
        pump(sa, sb, ca, cb, clock)
        wall = time.perf_counter() - t0
        return LoopbackResult(sa.outcome(), sb.outcome(), _timing(sa, sb, wall))
    if mode == "tcp":
        return _tcp_pair(bits_a, bits_b, cfg)
    raise ValueError(f"unknown loopback mode {mode!r}")


def _tcp_pair(bits_a, bits_b, cfg):
    from ..fpake.session import Role, Session

    srv = socket.create_server(("127.0.0.1", 0))
    port = srv.getsockname()[1]
    sessions = {}

    def drive(role, bits, chan):
        s = Session(role, bits, cfg)
        sessions[role] = s
        for m in s.start():
            chan.send(m)
        while not s.finished:
            msg = chan.recv(timeout=max(0.0, s.deadline - time.monotonic()))
            for out in (s.receive(msg) if msg is not None else s.tick()):
                chan.send(out)

    def responder():
        conn, _ = srv.accept()
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        chan = StreamChannel(conn)
        try:
            drive(Role.RESPONDER, bits_b, chan)
        finally:
            chan.close()

    t0 = time.perf_counter()
    worker = threading.Thread(target=responder, daemon=True)
    worker.start()
    sock = socket.create_connection(("127.0.0.1", port))
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    chan = StreamChannel(sock)
    try:
        drive(Role.INITIATOR, bits_a, chan)
    finally:
        worker.join(timeout=cfg.confirm_timeout * 4)
        chan.close()
        srv.close()
    wall = time.perf_counter() - t0
    sa, sb = sessions[Role.INITIATOR], sessions[Role.RESPONDER]
    return LoopbackResult(sa.outcome(), sb.outcome(), _timing(sa, sb, wall))
