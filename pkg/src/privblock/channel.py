"""Two-party transport with byte/round accounting and simulated network timing.

A ``Session`` is one side of one logical conversation.  Frames are
``magic(4) | length(4, big-endian) | payload``; every metered frame is logged
by both endpoints with a step label, so a finished run yields identical
``CostReport`` objects on both sides regardless of transport (in-process pair
or TCP).  Simulated time is computed analytically from the transcript:
``latency + 8 * frame_bytes / bandwidth`` per message along the (sequential)
critical path, never by sleeping.
"""

from __future__ import annotations

import socket
import struct
import time
from dataclasses import dataclass, field
from queue import Queue

MAGIC = b"PBF1"
FRAME_OVERHEAD = 8  # 4-byte magic + 4-byte length

A, B = "A", "B"


class IoError(OSError):
    pass


class PeerClosed(IoError):
    pass


class HandshakeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class NetworkProfile:
    """Link model: bits/second bandwidth and one-way latency in seconds."""

    name: str
    bandwidth: float
    latency: float

    def __post_init__(self):
        if self.bandwidth <= 0 or self.latency < 0:
            raise ValueError("bandwidth must be > 0 and latency >= 0")

    def message_time(self, nbytes: int) -> float:
        return self.latency + 8.0 * nbytes / self.bandwidth


PROFILES = {
    "lan": NetworkProfile("lan", 1_000_000_000, 0.0002),
    "wan1": NetworkProfile("wan1", 400_000_000, 0.010),
    "wan2": NetworkProfile("wan2", 200_000_000, 0.040),
}


@dataclass
class CostReport:
    """Accounting for one session: bytes per party, messages, rounds, time.

    ``phases`` maps step label -> {bytes_a, bytes_b, messages, rounds,
    sim_time, warnings}.  Rounds are direction alternations over real frames
    plus the declared round counts of charged gadget invocations.
    """

    bytes_sent: dict = field(default_factory=lambda: {A: 0, B: 0})
    message_count: int = 0
    round_count: int = 0
    simulated_time: float = 0.0
    phases: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def total_bytes(self) -> int:
        return self.bytes_sent[A] + self.bytes_sent[B]

    def bytes_for(self, label_prefix: str) -> int:
        return sum(ph["bytes_a"] + ph["bytes_b"]
                   for lbl, ph in self.phases.items()
                   if lbl.startswith(label_prefix))

    def to_dict(self) -> dict:
        return {
            "bytes_a": self.bytes_sent[A],
            "bytes_b": self.bytes_sent[B],
            "total_bytes": self.total_bytes,
            "message_count": self.message_count,
            "round_count": self.round_count,
            "simulated_time": self.simulated_time,
            "phases": self.phases,
            "warnings": list(self.warnings),
        }


class _Ledger:
    """Shared transcript bookkeeping for one endpoint."""

    def __init__(self, profile: NetworkProfile):
        self.profile = profile
        self.entries = []  # (kind, direction, label, nbytes, rounds)

    def log_frame(self, direction: str, label: str, nbytes: int):
        self.entries.append(("frame", direction, label, nbytes, 0))

    def log_charge(self, label: str, bytes_ab: int, bytes_ba: int, rounds: int, warn: bool):
        self.entries.append(("charge", "AB", label, (bytes_ab, bytes_ba), rounds))
        if warn:
            self.entries.append(("warn", "", label, 0, 0))

    def report(self) -> CostReport:
        rep = CostReport()
        prev_dir = None
        for kind, direction, label, nbytes, rounds in self.entries:
            ph = rep.phases.setdefault(label, {
                "bytes_a": 0, "bytes_b": 0, "messages": 0, "rounds": 0,
                "sim_time": 0.0,
            })
            if kind == "frame":
                sender = direction
                rep.bytes_sent[sender] += nbytes
                ph["bytes_a" if sender == A else "bytes_b"] += nbytes
                rep.message_count += 1
                ph["messages"] += 1
                # a round is a maximal run of same-direction messages
                if direction != prev_dir:
                    rep.round_count += 1
                    ph["rounds"] += 1
                prev_dir = direction
                t = self.profile.message_time(nbytes)
                rep.simulated_time += t
                ph["sim_time"] += t
            elif kind == "charge":
                ba, bb = nbytes
                rep.bytes_sent[A] += ba
                rep.bytes_sent[B] += bb
                ph["bytes_a"] += ba
                ph["bytes_b"] += bb
                rep.round_count += rounds
                ph["rounds"] += rounds
                t = rounds * self.profile.latency + 8.0 * (ba + bb) / self.profile.bandwidth
                rep.simulated_time += t
                ph["sim_time"] += t
            else:
                rep.warnings.append(f"zero-cost gadget charge under label {label!r}")
        return rep


class Session:
    """One party's endpoint of a two-party conversation.

    Subclasses provide the raw byte transport; this class provides framing,
    labeling, accounting, and virtual gadget charges.  One driver thread per
    session; distinct sessions are independent.
    """

    def __init__(self, role: str, profile: NetworkProfile,
                 real_delay: bool = False):
        assert role in (A, B)
        self.role = role
        self.peer_role = B if role == A else A
        self.profile = profile
        self.real_delay = real_delay  # sleep out the simulated time per send
        self.ledger = _Ledger(profile)
        self._label_stack = []

    # -- raw transport, provided by subclass ------------------------------
    def _send_bytes(self, data: bytes):
        raise NotImplementedError

    def _recv_bytes(self) -> bytes:
        raise NotImplementedError

    def close(self):
        pass

    # -- framing and accounting -------------------------------------------
    def _frame(self, payload: bytes) -> bytes:
        return MAGIC + struct.pack(">I", len(payload)) + payload

    def _qualify(self, label: str) -> str:
        if self._label_stack:
            return self._label_stack[-1] + "/" + label
        return label

    def push_phase(self, prefix: str):
        self._label_stack.append(self._qualify(prefix))

    def pop_phase(self):
        self._label_stack.pop()

    def send(self, label: str, payload: bytes, metered: bool = True):
        data = self._frame(payload)
        self._send_bytes(data)
        if metered:
            self.ledger.log_frame(self.role, self._qualify(label), len(data))
            if self.real_delay:
                time.sleep(self.profile.message_time(len(data)))

    def recv(self, label: str, metered: bool = True) -> bytes:
        data = self._recv_bytes()
        if len(data) < FRAME_OVERHEAD or data[:4] != MAGIC:
            raise IoError("malformed frame")
        (length,) = struct.unpack(">I", data[4:8])
        payload = data[8:]
        if len(payload) != length:
            raise IoError("frame length mismatch")
        if metered:
            self.ledger.log_frame(self.peer_role, self._qualify(label), len(data))
        return payload

    def charge(self, label: str, bytes_ab: int, bytes_ba: int, rounds: int,
               warn_zero: bool = False):
        """Account a virtual cost (ideal-gadget traffic) without moving bytes."""
        self.ledger.log_charge(self._qualify(label), bytes_ab, bytes_ba, rounds,
                               warn_zero)

    def report(self) -> CostReport:
        return self.ledger.report()

    def transcript_labels(self) -> list:
        """(kind, direction, label) triples of the metered transcript."""
        return [(k, d, l) for k, d, l, _, _ in self.ledger.entries if k != "warn"]

    # -- handshake ---------------------------------------------------------
    def handshake(self, params_blob: bytes):
        """Exchange a parameter fingerprint; abort on mismatch."""
        if self.role == A:
            self.send("handshake", params_blob)
            other = self.recv("handshake")
        else:
            other = self.recv("handshake")
            self.send("handshake", params_blob)
        if other != params_blob:
            raise HandshakeMismatch("parameter fingerprints differ between parties")


class PairSession(Session):
    """In-process session backed by a pair of queues."""

    def __init__(self, role, profile, inbox: Queue, outbox: Queue):
        super().__init__(role, profile)
        self._inbox = inbox
        self._outbox = outbox

    def _send_bytes(self, data: bytes):
        self._outbox.put(data)

    def _recv_bytes(self) -> bytes:
        data = self._inbox.get()
        if data is None:
            raise PeerClosed("peer closed the pair")
        return data

    def close(self):
        self._outbox.put(None)


def make_pair(profile: NetworkProfile) -> tuple[PairSession, PairSession]:
    qa, qb = Queue(), Queue()
    return (PairSession(A, profile, inbox=qa, outbox=qb),
            PairSession(B, profile, inbox=qb, outbox=qa))


class TcpSession(Session):
    """TCP-backed session; one frame per labeled message."""

    def __init__(self, role, profile, sock: socket.socket):
        super().__init__(role, profile)
        self._sock = sock

    def _send_bytes(self, data: bytes):
        try:
            self._sock.sendall(data)
        except OSError as e:
            raise IoError(str(e)) from e

    def _recv_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            chunk = self._sock.recv(min(1 << 20, n - len(buf)))
            if not chunk:
                raise PeerClosed("connection closed mid-frame")
            buf.extend(chunk)
        return bytes(buf)

    def _recv_bytes(self) -> bytes:
        head = self._recv_exact(FRAME_OVERHEAD)
        if head[:4] != MAGIC:
            raise IoError("bad frame magic")
        (length,) = struct.unpack(">I", head[4:8])
        return head + self._recv_exact(length)

    def close(self):
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


def connect(role: str, endpoint: tuple, profile: NetworkProfile,
            params_blob: bytes, timeout: float = 30.0) -> TcpSession:
    """Open a TCP session: role B listens, role A connects.  The handshake
    exchanges ``params_blob``; a mismatch aborts the session."""
    host, port = endpoint
    if role == B:
        srv = socket.create_server((host, port))
        srv.settimeout(timeout)
        conn, _ = srv.accept()
        srv.close()
        sess = TcpSession(B, profile, conn)
    else:
        deadline = time.monotonic() + timeout
        last = None
        while True:
            try:
                sock = socket.create_connection((host, port), timeout=timeout)
                break
            except OSError as e:
                last = e
                if time.monotonic() > deadline:
                    raise IoError(f"connect failed: {last}") from e
                time.sleep(0.05)
        sess = TcpSession(A, profile, sock)
    sess.handshake(params_blob)
    return sess


def run_pair(fn_a, fn_b, profile: NetworkProfile | None = None):
    """Drive two party functions over an in-process pair on two threads.

    Each function receives its Session; returns (result_a, result_b).
    Exceptions propagate to the caller.
    """
    import threading

    profile = profile or PROFILES["lan"]
    sa, sb = make_pair(profile)
    out = {}
    err = {}

    def runner(name, fn, sess):
        try:
            out[name] = fn(sess)
        except BaseException as e:  # re-raised in the parent
            err[name] = e

    ta = threading.Thread(target=runner, args=("a", fn_a, sa), daemon=True)
    tb = threading.Thread(target=runner, args=("b", fn_b, sb), daemon=True)
    ta.start()
    tb.start()
    ta.join(timeout=600)
    tb.join(timeout=600)
    if ta.is_alive() or tb.is_alive():
        raise IoError("party driver deadlocked")
    for name in ("a", "b"):
        if name in err:
            raise err[name]
    return out["a"], out["b"]
