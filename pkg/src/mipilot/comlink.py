"""Command frames and simulated actuator sinks.

Frame layout (5 bytes)::

    0xA5 | cmd | seq lo | seq hi | xor(bytes 0..3)

Commands: 0 LEFT, 1 RIGHT, 2 FORWARD, 3 BACK, 255 HOLD.
"""
from __future__ import annotations

import enum
import socket
import struct
import time
from dataclasses import dataclass, field
from typing import Optional

from .errors import BadChecksum, BadLength, BadSync, UnmappedClass, UnsupportedCommand

SYNC = 0xA5
FRAME_LEN = 5
SEQ_MOD = 1 << 16
ELEVON_LIMIT = 30.0
ELEVON_STEP = 5.0


class Command(enum.IntEnum):
    LEFT = 0
    RIGHT = 1
    FORWARD = 2
    BACK = 3
    HOLD = 255


DEFAULT_MAPPING = {1: Command.LEFT, 2: Command.RIGHT, 3: Command.FORWARD, 4: Command.BACK}


def parse_mapping(text: str) -> dict:
    """``"1=LEFT,2=RIGHT"`` -> {1: Command.LEFT, 2: Command.RIGHT}."""
    out = {}
    for item in text.split(","):
        k, _, v = item.partition("=")
        try:
            out[int(k)] = Command[v.strip().upper()]
        except (ValueError, KeyError):
            raise UnmappedClass(f"bad mapping entry {item!r}") from None
    return out


@dataclass(frozen=True)
class CommandFrame:
    cmd: Command
    seq: int

    def __post_init__(self):
        object.__setattr__(self, "cmd", Command(self.cmd))
        if not 0 <= self.seq < SEQ_MOD:
            raise ValueError(f"seq must be in [0, 65535], got {self.seq}")

    def to_bytes(self) -> bytes:
        head = struct.pack("<BBH", SYNC, int(self.cmd), self.seq)
        return head + bytes([head[0] ^ head[1] ^ head[2] ^ head[3]])


def encode(decision, mapping: Optional[dict] = None, seq: int = 0) -> bytes:
    """Frame bytes for a decision (or a bare class id); hold maps to HOLD."""
    mapping = DEFAULT_MAPPING if mapping is None else mapping
    cls = getattr(decision, "class_id", decision)
    if getattr(decision, "is_hold", False) or cls == -1:
        cmd = Command.HOLD
    else:
        try:
            cmd = mapping[cls]
        except KeyError:
            raise UnmappedClass(f"class {cls} has no command mapping") from None
    return CommandFrame(cmd, seq % SEQ_MOD).to_bytes()


def decode(data: bytes) -> CommandFrame:
    data = bytes(data)
    if len(data) != FRAME_LEN:
        raise BadLength(f"frame must be {FRAME_LEN} bytes, got {len(data)}")
    if data[0] != SYNC:
        raise BadSync(f"sync byte 0x{data[0]:02X} != 0x{SYNC:02X}")
    if data[0] ^ data[1] ^ data[2] ^ data[3] != data[4]:
        raise BadChecksum(f"checksum 0x{data[4]:02X} does not match")
    _, cmd, seq = struct.unpack("<BBH", data[:4])
    try:
        return CommandFrame(Command(cmd), seq)
    except ValueError:
        raise BadChecksum(f"unknown command byte 0x{cmd:02X}") from None


class Sequencer:
    """Hands out frame sequence numbers modulo 2**16."""

    def __init__(self, start: int = 0):
        self.seq = start % SEQ_MOD

    def frame(self, decision, mapping=None) -> bytes:
        out = encode(decision, mapping, self.seq)
        self.seq = (self.seq + 1) % SEQ_MOD
        return out


@dataclass(frozen=True)
class ElevonState:
    left_deg: float = 0.0
    right_deg: float = 0.0

    def line(self) -> str:
        return f"elevon L={self.left_deg:g} R={self.right_deg:g}"


def _clamp(v: float) -> float:
    return max(-ELEVON_LIMIT, min(ELEVON_LIMIT, v))


def _decay(v: float) -> float:
    if abs(v) <= ELEVON_STEP:
        return 0.0
    return v - ELEVON_STEP if v > 0 else v + ELEVON_STEP


def elevon_step(state: ElevonState, frame) -> ElevonState:
    """LEFT raises the left surface and lowers the right; HOLD relaxes both."""
    if isinstance(frame, (bytes, bytearray)):
        frame = decode(frame)
    if frame.cmd == Command.LEFT:
        return ElevonState(_clamp(state.left_deg + ELEVON_STEP),
                           _clamp(state.right_deg - ELEVON_STEP))
    if frame.cmd == Command.RIGHT:
        return ElevonState(_clamp(state.left_deg - ELEVON_STEP),
                           _clamp(state.right_deg + ELEVON_STEP))
    if frame.cmd == Command.HOLD:
        return ElevonState(_decay(state.left_deg), _decay(state.right_deg))
    raise UnsupportedCommand(f"elevon sink cannot execute {frame.cmd.name}")


def seq_newer(seq: int, last: int) -> bool:
    """True when ``seq`` is ahead of ``last`` in modular (serial-number) order."""
    diff = (seq - last) % SEQ_MOD
    return 0 < diff < SEQ_MOD // 2


@dataclass
class QuadCommandLog:
    entries: list = field(default_factory=list)
    duplicates: int = 0
    stale: int = 0

    @property
    def last_seq(self) -> Optional[int]:
        return self.entries[-1][0] if self.entries else None

    def lines(self):
        return [f"quad seq={s} cmd={c.name}" for s, c, _ in self.entries]


def quad_ingest(log: QuadCommandLog, frame, now: Optional[float] = None) -> QuadCommandLog:
    """Append a frame unless its sequence number is a repeat or behind the last one."""
    if isinstance(frame, (bytes, bytearray)):
        frame = decode(frame)
    last = log.last_seq
    if last is not None:
        if frame.seq == last or any(s == frame.seq for s, _, _ in log.entries[-8:]):
            log.duplicates += 1
            return log
        if not seq_newer(frame.seq, last):
            log.stale += 1
            return log
    log.entries.append((frame.seq, frame.cmd, time.time() if now is None else now))
    return log


class InProcessLink:
    """Ordered in-memory frame channel to a sink callback."""

    def __init__(self, sink):
        self.sink = sink
        self.sent = 0

    def send(self, frame: bytes) -> None:
        self.sent += 1
        self.sink(frame)


class DatagramLink:
    """One frame per UDP datagram."""

    def __init__(self, host: str, port: int):
        self.addr = (host, port)
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sent = 0

    def send(self, frame: bytes) -> None:
        self.sock.sendto(frame, self.addr)
        self.sent += 1

    def close(self) -> None:
        self.sock.close()


class DatagramReceiver:
    """Bound UDP socket yielding decoded frames; malformed datagrams are counted and skipped."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, timeout: float = 1.0):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind((host, port))
        self.sock.settimeout(timeout)
        self.rejected = 0

    @property
    def port(self) -> int:
        return self.sock.getsockname()[1]

    def recv(self) -> Optional[CommandFrame]:
        try:
            data, _ = self.sock.recvfrom(64)
        except socket.timeout:
            return None
        try:
            return decode(data)
        except (BadLength, BadSync, BadChecksum):
            self.rejected += 1
            return None

    def close(self) -> None:
        self.sock.close()
