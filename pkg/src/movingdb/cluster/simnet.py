"""Deterministic tick-based message network.

Every message is delivered exactly ``latency`` ticks after it is sent, and
messages due on the same tick are delivered in global send order.  Since a
channel's messages are sent in order and share one latency, that also
gives per-channel FIFO.  Each delivery can be written as one trace line
``tick,src,dst,type,digest``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Optional


def canon(v: Any) -> str:
    """Stable text form of a payload: floats in hex, sets sorted."""
    if isinstance(v, bool) or v is None:
        return repr(v)
    if isinstance(v, float):
        return v.hex()
    if isinstance(v, int):
        return str(v)
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, str):
        return repr(v)
    if isinstance(v, (set, frozenset)):
        return "{" + ",".join(sorted(canon(x) for x in v)) + "}"
    if isinstance(v, dict):
        return "{" + ",".join(f"{canon(k)}:{canon(v[k])}" for k in sorted(v, key=canon)) + "}"
    if isinstance(v, (list, tuple)):
        return "[" + ",".join(canon(x) for x in v) + "]"
    raise TypeError(f"cannot canonicalise {type(v).__name__}")


def digest(v: Any) -> str:
    return hashlib.sha256(canon(v).encode()).hexdigest()[:16]


@dataclass
class Message:
    type: str
    src: str
    dst: str
    payload: dict
    sent_tick: int = 0
    deliver_tick: int = 0
    seq: int = 0


@dataclass
class SimNet:
    latency: int = 1
    tick: int = 0
    trace: Optional[Callable[[str], None]] = None
    _queue: dict = field(default_factory=dict)
    _seq: int = 0
    delivered: int = 0
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.latency < 1:
            raise ValueError("latency must be at least one tick")

    def send(self, type_: str, src: str, dst: str, **payload) -> Message:
        m = Message(type_, src, dst, payload, self.tick, self.tick + self.latency, self._seq)
        self._seq += 1
        self._queue.setdefault(m.deliver_tick, []).append(m)
        return m

    def due(self) -> list[Message]:
        """Pop this tick's messages; ones sent while delivering wait for a later tick."""
        msgs = self._queue.pop(self.tick, [])
        for m in msgs:
            self.delivered += 1
            self.counts[m.type] = self.counts.get(m.type, 0) + 1
            if self.trace is not None:
                self.trace(f"{self.tick},{m.src},{m.dst},{m.type},{digest(m.payload)}")
        return msgs

    def in_flight(self, type_: Optional[str] = None) -> int:
        if type_ is None:
            return sum(len(v) for v in self._queue.values())
        return sum(1 for v in self._queue.values() for m in v if m.type == type_)

    def idle(self) -> bool:
        return not any(self._queue.values())
