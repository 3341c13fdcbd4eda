"""Framed control-plane messages exchanged by the node daemons.

Wire format: a 4-byte big-endian unsigned payload length followed by a
UTF-8 JSON object carrying a ``type`` tag plus the variant's fields.
Frames above 1 MiB are rejected outright.  ``decode_message`` expects one
complete frame; ``FrameDecoder`` does incremental stream decoding and
consumes nothing until a frame is complete.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, fields

from ..analyzer import AnalyzerFrame
from ..channel import CountRecord
from ..chsh import ChshResult

MAX_FRAME_BYTES = 1 << 20
PROTOCOL_VERSION = "1"

ROLES = ("source_lab", "closet_waveplate", "kiosk_gateway")


class ProtocolError(ValueError):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


_REGISTRY: dict[str, type] = {}

# fields carrying a nested record, serialized through to_dict/from_dict
_NESTED = {"record": CountRecord, "result": ChshResult, "frame": AnalyzerFrame}


def _register(tag: str):
    def wrap(cls):
        cls.TYPE = tag
        _REGISTRY[tag] = cls
        return cls

    return wrap


class _Message:
    TYPE = ""

    def to_payload(self) -> dict:
        payload = {"type": self.TYPE}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in _NESTED and value is not None:
                value = value.to_dict()
            payload[f.name] = value
        return payload

    @classmethod
    def from_payload(cls, payload: dict) -> "_Message":
        kwargs = {}
        for f in fields(cls):
            if f.name not in payload:
                raise ProtocolError("MALFORMED", f"{cls.TYPE} missing field {f.name!r}")
            value = payload[f.name]
            if f.name in _NESTED and value is not None:
                value = _NESTED[f.name].from_dict(value)
            kwargs[f.name] = value
        return cls(**kwargs)


@_register("HELLO")
@dataclass(frozen=True)
class Hello(_Message):
    role: str
    version: str
    token: str = ""


@_register("SET_ANGLE")
@dataclass(frozen=True)
class SetAngle(_Message):
    target_node: str
    angle_deg: float
    request_id: int


@_register("ANGLE_SET")
@dataclass(frozen=True)
class AngleSet(_Message):
    request_id: int
    actual_angle_deg: float


@_register("START_COUNT")
@dataclass(frozen=True)
class StartCount(_Message):
    duration_s: float
    request_id: int


@_register("COUNT_REPORT")
@dataclass(frozen=True)
class CountReport(_Message):
    request_id: int
    record: CountRecord


@_register("RUN_CHSH")
@dataclass(frozen=True)
class RunChsh(_Message):
    a: float
    a_prime: float
    integration_s: float
    session_id: str


@_register("PROGRESS")
@dataclass(frozen=True)
class Progress(_Message):
    session_id: str
    step: int
    of: int


@_register("CHSH_RESULT")
@dataclass(frozen=True)
class ChshResultMsg(_Message):
    session_id: str
    result: ChshResult


@_register("FRAME")
@dataclass(frozen=True)
class FrameMsg(_Message):
    frame: AnalyzerFrame


@_register("CALIBRATE")
@dataclass(frozen=True)
class Calibrate(_Message):
    action: str  # "reset" or "done"


@_register("ERROR")
@dataclass(frozen=True)
class ErrorMsg(_Message):
    code: str
    detail: str = ""


Message = (
    Hello | SetAngle | AngleSet | StartCount | CountReport | RunChsh
    | Progress | ChshResultMsg | FrameMsg | Calibrate | ErrorMsg
)


def encode_message(message: Message) -> bytes:
    payload = json.dumps(message.to_payload(), separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_FRAME_BYTES:
        raise ProtocolError("OVERSIZE", f"payload of {len(payload)} bytes")
    return struct.pack(">I", len(payload)) + payload


def _parse_payload(raw: bytes) -> Message:
    try:
        payload = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError("MALFORMED", str(exc)) from None
    if not isinstance(payload, dict) or "type" not in payload:
        raise ProtocolError("MALFORMED", "payload is not an object with a type")
    tag = payload["type"]
    cls = _REGISTRY.get(tag)
    if cls is None:
        raise ProtocolError("UNKNOWN_TYPE", str(tag))
    return cls.from_payload(payload)


def decode_message(frame: bytes) -> Message:
    """Decode exactly one complete frame."""
    if len(frame) < 4:
        raise ProtocolError("INCOMPLETE", "frame shorter than the length header")
    (length,) = struct.unpack(">I", frame[:4])
    if length > MAX_FRAME_BYTES:
        raise ProtocolError("OVERSIZE", f"declared length {length}")
    if len(frame) != 4 + length:
        raise ProtocolError("INCOMPLETE", f"have {len(frame) - 4} of {length} bytes")
    return _parse_payload(frame[4:])


class FrameDecoder:
    """Incremental frame decoder for a byte stream."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Message]:
        """Append stream bytes; return every message completed by them."""
        self._buf.extend(data)
        out: list[Message] = []
        while True:
            if len(self._buf) < 4:
                break
            (length,) = struct.unpack(">I", bytes(self._buf[:4]))
            if length > MAX_FRAME_BYTES:
                raise ProtocolError("OVERSIZE", f"declared length {length}")
            if len(self._buf) < 4 + length:
                break
            raw = bytes(self._buf[4 : 4 + length])
            del self._buf[: 4 + length]
            out.append(_parse_payload(raw))
        return out

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)
