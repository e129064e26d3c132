"""Framed wire codec for the remote-call protocol.

Frame layout: 4-byte big-endian unsigned length N, then N bytes of UTF-8
JSON. The JSON object starts with keys "v" and "call_id"; every other key
follows in sorted order, and nested objects are emitted with sorted keys,
so equal messages always encode to identical bytes.

Bulk payloads travel as tables: an ordered column declaration plus rows
of typed cells (STRING, INT, BOOL, MONEY). Row order survives the round
trip end to end.

decode_frame is total over arbitrary byte input: it either returns a
message, reports that more bytes are needed, or raises DecodeError with
a protocol error code; it never raises anything else.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

from ..model import Money, money_from_json, money_to_json

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 16 * 1024 * 1024
_HEADER = struct.Struct(">I")

# Exact protocol error code strings.
BAD_CREDENTIALS = "BAD_CREDENTIALS"
FORBIDDEN = "FORBIDDEN"
FUNCTION_NOT_FOUND = "FUNCTION_NOT_FOUND"
UNSUPPORTED_VERSION = "UNSUPPORTED_VERSION"
PROTOCOL = "PROTOCOL"
TIMEOUT = "TIMEOUT"
CONNECTION_REFUSED = "CONNECTION_REFUSED"
APP_ERROR = "APP_ERROR"

Scalar = Union[str, int, bool]


class CodecError(Exception):
    """Base for encode/decode failures."""


class FrameTooLargeError(CodecError):
    """Message body would exceed the 16 MiB frame cap."""


class DecodeError(CodecError):
    """Undecodable frame. code is a protocol error code; reason is the
    distinct failure class within it."""

    def __init__(self, code: str, reason: str, detail: str = "") -> None:
        super().__init__(f"{code}/{reason}: {detail}" if detail else f"{code}/{reason}")
        self.code = code
        self.reason = reason


class CellKind(Enum):
    STRING = "STRING"
    INT = "INT"
    BOOL = "BOOL"
    MONEY = "MONEY"


@dataclass(frozen=True)
class Column:
    name: str
    kind: CellKind


@dataclass
class Table:
    """Named, column-declared bulk payload; rows are tuples of cells."""

    name: str
    columns: tuple[Column, ...]
    rows: list[tuple] = field(default_factory=list)

    def append(self, *cells) -> None:
        self.rows.append(tuple(cells))

    def validate(self) -> None:
        for i, row in enumerate(self.rows):
            if len(row) != len(self.columns):
                raise CodecError(
                    f"table {self.name}: row {i} has {len(row)} cells, "
                    f"expected {len(self.columns)}"
                )
            for col, cell in zip(self.columns, row):
                if not _cell_matches(col.kind, cell):
                    raise CodecError(
                        f"table {self.name}: row {i} column {col.name}: "
                        f"{cell!r} is not {col.kind.value}"
                    )

    def column_index(self, name: str) -> int:
        for i, col in enumerate(self.columns):
            if col.name == name:
                return i
        raise KeyError(name)


def _cell_matches(kind: CellKind, cell) -> bool:
    if kind is CellKind.STRING:
        return isinstance(cell, str)
    if kind is CellKind.INT:
        return isinstance(cell, int) and not isinstance(cell, bool)
    if kind is CellKind.BOOL:
        return isinstance(cell, bool)
    return isinstance(cell, Money)


@dataclass
class RfcRequest:
    call_id: str
    user: str
    secret: str
    function: str
    params: dict[str, Scalar] = field(default_factory=dict)
    tables: list[Table] = field(default_factory=list)
    v: int = PROTOCOL_VERSION


@dataclass
class RfcResponse:
    call_id: str
    status: str  # "OK" | "ERROR"
    code: str = ""
    message: str = ""
    params: dict[str, Scalar] = field(default_factory=dict)
    tables: list[Table] = field(default_factory=list)
    v: int = PROTOCOL_VERSION

    @property
    def ok(self) -> bool:
        return self.status == "OK"


def ok_response(call_id: str, params: dict | None = None, tables: list[Table] | None = None) -> RfcResponse:
    return RfcResponse(call_id=call_id, status="OK", params=params or {}, tables=tables or [])


def error_response(call_id: str, code: str, message: str = "") -> RfcResponse:
    # Error responses never carry tables.
    return RfcResponse(call_id=call_id, status="ERROR", code=code, message=message)


def _scalar_to_json(value) -> Scalar:
    if isinstance(value, bool) or isinstance(value, str):
        return value
    if isinstance(value, int):
        return value
    raise CodecError(f"param value {value!r} is not a scalar")


def _cell_to_json(kind: CellKind, cell):
    if kind is CellKind.MONEY:
        return money_to_json(cell)
    return cell


def _table_to_json(table: Table) -> dict:
    table.validate()
    return {
        "columns": [{"kind": c.kind.value, "name": c.name} for c in table.columns],
        "name": table.name,
        "rows": [
            [_cell_to_json(c.kind, cell) for c, cell in zip(table.columns, row)]
            for row in table.rows
        ],
    }


def _message_to_json(message: RfcRequest | RfcResponse) -> dict:
    # Key order: v, call_id, then remaining keys sorted.
    body: dict = {"v": message.v, "call_id": message.call_id}
    if isinstance(message, RfcRequest):
        if not message.function:
            raise CodecError("request function name must be non-empty")
        rest = {
            "function": message.function,
            "params": {k: _scalar_to_json(message.params[k]) for k in sorted(message.params)},
            "secret": message.secret,
            "tables": [_table_to_json(t) for t in message.tables],
            "user": message.user,
        }
    else:
        if message.status not in ("OK", "ERROR"):
            raise CodecError(f"bad response status {message.status!r}")
        if message.status == "ERROR" and message.tables:
            raise CodecError("error responses must not carry tables")
        rest = {
            "code": message.code,
            "message": message.message,
            "params": {k: _scalar_to_json(message.params[k]) for k in sorted(message.params)},
            "status": message.status,
            "tables": [_table_to_json(t) for t in message.tables],
        }
    for key in sorted(rest):
        body[key] = rest[key]
    return body


def encode_frame(message: RfcRequest | RfcResponse) -> bytes:
    """Serialize one message to its length-prefixed frame."""
    body = json.dumps(
        _message_to_json(message), sort_keys=False, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")
    if len(body) > MAX_FRAME_BYTES:
        raise FrameTooLargeError(f"frame body is {len(body)} bytes")
    return _HEADER.pack(len(body)) + body


def _decode_cell(kind: CellKind, raw, where: str):
    try:
        if kind is CellKind.STRING:
            if isinstance(raw, str):
                return raw
        elif kind is CellKind.INT:
            if isinstance(raw, int) and not isinstance(raw, bool):
                return raw
        elif kind is CellKind.BOOL:
            if isinstance(raw, bool):
                return raw
        else:
            if isinstance(raw, dict):
                return money_from_json(raw)
    except Exception:
        pass
    raise DecodeError(PROTOCOL, "bad-cell", f"{where}: {raw!r} is not {kind.value}")


def _decode_table(obj, index: int) -> Table:
    if not isinstance(obj, dict):
        raise DecodeError(PROTOCOL, "bad-table", f"table {index} is not an object")
    try:
        name = obj["name"]
        raw_columns = obj["columns"]
        raw_rows = obj["rows"]
    except (KeyError, TypeError):
        raise DecodeError(PROTOCOL, "bad-table", f"table {index} missing fields")
    if not isinstance(name, str) or not isinstance(raw_columns, list) or not isinstance(raw_rows, list):
        raise DecodeError(PROTOCOL, "bad-table", f"table {index} field types")
    columns = []
    for c in raw_columns:
        try:
            columns.append(Column(name=str(c["name"]), kind=CellKind(c["kind"])))
        except (KeyError, TypeError, ValueError):
            raise DecodeError(PROTOCOL, "bad-table", f"table {name}: bad column {c!r}")
    table = Table(name=name, columns=tuple(columns))
    for i, row in enumerate(raw_rows):
        if not isinstance(row, list) or len(row) != len(columns):
            raise DecodeError(PROTOCOL, "arity-mismatch", f"table {name}: row {i}")
        table.rows.append(
            tuple(
                _decode_cell(col.kind, cell, f"table {name} row {i} col {col.name}")
                for col, cell in zip(columns, row)
            )
        )
    return table


def _decode_params(obj, where: str) -> dict[str, Scalar]:
    if not isinstance(obj, dict):
        raise DecodeError(PROTOCOL, "bad-params", where)
    params: dict[str, Scalar] = {}
    for k, v in obj.items():
        if not isinstance(k, str) or not isinstance(v, (str, int, bool)):
            raise DecodeError(PROTOCOL, "bad-params", f"{where}: {k!r}={v!r}")
        params[k] = v
    return params


def decode_frame(buf: bytes | bytearray | memoryview) -> tuple[RfcRequest | RfcResponse, int] | None:
    """Decode one frame from the start of buf.

    Returns (message, consumed_bytes), or None when the buffer does not
    yet hold a complete frame. Raises DecodeError on malformed input.
    """
    buf = bytes(buf)
    if len(buf) < 4:
        return None
    (length,) = _HEADER.unpack_from(buf)
    if length > MAX_FRAME_BYTES:
        raise DecodeError(PROTOCOL, "frame-too-large", f"declared {length} bytes")
    if len(buf) < 4 + length:
        return None
    body = buf[4 : 4 + length]
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DecodeError(PROTOCOL, "bad-json", str(exc))
    if not isinstance(obj, dict):
        raise DecodeError(PROTOCOL, "bad-message", "frame body is not an object")
    if obj.get("v") != PROTOCOL_VERSION:
        raise DecodeError(UNSUPPORTED_VERSION, "bad-version", f"v={obj.get('v')!r}")
    call_id = obj.get("call_id")
    if not isinstance(call_id, str):
        raise DecodeError(PROTOCOL, "bad-message", "call_id missing or not a string")
    try:
        tables = [_decode_table(t, i) for i, t in enumerate(obj.get("tables") or [])]
        if "function" in obj:
            function = obj.get("function")
            user = obj.get("user")
            secret = obj.get("secret")
            if not isinstance(function, str) or not function:
                raise DecodeError(PROTOCOL, "bad-message", "function missing or empty")
            if not isinstance(user, str) or not isinstance(secret, str):
                raise DecodeError(PROTOCOL, "bad-message", "user/secret missing")
            message: RfcRequest | RfcResponse = RfcRequest(
                call_id=call_id,
                user=user,
                secret=secret,
                function=function,
                params=_decode_params(obj.get("params") or {}, "request params"),
                tables=tables,
            )
        elif "status" in obj:
            status = obj.get("status")
            if status not in ("OK", "ERROR"):
                raise DecodeError(PROTOCOL, "bad-message", f"status {status!r}")
            if status == "ERROR" and tables:
                raise DecodeError(PROTOCOL, "bad-message", "error response carries tables")
            message = RfcResponse(
                call_id=call_id,
                status=status,
                code=str(obj.get("code") or ""),
                message=str(obj.get("message") or ""),
                params=_decode_params(obj.get("params") or {}, "response params"),
                tables=tables,
            )
        else:
            raise DecodeError(PROTOCOL, "bad-message", "neither request nor response")
    except DecodeError:
        raise
    except Exception as exc:  # defensive: decoding must never crash callers
        raise DecodeError(PROTOCOL, "bad-message", repr(exc))
    return message, 4 + length
