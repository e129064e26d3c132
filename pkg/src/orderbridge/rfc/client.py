"""Client side of the remote-call protocol.

A call sends exactly one request frame and reads exactly one response
frame. Transport failures (TIMEOUT, CONNECTION_REFUSED, PROTOCOL) raise
TransportError and are safe for the caller to retry; an application
ERROR comes back as a normal response and is never retried here.

Endpoints abstract the wire so the simulator can swap a real TCP socket
for an in-memory hop that still pushes every message through the frame
codec, and wrap either one with seeded fault injection (duplicated
sends, dropped responses) at the exact boundary where at-least-once
delivery is decided.
"""

from __future__ import annotations

import random
import socket
import struct
from typing import Callable

from .codec import (
    CONNECTION_REFUSED,
    PROTOCOL,
    TIMEOUT,
    DecodeError,
    RfcRequest,
    RfcResponse,
    Table,
    decode_frame,
    encode_frame,
)


class TransportError(Exception):
    """Transport-level call failure, distinguishable from app errors."""

    def __init__(self, code: str, detail: str = "") -> None:
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code


class Endpoint:
    """Something that exchanges one request frame for one response frame."""

    def exchange(self, frame: bytes, timeout: float) -> bytes:
        raise NotImplementedError


class TcpEndpoint(Endpoint):
    """One connection per call; simple and safe to retry."""

    def __init__(self, host: str, port: int) -> None:
        self.host = host
        self.port = port

    def exchange(self, frame: bytes, timeout: float) -> bytes:
        try:
            conn = socket.create_connection((self.host, self.port), timeout=timeout)
        except ConnectionRefusedError as exc:
            raise TransportError(CONNECTION_REFUSED, str(exc))
        except socket.timeout as exc:
            raise TransportError(TIMEOUT, str(exc))
        except OSError as exc:
            raise TransportError(CONNECTION_REFUSED, str(exc))
        try:
            conn.settimeout(timeout)
            conn.sendall(frame)
            header = self._recv_exactly(conn, 4)
            (length,) = struct.unpack(">I", header)
            body = self._recv_exactly(conn, length)
            return header + body
        except socket.timeout as exc:
            raise TransportError(TIMEOUT, str(exc))
        except OSError as exc:
            raise TransportError(PROTOCOL, f"connection lost: {exc}")
        finally:
            try:
                conn.close()
            except OSError:
                pass

    @staticmethod
    def _recv_exactly(conn: socket.socket, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            chunk = conn.recv(n - len(buf))
            if not chunk:
                raise TransportError(PROTOCOL, "connection closed mid-frame")
            buf.extend(chunk)
        return bytes(buf)


class InMemoryEndpoint(Endpoint):
    """Synchronous in-process hop that still round-trips real frames."""

    def __init__(self, handle_frame: Callable[[bytes], bytes]) -> None:
        self._handle_frame = handle_frame
        self.up = True

    def exchange(self, frame: bytes, timeout: float) -> bytes:
        if not self.up:
            raise TransportError(CONNECTION_REFUSED, "endpoint is down")
        return self._handle_frame(frame)


class FaultyEndpoint(Endpoint):
    """Injects duplicated sends and dropped responses, seeded.

    Both fault draws happen on every call so the random stream depends
    only on the call sequence, keeping runs reproducible. A duplicated
    send delivers the same frame twice (the server processes it twice);
    a dropped response lets the server process the call, then discards
    the answer and reports TIMEOUT like a lost reply would.
    """

    def __init__(
        self,
        inner: Endpoint,
        rng: random.Random,
        p_duplicate_send: float = 0.0,
        p_drop_response: float = 0.0,
        on_fault: Callable[[str], None] | None = None,
    ) -> None:
        self.inner = inner
        self.rng = rng
        self.p_duplicate_send = p_duplicate_send
        self.p_drop_response = p_drop_response
        self.on_fault = on_fault
        self.enabled = True

    def exchange(self, frame: bytes, timeout: float) -> bytes:
        duplicate = self.rng.random() < self.p_duplicate_send
        drop = self.rng.random() < self.p_drop_response
        if not self.enabled:
            duplicate = drop = False
        response = self.inner.exchange(frame, timeout)
        if duplicate:
            if self.on_fault:
                self.on_fault("duplicate_send")
            self.inner.exchange(frame, timeout)
        if drop:
            if self.on_fault:
                self.on_fault("drop_response")
            raise TransportError(TIMEOUT, "response dropped by fault plan")
        return response


class RfcClient:
    """Credentialed caller bound to one endpoint."""

    def __init__(self, endpoint: Endpoint, user: str, secret: str, timeout: float = 5.0) -> None:
        self.endpoint = endpoint
        self.user = user
        self.secret = secret
        self.timeout = timeout
        self._seq = 0

    def call(
        self,
        function: str,
        params: dict | None = None,
        tables: list[Table] | None = None,
        timeout: float | None = None,
    ) -> RfcResponse:
        self._seq += 1
        call_id = f"{self.user}:{self._seq}"
        request = RfcRequest(
            call_id=call_id,
            user=self.user,
            secret=self.secret,
            function=function,
            params=params or {},
            tables=tables or [],
        )
        raw = self.endpoint.exchange(encode_frame(request), timeout or self.timeout)
        try:
            decoded = decode_frame(raw)
        except DecodeError as exc:
            raise TransportError(PROTOCOL, str(exc))
        if decoded is None:
            raise TransportError(PROTOCOL, "truncated response frame")
        response, _ = decoded
        if not isinstance(response, RfcResponse):
            raise TransportError(PROTOCOL, "peer sent a request, expected a response")
        if response.call_id not in ("", call_id):
            raise TransportError(PROTOCOL, f"call_id mismatch: {response.call_id!r}")
        return response
