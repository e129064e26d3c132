"""Server side of the remote-call protocol.

Every inbound frame passes the same gate: decode, authenticate the named
user with a constant-time secret comparison, check the target function
against that user's permission set, then dispatch exactly once. No
handler ever runs without a permit for that exact function name.
"""

from __future__ import annotations

import hmac
import socket
import threading
from dataclasses import dataclass, field

from .codec import (
    APP_ERROR,
    BAD_CREDENTIALS,
    FORBIDDEN,
    FUNCTION_NOT_FOUND,
    PROTOCOL,
    DecodeError,
    RfcRequest,
    RfcResponse,
    Table,
    decode_frame,
    encode_frame,
    error_response,
    ok_response,
)

# Compared when the user does not exist, so the failure path does the
# same amount of secret-comparison work either way.
_DUMMY_SECRET = "\x00" * 32


@dataclass(frozen=True)
class RemoteUser:
    user: str
    secret: str
    permissions: frozenset[str]


class UserStore:
    def __init__(self, users: list[RemoteUser] | None = None) -> None:
        self._users = {u.user: u for u in (users or [])}

    def add(self, user: RemoteUser) -> None:
        self._users[user.user] = user

    def get(self, name: str) -> RemoteUser | None:
        return self._users.get(name)


def authenticate(user: str, secret: str, function: str, store: UserStore) -> str:
    """Permit or deny a call. Returns "OK", BAD_CREDENTIALS or FORBIDDEN.

    The secret comparison runs for unknown users too (against a dummy),
    so response timing does not reveal whether the user exists.
    """
    known = store.get(user)
    expected = known.secret if known is not None else _DUMMY_SECRET
    secret_ok = hmac.compare_digest(expected.encode(), secret.encode())
    if known is None or not secret_ok:
        return BAD_CREDENTIALS
    if function not in known.permissions:
        return FORBIDDEN
    return "OK"


class AppError(Exception):
    """Raised by handlers for an application-level refusal."""

    def __init__(self, message: str) -> None:
        super().__init__(message)


class PayloadError(Exception):
    """Raised by handlers when request rows/params are malformed."""


class DuplicateFunctionError(ValueError):
    pass


class FunctionRegistry:
    """Name -> handler map; immutable once a server starts serving it.

    A handler takes (params, tables) and returns (params, tables).
    """

    def __init__(self) -> None:
        self._handlers: dict[str, object] = {}
        self._frozen = False

    def register(self, name: str, handler) -> None:
        if self._frozen:
            raise DuplicateFunctionError("registry is frozen")
        if name in self._handlers:
            raise DuplicateFunctionError(f"function already registered: {name}")
        self._handlers[name] = handler

    def freeze(self) -> None:
        self._frozen = True

    def get(self, name: str):
        return self._handlers.get(name)

    def names(self) -> list[str]:
        return sorted(self._handlers)


class Dispatcher:
    """Authenticates and dispatches decoded requests, frame in, frame out."""

    def __init__(self, registry: FunctionRegistry, users: UserStore) -> None:
        self.registry = registry
        self.users = users

    def dispatch(self, request: RfcRequest) -> RfcResponse:
        verdict = authenticate(request.user, request.secret, request.function, self.users)
        if verdict != "OK":
            return error_response(request.call_id, verdict)
        handler = self.registry.get(request.function)
        if handler is None:
            return error_response(request.call_id, FUNCTION_NOT_FOUND, request.function)
        try:
            out_params, out_tables = handler(request.params, request.tables)
        except AppError as exc:
            return error_response(request.call_id, APP_ERROR, str(exc))
        except PayloadError as exc:
            return error_response(request.call_id, PROTOCOL, str(exc))
        return ok_response(request.call_id, out_params, out_tables)

    def handle_frame(self, frame: bytes) -> bytes:
        """Decode one complete frame and produce the response frame."""
        try:
            decoded = decode_frame(frame)
        except DecodeError as exc:
            return encode_frame(error_response("", exc.code, str(exc)))
        if decoded is None:
            return encode_frame(error_response("", PROTOCOL, "incomplete frame"))
        message, _ = decoded
        if not isinstance(message, RfcRequest):
            return encode_frame(error_response(message.call_id, PROTOCOL, "expected a request"))
        return encode_frame(self.dispatch(message))


class RfcServer:
    """Threaded TCP listener speaking the framed protocol.

    Connections are handled concurrently; frames within one connection
    are processed strictly in order. An undecodable frame gets an error
    response and the connection is closed, since framing cannot resync.
    """

    def __init__(self, dispatcher: Dispatcher, host: str = "127.0.0.1", port: int = 0) -> None:
        self.dispatcher = dispatcher
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(32)
        self.host, self.port = self._sock.getsockname()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._conns: set[socket.socket] = set()
        self._conns_lock = threading.Lock()
        self._accept_thread: threading.Thread | None = None

    def start(self) -> None:
        self.dispatcher.registry.freeze()
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            with self._conns_lock:
                self._conns.add(conn)
            t = threading.Thread(target=self._serve_conn, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)

    def _serve_conn(self, conn: socket.socket) -> None:
        buf = bytearray()
        try:
            while not self._stop.is_set():
                try:
                    decoded = decode_frame(buf)
                except DecodeError as exc:
                    conn.sendall(encode_frame(error_response("", exc.code, str(exc))))
                    return
                if decoded is not None:
                    message, consumed = decoded
                    del buf[:consumed]
                    if isinstance(message, RfcRequest):
                        conn.sendall(encode_frame(self.dispatcher.dispatch(message)))
                    else:
                        conn.sendall(
                            encode_frame(error_response(message.call_id, PROTOCOL, "expected a request"))
                        )
                    continue
                chunk = conn.recv(65536)
                if not chunk:
                    return
                buf.extend(chunk)
        except OSError:
            return
        finally:
            with self._conns_lock:
                self._conns.discard(conn)
            try:
                conn.close()
            except OSError:
                pass

    def close(self) -> None:
        self._stop.set()
        try:
            self._sock.close()
        except OSError:
            pass
        with self._conns_lock:
            conns = list(self._conns)
        for conn in conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                conn.close()
            except OSError:
                pass
