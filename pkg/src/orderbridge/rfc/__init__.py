"""Framed remote-call protocol: codec, server, client, fault injection."""

from .codec import (
    APP_ERROR,
    BAD_CREDENTIALS,
    CONNECTION_REFUSED,
    FORBIDDEN,
    FUNCTION_NOT_FOUND,
    MAX_FRAME_BYTES,
    PROTOCOL,
    PROTOCOL_VERSION,
    TIMEOUT,
    UNSUPPORTED_VERSION,
    CellKind,
    CodecError,
    Column,
    DecodeError,
    FrameTooLargeError,
    RfcRequest,
    RfcResponse,
    Table,
    decode_frame,
    encode_frame,
    error_response,
    ok_response,
)
from .client import (
    Endpoint,
    FaultyEndpoint,
    InMemoryEndpoint,
    RfcClient,
    TcpEndpoint,
    TransportError,
)
from .service import (
    AppError,
    Dispatcher,
    DuplicateFunctionError,
    FunctionRegistry,
    PayloadError,
    RemoteUser,
    RfcServer,
    UserStore,
    authenticate,
)
