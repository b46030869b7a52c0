"""Decoder/encoder for the book-affecting subset of Nasdaq TotalView-ITCH 5.0.

Supported message codes (body length includes the type byte)::

    S  System Event                 12
    A  Add Order (no MPID)          36
    F  Add Order with MPID          40
    E  Order Executed               31
    C  Order Executed With Price    36
    X  Order Cancel                 23
    D  Order Delete                 19
    U  Order Replace                35
    P  Trade (non-cross)            44

Every body starts with ``type(1) stock_locate(2) tracking(2) timestamp(6)``.
Integers are big-endian, prices are integers in 1/10000 USD, and the
timestamp is nanoseconds since midnight.  On disk each body is preceded by a
2-byte big-endian length, as in the files Nasdaq distributes.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterator

NS_PER_DAY = 86_400 * 10**9


class ItchError(ValueError):
    pass


class UnknownType(ItchError):
    def __init__(self, code: bytes):
        super().__init__(f"unsupported ITCH message type {code!r}")
        self.code = code


class TruncatedMessage(ItchError):
    pass


class InvalidSide(ItchError):
    pass


class FramingError(ItchError):
    pass


class InvalidMessage(ItchError):
    """Raised when a message would violate a field invariant."""


class Side(enum.Enum):
    BID = b"B"
    ASK = b"S"


class Kind(enum.Enum):
    SYSTEM_EVENT = b"S"
    ADD_ORDER = b"A"
    ADD_ORDER_MPID = b"F"
    ORDER_EXECUTED = b"E"
    ORDER_EXECUTED_WITH_PRICE = b"C"
    ORDER_CANCEL = b"X"
    ORDER_DELETE = b"D"
    ORDER_REPLACE = b"U"
    TRADE = b"P"


def _check_header(msg) -> None:
    if not 0 <= msg.timestamp_ns < NS_PER_DAY:
        raise InvalidMessage(f"timestamp_ns out of range: {msg.timestamp_ns}")
    if not (0 <= msg.stock_locate < 1 << 16 and 0 <= msg.tracking < 1 << 16):
        raise InvalidMessage("stock_locate/tracking must fit in u16")


def _check_u(name: str, value: int, bits: int, positive: bool = False) -> None:
    lo = 1 if positive else 0
    if not lo <= value < 1 << bits:
        raise InvalidMessage(f"{name}={value} outside [{lo}, 2**{bits})")


def _check_symbol(symbol: bytes) -> None:
    if len(symbol) != 8:
        raise InvalidMessage(f"symbol must be 8 bytes, got {symbol!r}")


@dataclass(frozen=True)
class SystemEvent:
    stock_locate: int
    tracking: int
    timestamp_ns: int
    event_code: bytes

    kind = Kind.SYSTEM_EVENT

    def __post_init__(self):
        _check_header(self)
        if len(self.event_code) != 1:
            raise InvalidMessage("event_code must be a single byte")


@dataclass(frozen=True)
class AddOrder:
    """Add Order ('A'), or 'F' when ``mpid`` is set.

    ``symbol_raw`` keeps the 8 space-padded bytes exactly as on the wire;
    ``symbol`` is the trimmed text.
    """

    stock_locate: int
    tracking: int
    timestamp_ns: int
    order_ref: int
    side: Side
    shares: int
    symbol_raw: bytes
    price: int
    mpid: bytes | None = None

    def __post_init__(self):
        _check_header(self)
        _check_u("order_ref", self.order_ref, 64)
        _check_u("shares", self.shares, 32, positive=True)
        _check_u("price", self.price, 32, positive=True)
        _check_symbol(self.symbol_raw)
        if self.mpid is not None and len(self.mpid) != 4:
            raise InvalidMessage("mpid must be 4 bytes")

    @property
    def kind(self) -> Kind:
        return Kind.ADD_ORDER if self.mpid is None else Kind.ADD_ORDER_MPID

    @property
    def symbol(self) -> str:
        return self.symbol_raw.decode("ascii").strip()


@dataclass(frozen=True)
class OrderExecuted:
    stock_locate: int
    tracking: int
    timestamp_ns: int
    order_ref: int
    executed_shares: int
    match_number: int = 0

    kind = Kind.ORDER_EXECUTED

    def __post_init__(self):
        _check_header(self)
        _check_u("order_ref", self.order_ref, 64)
        _check_u("executed_shares", self.executed_shares, 32, positive=True)
        _check_u("match_number", self.match_number, 64)


@dataclass(frozen=True)
class OrderExecutedWithPrice:
    stock_locate: int
    tracking: int
    timestamp_ns: int
    order_ref: int
    executed_shares: int
    match_number: int
    printable: bytes
    price: int

    kind = Kind.ORDER_EXECUTED_WITH_PRICE

    def __post_init__(self):
        _check_header(self)
        _check_u("order_ref", self.order_ref, 64)
        _check_u("executed_shares", self.executed_shares, 32, positive=True)
        _check_u("match_number", self.match_number, 64)
        _check_u("price", self.price, 32, positive=True)
        if len(self.printable) != 1:
            raise InvalidMessage("printable must be a single byte")


@dataclass(frozen=True)
class OrderCancel:
    stock_locate: int
    tracking: int
    timestamp_ns: int
    order_ref: int
    cancelled_shares: int

    kind = Kind.ORDER_CANCEL

    def __post_init__(self):
        _check_header(self)
        _check_u("order_ref", self.order_ref, 64)
        _check_u("cancelled_shares", self.cancelled_shares, 32, positive=True)


@dataclass(frozen=True)
class OrderDelete:
    stock_locate: int
    tracking: int
    timestamp_ns: int
    order_ref: int

    kind = Kind.ORDER_DELETE

    def __post_init__(self):
        _check_header(self)
        _check_u("order_ref", self.order_ref, 64)


@dataclass(frozen=True)
class OrderReplace:
    stock_locate: int
    tracking: int
    timestamp_ns: int
    order_ref: int
    new_order_ref: int
    shares: int
    price: int

    kind = Kind.ORDER_REPLACE

    def __post_init__(self):
        _check_header(self)
        _check_u("order_ref", self.order_ref, 64)
        _check_u("new_order_ref", self.new_order_ref, 64)
        _check_u("shares", self.shares, 32, positive=True)
        _check_u("price", self.price, 32, positive=True)


@dataclass(frozen=True)
class Trade:
    stock_locate: int
    tracking: int
    timestamp_ns: int
    order_ref: int
    side: Side
    shares: int
    symbol_raw: bytes
    price: int
    match_number: int = 0

    kind = Kind.TRADE

    def __post_init__(self):
        _check_header(self)
        _check_u("order_ref", self.order_ref, 64)
        _check_u("shares", self.shares, 32, positive=True)
        _check_u("price", self.price, 32, positive=True)
        _check_u("match_number", self.match_number, 64)
        _check_symbol(self.symbol_raw)

    @property
    def symbol(self) -> str:
        return self.symbol_raw.decode("ascii").strip()


ItchMessage = (
    SystemEvent
    | AddOrder
    | OrderExecuted
    | OrderExecutedWithPrice
    | OrderCancel
    | OrderDelete
    | OrderReplace
    | Trade
)

# Layout after the common 11-byte header ("c H H 6s").
_HEADER = struct.Struct(">cHH6s")
_BODIES = {
    b"S": struct.Struct(">c"),
    b"A": struct.Struct(">Qc I 8s I"),
    b"F": struct.Struct(">Qc I 8s I 4s"),
    b"E": struct.Struct(">Q I Q"),
    b"C": struct.Struct(">Q I Q c I"),
    b"X": struct.Struct(">Q I"),
    b"D": struct.Struct(">Q"),
    b"U": struct.Struct(">Q Q I I"),
    b"P": struct.Struct(">Qc I 8s I Q"),
}
MESSAGE_LENGTHS = {code: _HEADER.size + s.size for code, s in _BODIES.items()}


def _side(raw: bytes) -> Side:
    try:
        return Side(raw)
    except ValueError:
        raise InvalidSide(f"side byte {raw!r} is not 'B' or 'S'") from None


def parse_message(body: bytes) -> ItchMessage:
    """Decode one message body (no length prefix).

    Only the fixed length for the type code is read; trailing bytes are ignored.
    """
    if not body:
        raise TruncatedMessage("empty message body")
    code = bytes(body[:1])
    layout = _BODIES.get(code)
    if layout is None:
        raise UnknownType(code)
    need = MESSAGE_LENGTHS[code]
    if len(body) < need:
        raise TruncatedMessage(f"type {code!r} needs {need} bytes, got {len(body)}")
    _, locate, tracking, ts = _HEADER.unpack_from(body, 0)
    head = (locate, tracking, int.from_bytes(ts, "big"))
    f = layout.unpack_from(body, _HEADER.size)

    if code == b"S":
        return SystemEvent(*head, event_code=f[0])
    if code == b"A":
        return AddOrder(*head, order_ref=f[0], side=_side(f[1]), shares=f[2],
                        symbol_raw=f[3], price=f[4])
    if code == b"F":
        return AddOrder(*head, order_ref=f[0], side=_side(f[1]), shares=f[2],
                        symbol_raw=f[3], price=f[4], mpid=f[5])
    if code == b"E":
        return OrderExecuted(*head, order_ref=f[0], executed_shares=f[1], match_number=f[2])
    if code == b"C":
        return OrderExecutedWithPrice(*head, order_ref=f[0], executed_shares=f[1],
                                      match_number=f[2], printable=f[3], price=f[4])
    if code == b"X":
        return OrderCancel(*head, order_ref=f[0], cancelled_shares=f[1])
    if code == b"D":
        return OrderDelete(*head, order_ref=f[0])
    if code == b"U":
        return OrderReplace(*head, order_ref=f[0], new_order_ref=f[1], shares=f[2], price=f[3])
    return Trade(*head, order_ref=f[0], side=_side(f[1]), shares=f[2], symbol_raw=f[3],
                 price=f[4], match_number=f[5])


def encode_message(msg: ItchMessage) -> bytes:
    code = msg.kind.value
    head = _HEADER.pack(code, msg.stock_locate, msg.tracking, msg.timestamp_ns.to_bytes(6, "big"))
    layout = _BODIES[code]
    if code == b"S":
        fields = (msg.event_code,)
    elif code == b"A":
        fields = (msg.order_ref, msg.side.value, msg.shares, msg.symbol_raw, msg.price)
    elif code == b"F":
        fields = (msg.order_ref, msg.side.value, msg.shares, msg.symbol_raw, msg.price, msg.mpid)
    elif code == b"E":
        fields = (msg.order_ref, msg.executed_shares, msg.match_number)
    elif code == b"C":
        fields = (msg.order_ref, msg.executed_shares, msg.match_number, msg.printable, msg.price)
    elif code == b"X":
        fields = (msg.order_ref, msg.cancelled_shares)
    elif code == b"D":
        fields = (msg.order_ref,)
    elif code == b"U":
        fields = (msg.order_ref, msg.new_order_ref, msg.shares, msg.price)
    else:
        fields = (msg.order_ref, msg.side.value, msg.shares, msg.symbol_raw, msg.price,
                  msg.match_number)
    return head + layout.pack(*fields)


def pad_symbol(symbol: str) -> bytes:
    return symbol.encode("ascii").ljust(8)[:8]


@dataclass
class StreamStats:
    messages: int = 0
    skipped: int = 0
    bytes_read: int = 0
    skipped_by_type: dict = field(default_factory=dict)


def stream_messages(reader: BinaryIO, stats: StreamStats | None = None) -> Iterator[ItchMessage]:
    """Yield messages from a length-prefixed ITCH stream.

    Unsupported types are skipped and counted in ``stats``.  A length prefix
    that runs past the end of the stream raises FramingError after all
    complete messages before it have been yielded.
    """
    if stats is None:
        stats = StreamStats()
    while True:
        prefix = reader.read(2)
        if not prefix:
            return
        if len(prefix) < 2:
            raise FramingError(f"dangling length byte at offset {stats.bytes_read}")
        (length,) = struct.unpack(">H", prefix)
        body = reader.read(length)
        if len(body) < length:
            raise FramingError(
                f"message at offset {stats.bytes_read} declares {length} bytes, "
                f"only {len(body)} remain"
            )
        stats.bytes_read += 2 + length
        code = body[:1]
        if code not in _BODIES:
            stats.skipped += 1
            stats.skipped_by_type[code] = stats.skipped_by_type.get(code, 0) + 1
            continue
        stats.messages += 1
        yield parse_message(body)


def frame(body: bytes) -> bytes:
    return struct.pack(">H", len(body)) + body


def write_messages(writer: BinaryIO, messages) -> int:
    n = 0
    for msg in messages:
        n += writer.write(frame(encode_message(msg)))
    return n
