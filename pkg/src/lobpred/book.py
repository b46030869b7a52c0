"""Order book reconstruction from ITCH events and top-of-book snapshots.

Snapshot CSV layout (one row per observation, 41 columns)::

    ts_ns,ask_px_1,ask_sz_1,bid_px_1,bid_sz_1,...,ask_px_10,ask_sz_10,bid_px_10,bid_sz_10

Prices are integers in 1/10000 USD, sizes in shares.  Levels beyond the
book's depth are padded with price 0 / size 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from sortedcontainers import SortedDict

from .itch import (
    AddOrder,
    ItchMessage,
    OrderCancel,
    OrderDelete,
    OrderExecuted,
    OrderExecutedWithPrice,
    OrderReplace,
    Side,
    SystemEvent,
    Trade,
)

DEPTH = 10
MARKET_OPEN_NS = (9 * 3600 + 30 * 60) * 10**9
MARKET_CLOSE_NS = 16 * 3600 * 10**9

CSV_HEADER = ["ts_ns"] + [
    f"{name}_{lvl}"
    for lvl in range(1, DEPTH + 1)
    for name in ("ask_px", "ask_sz", "bid_px", "bid_sz")
]


class BookError(ValueError):
    pass


class UnknownOrderRef(BookError):
    pass


class DuplicateOrderRef(BookError):
    pass


class OverExecution(BookError):
    pass


class CrossedBook(BookError):
    pass


@dataclass(frozen=True)
class BookSnapshot:
    timestamp_ns: int
    ask_px: tuple[int, ...]
    ask_sz: tuple[int, ...]
    bid_px: tuple[int, ...]
    bid_sz: tuple[int, ...]
    valid_levels_ask: int
    valid_levels_bid: int

    @property
    def depth(self) -> int:
        return len(self.ask_px)

    def to_row(self) -> list[int]:
        row = [self.timestamp_ns]
        for i in range(self.depth):
            row += [self.ask_px[i], self.ask_sz[i], self.bid_px[i], self.bid_sz[i]]
        return row

    @classmethod
    def from_row(cls, row: Sequence[int]) -> "BookSnapshot":
        row = [int(v) for v in row]
        levels = (len(row) - 1) // 4
        ask_px = tuple(row[1 + 4 * i] for i in range(levels))
        ask_sz = tuple(row[2 + 4 * i] for i in range(levels))
        bid_px = tuple(row[3 + 4 * i] for i in range(levels))
        bid_sz = tuple(row[4 + 4 * i] for i in range(levels))
        return cls(
            row[0], ask_px, ask_sz, bid_px, bid_sz,
            valid_levels_ask=sum(1 for v in ask_sz if v > 0),
            valid_levels_bid=sum(1 for v in bid_sz if v > 0),
        )


@dataclass(frozen=True)
class BookChange:
    bid: bool = False
    ask: bool = False

    @property
    def top_changed(self) -> bool:
        return self.bid or self.ask


@dataclass
class _Order:
    side: Side
    price: int
    shares: int


class OrderBook:
    """Full-depth book keyed by order reference.

    ``bids`` and ``asks`` map price -> aggregate shares and iterate best
    price first.
    """

    def __init__(self, depth: int = DEPTH):
        self.depth = depth
        self.orders: dict[int, _Order] = {}
        self.bids: SortedDict = SortedDict(lambda p: -p)
        self.asks: SortedDict = SortedDict()

    def _ladder(self, side: Side) -> SortedDict:
        return self.bids if side is Side.BID else self.asks

    def best_bid(self) -> int | None:
        return self.bids.keys()[0] if self.bids else None

    def best_ask(self) -> int | None:
        return self.asks.keys()[0] if self.asks else None

    def _in_top(self, ladder: SortedDict, price: int) -> bool:
        return ladder.bisect_left(price) < self.depth

    def _check_cross(self, side: Side, price: int) -> None:
        if side is Side.BID:
            ask = self.best_ask()
            if ask is not None and price >= ask:
                raise CrossedBook(f"bid {price} would cross best ask {ask}")
        else:
            bid = self.best_bid()
            if bid is not None and price <= bid:
                raise CrossedBook(f"ask {price} would cross best bid {bid}")

    def _add(self, ref: int, side: Side, price: int, shares: int) -> bool:
        ladder = self._ladder(side)
        self.orders[ref] = _Order(side, price, shares)
        ladder[price] = ladder.get(price, 0) + shares
        return self._in_top(ladder, price)

    def _reduce(self, ref: int, shares: int) -> tuple[Side, bool]:
        order = self.orders[ref]
        ladder = self._ladder(order.side)
        touched = self._in_top(ladder, order.price)
        order.shares -= shares
        if order.shares == 0:
            del self.orders[ref]
        left = ladder[order.price] - shares
        if left == 0:
            del ladder[order.price]
        else:
            ladder[order.price] = left
        return order.side, touched

    def _lookup(self, ref: int) -> _Order:
        try:
            return self.orders[ref]
        except KeyError:
            raise UnknownOrderRef(f"order_ref {ref} not in book") from None

    def apply(self, msg: ItchMessage) -> BookChange:
        """Apply one event; report which sides' top-``depth`` region changed.

        All validation happens before mutation, so a raised error leaves the
        book untouched.
        """
        if isinstance(msg, AddOrder):
            if msg.order_ref in self.orders:
                raise DuplicateOrderRef(f"order_ref {msg.order_ref} already live")
            self._check_cross(msg.side, msg.price)
            hit = self._add(msg.order_ref, msg.side, msg.price, msg.shares)
            return BookChange(bid=hit and msg.side is Side.BID, ask=hit and msg.side is Side.ASK)

        if isinstance(msg, (OrderExecuted, OrderExecutedWithPrice, OrderCancel)):
            order = self._lookup(msg.order_ref)
            n = msg.cancelled_shares if isinstance(msg, OrderCancel) else msg.executed_shares
            if n > order.shares:
                raise OverExecution(
                    f"order_ref {msg.order_ref}: {n} shares requested, {order.shares} remain"
                )
            side, hit = self._reduce(msg.order_ref, n)
            return BookChange(bid=hit and side is Side.BID, ask=hit and side is Side.ASK)

        if isinstance(msg, OrderDelete):
            order = self._lookup(msg.order_ref)
            side, hit = self._reduce(msg.order_ref, order.shares)
            return BookChange(bid=hit and side is Side.BID, ask=hit and side is Side.ASK)

        if isinstance(msg, OrderReplace):
            old = self._lookup(msg.order_ref)
            if msg.new_order_ref in self.orders and msg.new_order_ref != msg.order_ref:
                raise DuplicateOrderRef(f"order_ref {msg.new_order_ref} already live")
            side, old_shares = old.side, old.shares
            self._check_cross(side, msg.price)
            _, hit_old = self._reduce(msg.order_ref, old_shares)
            hit_new = self._add(msg.new_order_ref, side, msg.price, msg.shares)
            hit = hit_old or hit_new
            return BookChange(bid=hit and side is Side.BID, ask=hit and side is Side.ASK)

        if isinstance(msg, (Trade, SystemEvent)):
            return BookChange()
        raise TypeError(f"not an ITCH message: {msg!r}")

    def snapshot(self, timestamp_ns: int, depth: int | None = None) -> BookSnapshot:
        return snapshot_top(self, timestamp_ns, depth or self.depth)


def snapshot_top(book: OrderBook, timestamp_ns: int, depth: int = DEPTH) -> BookSnapshot:
    asks = list(book.asks.items()[:depth])
    bids = list(book.bids.items()[:depth])
    pad = [(0, 0)] * depth
    asks_p = (asks + pad)[:depth]
    bids_p = (bids + pad)[:depth]
    return BookSnapshot(
        timestamp_ns,
        tuple(p for p, _ in asks_p),
        tuple(q for _, q in asks_p),
        tuple(p for p, _ in bids_p),
        tuple(q for _, q in bids_p),
        valid_levels_ask=len(asks),
        valid_levels_bid=len(bids),
    )


@dataclass
class ReconstructionStats:
    messages: int = 0
    applied: int = 0
    snapshots: int = 0


def iter_snapshots(
    messages: Iterable[ItchMessage],
    symbol: str,
    book: OrderBook | None = None,
    stats: ReconstructionStats | None = None,
) -> Iterator[BookSnapshot]:
    """Replay ``messages`` for ``symbol``, yielding a snapshot per top-changing event
    inside regular trading hours.

    Messages for other instruments are ignored by stock_locate: the locate
    codes of ``symbol`` are learned from its Add/Trade messages.
    """
    book = book if book is not None else OrderBook()
    stats = stats if stats is not None else ReconstructionStats()
    locates: set[int] = set()
    for i, msg in enumerate(messages):
        stats.messages += 1
        if isinstance(msg, (AddOrder, Trade)):
            if msg.symbol != symbol:
                continue
            locates.add(msg.stock_locate)
        elif msg.stock_locate not in locates:
            continue
        try:
            change = book.apply(msg)
        except BookError as exc:
            raise type(exc)(f"message #{i} ({msg.kind.name}): {exc}") from exc
        stats.applied += 1
        if change.top_changed and MARKET_OPEN_NS <= msg.timestamp_ns < MARKET_CLOSE_NS:
            stats.snapshots += 1
            yield book.snapshot(msg.timestamp_ns)


def reconstruct(messages: Iterable[ItchMessage], symbol: str,
                book: OrderBook | None = None) -> list[BookSnapshot]:
    return list(iter_snapshots(messages, symbol, book))


def snapshots_to_array(snaps: Iterable[BookSnapshot]) -> np.ndarray:
    rows = [s.to_row() for s in snaps]
    if not rows:
        return np.empty((0, len(CSV_HEADER)), dtype=np.int64)
    return np.asarray(rows, dtype=np.int64)


def write_snapshot_csv(path: str | Path, snaps) -> int:
    """Write snapshots (BookSnapshot iterable or an (N, 41) integer array)."""
    arr = snaps if isinstance(snaps, np.ndarray) else snapshots_to_array(snaps)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        w.writerows(arr.tolist())
    return len(arr)


def read_snapshot_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected snapshot CSV header")
        arr = np.loadtxt(fh, delimiter=",", dtype=np.int64, ndmin=2)
    if arr.size == 0:
        return np.empty((0, len(CSV_HEADER)), dtype=np.int64)
    return arr
