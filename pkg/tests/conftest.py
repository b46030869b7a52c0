import numpy as np

from lobpred.book import MARKET_OPEN_NS
from lobpred.itch import (
    AddOrder,
    OrderCancel,
    OrderDelete,
    OrderExecuted,
    OrderExecutedWithPrice,
    OrderReplace,
    Side,
    SystemEvent,
    Trade,
    pad_symbol,
)

SYMBOL = pad_symbol("AAPL")
MID = 1_500_000
TICK = 100


class EventGen:
    """Random valid event stream with its own shadow order map.

    Bids rest strictly below ``MID``, asks strictly above, so the book can
    never cross.  ``live`` is maintained independently of OrderBook and
    serves as the from-scratch oracle.
    """

    def __init__(self, seed, levels=30, locate=7):
        self.rng = np.random.default_rng(seed)
        self.levels = levels
        self.locate = locate
        self.live = {}
        self.next_ref = 1
        self.ts = MARKET_OPEN_NS

    def _price(self, side):
        k = int(self.rng.integers(1, self.levels + 1))
        return MID - k * TICK if side is Side.BID else MID + k * TICK

    def _head(self):
        self.ts += int(self.rng.integers(1, 1000))
        return dict(stock_locate=self.locate, tracking=0, timestamp_ns=self.ts)

    def next(self):
        r = self.rng.random()
        if not self.live or r < 0.4:
            side = Side.BID if self.rng.random() < 0.5 else Side.ASK
            ref, self.next_ref = self.next_ref, self.next_ref + 1
            shares = int(self.rng.integers(1, 500))
            price = self._price(side)
            self.live[ref] = [side, price, shares]
            mpid = b"ABCD" if self.rng.random() < 0.2 else None
            return AddOrder(**self._head(), order_ref=ref, side=side, shares=shares,
                            symbol_raw=SYMBOL, price=price, mpid=mpid)
        refs = list(self.live)
        ref = refs[int(self.rng.integers(len(refs)))]
        side, price, shares = self.live[ref]
        if r < 0.55:
            n = int(self.rng.integers(1, shares + 1))
            self._take(ref, n)
            return OrderExecuted(**self._head(), order_ref=ref, executed_shares=n, match_number=ref)
        if r < 0.62:
            n = int(self.rng.integers(1, shares + 1))
            self._take(ref, n)
            return OrderExecutedWithPrice(**self._head(), order_ref=ref, executed_shares=n,
                                          match_number=ref, printable=b"Y", price=price)
        if r < 0.75:
            n = int(self.rng.integers(1, shares + 1))
            self._take(ref, n)
            return OrderCancel(**self._head(), order_ref=ref, cancelled_shares=n)
        if r < 0.85:
            del self.live[ref]
            return OrderDelete(**self._head(), order_ref=ref)
        if r < 0.95:
            new, self.next_ref = self.next_ref, self.next_ref + 1
            del self.live[ref]
            new_price = self._price(side)
            new_shares = int(self.rng.integers(1, 500))
            self.live[new] = [side, new_price, new_shares]
            return OrderReplace(**self._head(), order_ref=ref, new_order_ref=new,
                                shares=new_shares, price=new_price)
        if r < 0.98:
            return Trade(**self._head(), order_ref=0, side=Side.BID, shares=10,
                         symbol_raw=SYMBOL, price=MID, match_number=1)
        return SystemEvent(**self._head(), event_code=b"Q")

    def _take(self, ref, n):
        self.live[ref][2] -= n
        if self.live[ref][2] == 0:
            del self.live[ref]

    def ladders(self):
        """(bids, asks) as best-first lists of (price, shares), aggregated from scratch."""
        agg = {Side.BID: {}, Side.ASK: {}}
        for side, price, shares in self.live.values():
            agg[side][price] = agg[side].get(price, 0) + shares
        bids = sorted(agg[Side.BID].items(), key=lambda kv: -kv[0])
        asks = sorted(agg[Side.ASK].items())
        return bids, asks


# -- acceptance report -------------------------------------------------------------

_VERDICTS = {}


def record(number, ok, detail):
    """Remember one criterion's verdict for the end-of-run summary."""
    _VERDICTS[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[number])
