"""Shared domain vocabulary for the shop / staging / ERP stack.

Money is integer minor units only (default kurus); accounting balance
checks rely on exact integer arithmetic, so floats never appear in any
amount. All timestamps are logical (monotone per-process integers) so
simulated runs are reproducible. Deleted products become tombstones
(active=False) instead of being removed, which keeps delete events
replayable downstream.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable

DEFAULT_CURRENCY = "TRY"

_CURRENCY_RE = re.compile(r"^[A-Z]{3}$")
_SKU_RE = re.compile(r"^[A-Z0-9-]{1,40}$")


class ModelError(ValueError):
    """Invalid domain value or misuse of a domain operation."""


class CurrencyMismatchError(ModelError):
    """Arithmetic attempted between two different currencies."""


class UnknownCounterError(ModelError):
    """Counter name outside the known document-id counters."""


def validate_sku(sku: str) -> str:
    if not isinstance(sku, str) or not _SKU_RE.match(sku):
        raise ModelError(f"invalid sku: {sku!r}")
    return sku


@dataclass(frozen=True)
class Money:
    """An exact amount in minor currency units (e.g. kurus)."""

    amount_minor: int
    currency: str = DEFAULT_CURRENCY

    def __post_init__(self) -> None:
        if not isinstance(self.amount_minor, int) or isinstance(self.amount_minor, bool):
            raise ModelError(f"amount_minor must be int, got {self.amount_minor!r}")
        if not _CURRENCY_RE.match(self.currency):
            raise ModelError(f"invalid currency code: {self.currency!r}")

    def _check(self, other: "Money") -> None:
        if not isinstance(other, Money):
            raise ModelError(f"expected Money, got {other!r}")
        if other.currency != self.currency:
            raise CurrencyMismatchError(f"{self.currency} vs {other.currency}")

    def __add__(self, other: "Money") -> "Money":
        self._check(other)
        return Money(self.amount_minor + other.amount_minor, self.currency)

    def __sub__(self, other: "Money") -> "Money":
        self._check(other)
        return Money(self.amount_minor - other.amount_minor, self.currency)

    def scaled(self, qty: int) -> "Money":
        if not isinstance(qty, int) or isinstance(qty, bool):
            raise ModelError(f"qty must be int, got {qty!r}")
        return Money(self.amount_minor * qty, self.currency)

    def __lt__(self, other: "Money") -> bool:
        self._check(other)
        return self.amount_minor < other.amount_minor

    def __le__(self, other: "Money") -> bool:
        self._check(other)
        return self.amount_minor <= other.amount_minor

    @property
    def is_zero(self) -> bool:
        return self.amount_minor == 0


@dataclass(frozen=True)
class VatRate:
    """Exact tax ratio numerator/denominator, default 18/100."""

    numerator: int = 18
    denominator: int = 100

    def __post_init__(self) -> None:
        if self.denominator <= 0:
            raise ModelError("vat denominator must be positive")
        if self.numerator < 0 or self.numerator > self.denominator:
            raise ModelError("vat rate must be within [0, 1]")


@dataclass(frozen=True)
class GrossBreakdown:
    vat_amount: Money
    gross: Money


def gross_of(net: Money, vat: VatRate) -> GrossBreakdown:
    """Tax and gross for a net amount, rounding the tax half-up.

    Computed entirely in integers: vat = round_half_up(net * num / den).
    """
    if net.amount_minor < 0:
        raise ModelError("gross_of requires a non-negative net amount")
    raw = net.amount_minor * vat.numerator
    vat_minor = (2 * raw + vat.denominator) // (2 * vat.denominator)
    vat_amount = Money(vat_minor, net.currency)
    return GrossBreakdown(vat_amount=vat_amount, gross=net + vat_amount)


class CategoryTag(Enum):
    """Product assortment categories used to weight generated catalogs."""

    DAILY_FOOD = "DAILY_FOOD"
    HOUSEHOLD = "HOUSEHOLD"
    MEDICINE = "MEDICINE"
    CLOTHES_SPORTS = "CLOTHES_SPORTS"
    COMPUTER = "COMPUTER"
    MOBILE = "MOBILE"
    TELECOM = "TELECOM"
    HOLIDAY = "HOLIDAY"
    TRAVEL_CAR = "TRAVEL_CAR"
    CINEMA = "CINEMA"
    MOVIES_MUSIC = "MOVIES_MUSIC"
    BOOKS = "BOOKS"
    E_LEARNING = "E_LEARNING"
    GAMES_SOFTWARE = "GAMES_SOFTWARE"


class ProblemLabel(Enum):
    """Order problem annotations; a record may carry any subset."""

    ORDER_OR_PAYMENT = "ORDER_OR_PAYMENT"
    WARRANTY_INFO = "WARRANTY_INFO"
    LATE_DELIVERY = "LATE_DELIVERY"
    UNEXPECTED_COSTS = "UNEXPECTED_COSTS"
    WRONG_OR_DAMAGED = "WRONG_OR_DAMAGED"
    FRAUD = "FRAUD"
    COMPLAINT_COMPENSATION = "COMPLAINT_COMPENSATION"
    FOREIGN_SITE = "FOREIGN_SITE"
    OTHER = "OTHER"


class ChangeKind(Enum):
    CREATE = "CREATE"
    UPDATE = "UPDATE"
    DELETE = "DELETE"


class JournalSide(Enum):
    DEBIT = "DEBIT"
    CREDIT = "CREDIT"


@dataclass(frozen=True)
class Product:
    """A product master row. version increases on every mutation."""

    sku: str
    name: str
    category: CategoryTag
    net_price: Money
    vat: VatRate
    active: bool = True
    version: int = 1
    stock_qty: int = 0

    def __post_init__(self) -> None:
        validate_sku(self.sku)
        if self.net_price.amount_minor < 0:
            raise ModelError(f"negative net_price for {self.sku}")
        if self.stock_qty < 0:
            raise ModelError(f"negative stock for {self.sku}")
        if self.version < 1:
            raise ModelError(f"version must be >= 1 for {self.sku}")

    def tombstone(self) -> "Product":
        return replace(self, active=False, version=self.version + 1)


@dataclass(frozen=True)
class ChangeEvent:
    """One entry of the product change log; seq values are dense."""

    seq: int
    kind: ChangeKind
    product: Product

    def __post_init__(self) -> None:
        if self.seq < 1:
            raise ModelError("change seq must be >= 1")


@dataclass(frozen=True)
class SalesLine:
    sku: str
    qty: int
    unit_net_price: Money


@dataclass(frozen=True)
class SalesRecord:
    """A shop checkout result; record_id is the end-to-end idempotency key."""

    record_id: str
    customer_id: str
    lines: tuple[SalesLine, ...]
    created_at: int
    problem_labels: frozenset[ProblemLabel] = frozenset()

    def __post_init__(self) -> None:
        if not self.record_id:
            raise ModelError("record_id must be non-empty")


@dataclass(frozen=True)
class DocLine:
    """A priced document line with its exact tax breakdown."""

    sku: str
    qty: int
    unit_net_price: Money
    vat: VatRate
    net: Money
    vat_amount: Money
    gross: Money


@dataclass(frozen=True)
class DocTotals:
    net: Money
    vat: Money
    gross: Money


@dataclass(frozen=True)
class SalesOrder:
    doc_id: str
    predecessor: str  # record_id
    lines: tuple[DocLine, ...]
    totals: DocTotals


@dataclass(frozen=True)
class Delivery:
    doc_id: str
    predecessor: str  # order_id
    lines: tuple[DocLine, ...]
    totals: DocTotals


@dataclass(frozen=True)
class Invoice:
    doc_id: str
    predecessor: str  # delivery_id
    lines: tuple[DocLine, ...]
    totals: DocTotals


@dataclass(frozen=True)
class JournalLine:
    account: str
    side: JournalSide
    amount: Money


@dataclass(frozen=True)
class AccountingDocument:
    """Balanced double-entry posting: sum(DEBIT) == sum(CREDIT) per currency."""

    doc_id: str
    source: str  # invoice_id, or for reversals the reversed invoice_id
    lines: tuple[JournalLine, ...]

    def balances(self) -> bool:
        per_currency: dict[str, int] = {}
        for line in self.lines:
            signed = line.amount.amount_minor
            if line.side is JournalSide.CREDIT:
                signed = -signed
            per_currency[line.amount.currency] = (
                per_currency.get(line.amount.currency, 0) + signed
            )
        return all(v == 0 for v in per_currency.values())


def price_lines(lines: Iterable[SalesLine], vat_of: dict[str, VatRate]) -> tuple[tuple[DocLine, ...], DocTotals]:
    """Price sales lines into document lines, rounding tax per line.

    Document totals are the sums of the rounded line amounts, so the
    same rule holds at both levels: gross = net + vat exactly.
    """
    priced: list[DocLine] = []
    for line in lines:
        net = line.unit_net_price.scaled(line.qty)
        breakdown = gross_of(net, vat_of[line.sku])
        priced.append(
            DocLine(
                sku=line.sku,
                qty=line.qty,
                unit_net_price=line.unit_net_price,
                vat=vat_of[line.sku],
                net=net,
                vat_amount=breakdown.vat_amount,
                gross=breakdown.gross,
            )
        )
    currency = priced[0].net.currency
    total = DocTotals(
        net=Money(sum(p.net.amount_minor for p in priced), currency),
        vat=Money(sum(p.vat_amount.amount_minor for p in priced), currency),
        gross=Money(sum(p.gross.amount_minor for p in priced), currency),
    )
    return tuple(priced), total


KNOWN_COUNTERS = ("SHOP", "ORD", "DLV", "INV", "ACC", "RET")


class CounterSet:
    """Dense per-type document-id counters.

    Counters can be floored from replayed journals via observe(), so a
    restart after "ORD-7" hands out "ORD-8" even without a snapshot.
    """

    def __init__(self, names: tuple[str, ...] = KNOWN_COUNTERS) -> None:
        self._names = names
        self._values = {name: 0 for name in names}

    def _require(self, name: str) -> None:
        if name not in self._values:
            raise UnknownCounterError(f"unknown counter: {name!r}")

    def next_doc_id(self, counter_name: str) -> str:
        self._require(counter_name)
        self._values[counter_name] += 1
        return f"{counter_name}-{self._values[counter_name]}"

    def peek(self, counter_name: str) -> int:
        self._require(counter_name)
        return self._values[counter_name]

    def observe(self, counter_name: str, n: int) -> None:
        """Raise the floor to n (used when replaying journals)."""
        self._require(counter_name)
        if n > self._values[counter_name]:
            self._values[counter_name] = n

    def observe_doc_id(self, doc_id: str) -> None:
        prefix, _, num = doc_id.rpartition("-")
        self.observe(prefix, int(num))

    def snapshot(self) -> dict[str, int]:
        return dict(self._values)

    def load(self, snapshot: dict[str, int]) -> None:
        for name, n in snapshot.items():
            if name in self._values:
                self.observe(name, int(n))


def doc_number(doc_id: str) -> int:
    """Numeric part of an id like "ORD-17"."""
    return int(doc_id.rpartition("-")[2])


class LogicalClock:
    """Monotone per-process integer clock; never wall time."""

    def __init__(self, start: int = 0) -> None:
        self._now = start

    def tick(self) -> int:
        self._now += 1
        return self._now

    def now(self) -> int:
        return self._now

    def advance_to(self, t: int) -> None:
        if t > self._now:
            self._now = t


# --- canonical JSON encoding -------------------------------------------------
#
# One UTF-8 JSON object per line; field names match the dataclass fields.
# Money is always {"amount_minor": int, "currency": "TRY"}.


def money_to_json(m: Money) -> dict:
    return {"amount_minor": m.amount_minor, "currency": m.currency}


def money_from_json(obj: dict) -> Money:
    return Money(int(obj["amount_minor"]), str(obj["currency"]))


def vat_to_json(v: VatRate) -> dict:
    return {"numerator": v.numerator, "denominator": v.denominator}


def vat_from_json(obj: dict) -> VatRate:
    return VatRate(int(obj["numerator"]), int(obj["denominator"]))


def product_to_json(p: Product) -> dict:
    return {
        "sku": p.sku,
        "name": p.name,
        "category": p.category.value,
        "net_price": money_to_json(p.net_price),
        "vat": vat_to_json(p.vat),
        "active": p.active,
        "version": p.version,
        "stock_qty": p.stock_qty,
    }


def product_from_json(obj: dict) -> Product:
    return Product(
        sku=obj["sku"],
        name=obj["name"],
        category=CategoryTag(obj["category"]),
        net_price=money_from_json(obj["net_price"]),
        vat=vat_from_json(obj["vat"]),
        active=bool(obj["active"]),
        version=int(obj["version"]),
        stock_qty=int(obj["stock_qty"]),
    )


def change_event_to_json(e: ChangeEvent) -> dict:
    return {"seq": e.seq, "kind": e.kind.value, "product": product_to_json(e.product)}


def change_event_from_json(obj: dict) -> ChangeEvent:
    return ChangeEvent(
        seq=int(obj["seq"]),
        kind=ChangeKind(obj["kind"]),
        product=product_from_json(obj["product"]),
    )


def sales_record_to_json(r: SalesRecord) -> dict:
    return {
        "record_id": r.record_id,
        "customer_id": r.customer_id,
        "lines": [
            {"sku": l.sku, "qty": l.qty, "unit_net_price": money_to_json(l.unit_net_price)}
            for l in r.lines
        ],
        "created_at": r.created_at,
        "problem_labels": sorted(label.value for label in r.problem_labels),
    }


def sales_record_from_json(obj: dict) -> SalesRecord:
    return SalesRecord(
        record_id=obj["record_id"],
        customer_id=obj["customer_id"],
        lines=tuple(
            SalesLine(l["sku"], int(l["qty"]), money_from_json(l["unit_net_price"]))
            for l in obj["lines"]
        ),
        created_at=int(obj["created_at"]),
        problem_labels=frozenset(ProblemLabel(v) for v in obj["problem_labels"]),
    )


def _doc_line_to_json(l: DocLine) -> dict:
    return {
        "sku": l.sku,
        "qty": l.qty,
        "unit_net_price": money_to_json(l.unit_net_price),
        "vat": vat_to_json(l.vat),
        "net": money_to_json(l.net),
        "vat_amount": money_to_json(l.vat_amount),
        "gross": money_to_json(l.gross),
    }


def _doc_line_from_json(obj: dict) -> DocLine:
    return DocLine(
        sku=obj["sku"],
        qty=int(obj["qty"]),
        unit_net_price=money_from_json(obj["unit_net_price"]),
        vat=vat_from_json(obj["vat"]),
        net=money_from_json(obj["net"]),
        vat_amount=money_from_json(obj["vat_amount"]),
        gross=money_from_json(obj["gross"]),
    )


def trade_doc_to_json(doc: SalesOrder | Delivery | Invoice) -> dict:
    return {
        "doc_id": doc.doc_id,
        "predecessor": doc.predecessor,
        "lines": [_doc_line_to_json(l) for l in doc.lines],
        "totals": {
            "net": money_to_json(doc.totals.net),
            "vat": money_to_json(doc.totals.vat),
            "gross": money_to_json(doc.totals.gross),
        },
    }


def trade_doc_from_json(cls, obj: dict):
    return cls(
        doc_id=obj["doc_id"],
        predecessor=obj["predecessor"],
        lines=tuple(_doc_line_from_json(l) for l in obj["lines"]),
        totals=DocTotals(
            net=money_from_json(obj["totals"]["net"]),
            vat=money_from_json(obj["totals"]["vat"]),
            gross=money_from_json(obj["totals"]["gross"]),
        ),
    )


def acc_doc_to_json(doc: AccountingDocument) -> dict:
    return {
        "doc_id": doc.doc_id,
        "source": doc.source,
        "lines": [
            {"account": l.account, "side": l.side.value, "amount": money_to_json(l.amount)}
            for l in doc.lines
        ],
    }


def acc_doc_from_json(obj: dict) -> AccountingDocument:
    return AccountingDocument(
        doc_id=obj["doc_id"],
        source=obj["source"],
        lines=tuple(
            JournalLine(l["account"], JournalSide(l["side"]), money_from_json(l["amount"]))
            for l in obj["lines"]
        ),
    )


def dumps_line(obj: dict) -> str:
    """Canonical single-line JSON used by every journal and the trace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
